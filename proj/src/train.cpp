#include "xmodal/train.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "xmodal/dataio.hpp"
#include "xmodal/util.hpp"

namespace xmodal {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (!j.is_object()) throw std::runtime_error("train config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lr") c.lr = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "tau") c.tau = value.get<double>();
      else if (key == "lambda") c.lambda = value.get<double>();
      else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
      else if (key == "patience") c.patience = value.get<std::size_t>();
      else if (key == "recall_ks") c.recall_ks = value.get<std::vector<std::size_t>>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "rank_score") c.rank_score = rank_score_from_string(value.get<std::string>());
      else if (key == "ext_variant") {
        std::string s = value.get<std::string>();
        if (s == "summed") c.ext_variant = ExtVariant::SummedScore;
        else if (s == "two_term") c.ext_variant = ExtVariant::TwoTerm;
        else throw std::runtime_error("expected summed|two_term");
      }
      else if (key == "apply_pe") c.apply_pe = value.get<bool>();
      else if (key == "threads") c.threads = value.get<int>();
      else throw std::runtime_error("unknown field");
    } catch (const nlohmann::json::exception&) {
      throw std::runtime_error("train config: field '" + key + "' has the wrong type");
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("train config: field '" + key + "': " + e.what());
    }
  }
  if (c.lr <= 0.0) throw std::runtime_error("train config: field 'lr' must be positive");
  if (c.tau <= 0.0) throw std::runtime_error("train config: field 'tau' must be positive");
  if (c.batch_size < 2) throw std::runtime_error("train config: field 'batch_size' must be at least 2");
  if (c.max_epochs == 0) throw std::runtime_error("train config: field 'max_epochs' must be positive");
  if (c.recall_ks.empty()) throw std::runtime_error("train config: field 'recall_ks' must be non-empty");
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {
      {"lr", c.lr},
      {"weight_decay", c.weight_decay},
      {"batch_size", c.batch_size},
      {"tau", c.tau},
      {"lambda", c.lambda},
      {"max_epochs", c.max_epochs},
      {"patience", c.patience},
      {"recall_ks", c.recall_ks},
      {"seed", c.seed},
      {"rank_score", to_string(c.rank_score)},
      {"ext_variant", c.ext_variant == ExtVariant::SummedScore ? "summed" : "two_term"},
      {"apply_pe", c.apply_pe},
      {"threads", c.threads},
  };
}

AdamState make_adam_state(const HeadParams& params) {
  AdamState st;
  st.m.resize(kNumParamBlocks);
  st.v.resize(kNumParamBlocks);
  for (std::size_t b = 0; b < kNumParamBlocks; ++b) {
    std::size_t size = param_block(params, b).size();
    st.m[b].assign(size, 0.0);
    st.v[b].assign(size, 0.0);
  }
  return st;
}

void adam_step(HeadParams& params, const GradientSet& grads, AdamState& state, double lr,
               double weight_decay) {
  ++state.t;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  for (std::size_t b = 0; b < kNumParamBlocks; ++b) {
    auto p = param_block(params, b);
    auto g = param_block(grads, b);
    auto& m = state.m[b];
    auto& v = state.v[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= lr * weight_decay * p[i];  // decoupled decay before the update
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      double m_hat = m[i] / bc1;
      double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
    }
  }
}

FitResult fit(const Corpus& train, const Corpus& val, const TrainConfig& config) {
  if (train.dim != val.dim) throw std::runtime_error("shape mismatch: train/val dim differ");
  if (train.studies.size() < 2) throw std::runtime_error("fit: training corpus needs at least 2 studies");
  if (val.studies.empty()) throw std::runtime_error("fit: empty validation corpus");

  std::vector<StudyContext> train_ctx;
  train_ctx.reserve(train.studies.size());
  for (const Study& s : train.studies) train_ctx.push_back(prep_study(s, config.apply_pe));
  std::vector<StudyContext> val_ctx;
  val_ctx.reserve(val.studies.size());
  for (const Study& s : val.studies) val_ctx.push_back(prep_study(s, config.apply_pe));

  HeadParams params = init_head_params(train.dim, config.seed, config.lambda, config.tau);
  AdamState adam = make_adam_state(params);
  LossOptions opts;
  opts.ext_variant = config.ext_variant;
  opts.threads = config.threads;

  std::mt19937_64 shuffle_rng(config.seed);
  std::vector<std::size_t> order(train_ctx.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  FitResult result;
  double best_r_sum = -1.0;
  std::size_t stall = 0;

  auto snapshot_rng = [&]() {
    std::ostringstream os;
    os << shuffle_rng;
    return os.str();
  };

  // Fallback so a first-epoch divergence still yields a loadable snapshot.
  result.best.params = params;
  result.best.epoch = 0;
  result.best.r_sum = 0.0;
  result.best.rng_state = snapshot_rng();

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);

    double sum_g = 0.0, sum_e = 0.0, sum_i = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::size_t stop = std::min(order.size(), start + config.batch_size);
      if (stop - start < 2) break;  // a singleton batch has no contrastive signal
      std::vector<const StudyContext*> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&train_ctx[order[i]]);

      BackwardResult back;
      try {
        back = backward(batch, params, opts);
      } catch (const std::exception& e) {
        // an exploded forward surfaces as a non-finite score error downstream
        if (std::string(e.what()).find("non-finite") == std::string::npos) throw;
        result.diverged = true;
        result.message = "non-finite forward at epoch " + std::to_string(epoch) + ": " + e.what();
        return result;
      }
      if (!std::isfinite(back.loss.total)) {
        result.diverged = true;
        result.message = "non-finite loss at epoch " + std::to_string(epoch);
        return result;
      }
      adam_step(params, back.grads, adam, config.lr, config.weight_decay);

      double bn = static_cast<double>(batch.size());
      sum_g += back.loss.global_term * bn;
      sum_e += back.loss.external_term * bn;
      sum_i += back.loss.internal_term * bn;
      seen += batch.size();
    }
    if (seen == 0) throw std::runtime_error("fit: no usable batches (corpus too small for batch_size)");

    ScoreMatrix s = score_corpus(val_ctx, params, config.rank_score, config.threads);
    RetrievalSummary summary = retrieval_summary(s, config.recall_ks);

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss_global = sum_g / static_cast<double>(seen);
    stats.loss_external = sum_e / static_cast<double>(seen);
    stats.loss_internal = sum_i / static_cast<double>(seen);
    stats.r_sum = summary.r_sum;
    result.history.push_back(stats);
    log_debug("epoch " + std::to_string(epoch) + " r_sum " + std::to_string(summary.r_sum));

    if (summary.r_sum > best_r_sum) {
      best_r_sum = summary.r_sum;
      result.best.params = params;
      result.best.epoch = epoch;
      result.best.r_sum = summary.r_sum;
      result.best.rng_state = snapshot_rng();
      stall = 0;
    } else {
      ++stall;
    }
    if (stall >= config.patience) break;
  }
  return result;
}

namespace {

constexpr char kCkptMagic[4] = {'L', 'M', 'T', 'C'};
constexpr std::uint32_t kCkptVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct CkptReader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > size) throw std::runtime_error("truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kCkptMagic, kCkptMagic + 4);
  put_u32(buf, kCkptVersion);
  put_u32(buf, static_cast<std::uint32_t>(ck.params.dim));
  put_f64(buf, ck.params.lambda);
  put_f64(buf, ck.params.tau);
  put_u32(buf, static_cast<std::uint32_t>(ck.epoch));
  put_f64(buf, ck.r_sum);
  for (std::size_t b = 0; b < kNumParamBlocks; ++b) {
    auto span = param_block(ck.params, b);
    put_u32(buf, static_cast<std::uint32_t>(span.size()));
    for (double v : span) put_f64(buf, v);
  }
  put_u32(buf, static_cast<std::uint32_t>(ck.rng_state.size()));
  buf.insert(buf.end(), ck.rng_state.begin(), ck.rng_state.end());
  put_u64(buf, fnv1a64(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), kCkptMagic, 4) != 0) {
    throw std::runtime_error("bad magic: not a checkpoint: " + path.string());
  }
  {
    CkptReader tail{buf.data() + buf.size() - 8, 8};
    std::uint64_t stored = tail.u64();
    if (stored != fnv1a64(buf.data(), buf.size() - 8)) {
      throw std::runtime_error("checksum mismatch: " + path.string());
    }
  }

  CkptReader r{buf.data() + 4, buf.size() - 12};
  std::uint32_t version = r.u32();
  if (version != kCkptVersion) {
    throw std::runtime_error("version mismatch: checkpoint has " + std::to_string(version));
  }
  Checkpoint ck;
  std::size_t dim = r.u32();
  double lambda = r.f64();
  double tau = r.f64();
  ck.params = init_head_params(dim, 0, lambda, tau);
  ck.epoch = r.u32();
  ck.r_sum = r.f64();
  for (std::size_t b = 0; b < kNumParamBlocks; ++b) {
    auto span = param_block(ck.params, b);
    std::uint32_t count = r.u32();
    if (count != span.size()) throw std::runtime_error("checkpoint block size mismatch: " + std::string(param_block_name(b)));
    for (double& v : span) v = r.f64();
  }
  std::uint32_t rng_len = r.u32();
  r.need(rng_len);
  ck.rng_state.assign(reinterpret_cast<const char*>(r.data + r.pos), rng_len);
  return ck;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "epoch,loss_global,loss_external,loss_internal,r_sum\n";
  char buf[160];
  for (const EpochStats& e : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.loss_global,
                  e.loss_external, e.loss_internal, e.r_sum);
    out << buf;
  }
}

}  // namespace xmodal
