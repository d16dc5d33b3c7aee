// Acceptance suite: nine end-to-end scenarios, each printed as a single
// [PASS]/[FAIL] line with supporting numbers. Run without arguments for all
// nine, or pass criterion numbers (1..9) to run a subset. The process exits
// nonzero if any executed scenario fails.
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reference.hpp"
#include "testgen.hpp"
#include "xmodal/dataio.hpp"
#include "xmodal/eval.hpp"
#include "xmodal/grad.hpp"
#include "xmodal/synth.hpp"
#include "xmodal/train.hpp"
#include "xmodal/util.hpp"

using namespace xmodal;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// ------------------------------------------------------------------ c1 -----
// Analytic gradients against central differences on five seeded instances:
// 4 studies, a 2x3 grid with lateral views (6 + 6 regions), 4 tokens, dim 8.

bool c1_gradients(std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig sc;
    sc.num_studies = 4;
    sc.dim = 8;
    sc.grid = {2, 3};
    sc.num_tokens = 4;
    sc.vocab_size = 6;
    sc.concepts_per_study = 2;
    sc.noise_sigma = 0.4;
    sc.lateral_fraction = 1.0;
    sc.seed = seed;
    Corpus corpus = generate(sc);
    std::vector<StudyContext> ctx = testgen::contexts_of(corpus);
    std::vector<const StudyContext*> batch = testgen::pointers_of(ctx);
    HeadParams params = init_head_params(sc.dim, 7 * seed + 1, 10.0, 0.1);

    FdOptions fd;
    fd.step = 1e-5;
    std::vector<FdBlockReport> blocks = fd_check(batch, params, LossOptions{}, fd);
    for (const FdBlockReport& b : blocks) worst = std::max(worst, b.max_rel_err);
  }
  double secs = seconds_since(t0);
  detail = "max relative error " + fmt(worst) + " over 5 instances, 16 blocks each (" +
           fmt(secs) + " s)";
  return worst < 1e-6 && secs < 60.0;
}

// ------------------------------------------------------------------ c2 -----
// The batched forward (scores and all three loss terms) against the naive
// per-pair reference on 100 random small instances.

bool c2_oracle(std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    testgen::RandomSpec spec;
    spec.n = 2 + static_cast<std::size_t>(i % 3);
    spec.dim = 4 + static_cast<std::size_t>(i % 5);
    spec.grid = {1 + static_cast<std::size_t>(i % 2), 2 + static_cast<std::size_t>(i % 2)};
    spec.n_tokens = 3 + static_cast<std::size_t>(i % 3);
    spec.lateral_prob = 0.5;
    spec.seed = 1000 + static_cast<std::uint64_t>(i);
    Corpus corpus = testgen::random_corpus(spec);
    // positional encoding needs four-way splittable feature dims
    std::vector<StudyContext> ctx = testgen::contexts_of(corpus, spec.dim % 4 == 0);
    std::vector<const StudyContext*> batch = testgen::pointers_of(ctx);
    HeadParams params = init_head_params(spec.dim, 7 + static_cast<std::uint64_t>(i), 10.0, 0.1);

    LossOptions opts;
    BatchForward bf = batch_forward(batch, params, opts);
    ref::BatchLosses rl = ref::batch_losses(batch, params, false);
    worst = std::max(worst, rel_err(bf.loss.global_term, rl.global));
    worst = std::max(worst, rel_err(bf.loss.external_term, rl.external));
    worst = std::max(worst, rel_err(bf.loss.internal_term, rl.internal));
    worst = std::max(worst, rel_err(bf.loss.total, rl.total));

    const std::size_t n = batch.size();
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < n; ++j) {
        double g = ref::global_pair(*batch[k], *batch[j], params);
        double a = ref::pair_score(*batch[k], *batch[j], params).sum();
        worst = std::max(worst, rel_err(bf.s_global.at(k, j), g));
        worst = std::max(worst, rel_err(bf.s_agg.at(k, j), a));
      }
    }
  }
  double secs = seconds_since(t0);
  detail = "max relative deviation " + fmt(worst) + " over 100 instances (" + fmt(secs) + " s)";
  return worst <= 1e-12 && secs < 10.0;
}

// ------------------------------------------------------------------ c3 -----
// Uniform-similarity regime: a batch of 16 near-identical studies must sit at
// the contrastive floor 2*ln(16) for the pooled-alignment loss. Exact copies
// hit the floor exactly; tiny perturbations stay within 5%.

bool c3_loss_floor(std::string& detail) {
  const std::size_t n = 16;
  const double floor_val = 2.0 * std::log(static_cast<double>(n));

  testgen::RandomSpec spec;
  spec.n = 1;
  spec.dim = 8;
  spec.grid = {2, 3};
  spec.n_tokens = 4;
  spec.lateral_prob = 1.0;
  spec.token_mask_prob = 0.0;
  spec.region_zero_prob = 0.0;
  spec.seed = 31;
  Corpus base = testgen::random_corpus(spec);

  std::mt19937_64 g(77);
  auto make_batch = [&](double sigma) {
    Corpus corpus = base;
    corpus.studies.assign(n, base.studies[0]);
    for (Study& s : corpus.studies) {
      for (double& v : s.frontal.data) v += sigma * rng_normal(g);
      for (double& v : s.lateral->data) v += sigma * rng_normal(g);
      for (double& v : s.tokens.data) v += sigma * rng_normal(g);
    }
    return corpus;
  };

  HeadParams params = init_head_params(spec.dim, 5, 10.0, 0.1);
  LossOptions opts;

  Corpus exact = make_batch(0.0);
  std::vector<StudyContext> ctx_exact = testgen::contexts_of(exact);
  double g_exact =
      total_loss(testgen::pointers_of(ctx_exact), params, opts).global_term;

  Corpus jittered = make_batch(1e-3);
  std::vector<StudyContext> ctx_jit = testgen::contexts_of(jittered);
  double g_jit = total_loss(testgen::pointers_of(ctx_jit), params, opts).global_term;

  bool ok_exact = std::abs(g_exact - floor_val) < 1e-9;
  bool ok_jit = std::abs(g_jit - floor_val) <= 0.05 * floor_val;
  detail = "2*ln(16) = " + fmt(floor_val) + "; identical copies " + fmt(g_exact) +
           ", perturbed copies " + fmt(g_jit);
  return ok_exact && ok_jit;
}

// --------------------------------------------------------------- c4/c5 -----
// One shared planted-corpus training run: 250 studies (200 train / 50 val),
// dim 32, 4x4 grid, 8 tokens, noise 0.05, no laterals; batch 16, lr 5e-5.

struct PlantedRun {
  Corpus val;
  TrainConfig config;
  FitResult fitted;
  HeadParams untrained;  // the exact parameters training started from
  double fit_seconds = 0.0;
};

const PlantedRun& planted_run() {
  static PlantedRun run = [] {
    PlantedRun r;
    SynthConfig sc;
    sc.num_studies = 250;
    sc.dim = 32;
    sc.grid = {4, 4};
    sc.num_tokens = 8;
    sc.vocab_size = 30;
    sc.concepts_per_study = 3;
    sc.noise_sigma = 0.05;
    sc.lateral_fraction = 0.0;
    sc.seed = 7;
    Corpus corpus = generate(sc);
    Corpus train = corpus_slice(corpus, 0, 200, "train");
    r.val = corpus_slice(corpus, 200, 250, "val");

    r.config.batch_size = 16;
    r.config.lr = 5e-5;
    r.config.max_epochs = 50;
    r.config.patience = 10;
    r.config.seed = 1;
    r.config.threads = 1;
    r.untrained = init_head_params(train.dim, r.config.seed, r.config.lambda, r.config.tau);

    auto t0 = std::chrono::steady_clock::now();
    r.fitted = fit(train, r.val, r.config);
    r.fit_seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

bool c4_planted_retrieval(std::string& detail) {
  const PlantedRun& run = planted_run();
  std::vector<StudyContext> ctx;
  ctx.reserve(run.val.studies.size());
  for (const Study& s : run.val.studies) ctx.push_back(prep_study(s, run.config.apply_pe));

  ScoreMatrix trained =
      score_corpus(ctx, run.fitted.best.params, run.config.rank_score, 1);
  double t_i2t = recall_at_k(trained, 1, Direction::ImageToText);
  double t_t2i = recall_at_k(trained, 1, Direction::TextToImage);

  ScoreMatrix fresh = score_corpus(ctx, run.untrained, run.config.rank_score, 1);
  double u_i2t = recall_at_k(fresh, 1, Direction::ImageToText);
  double u_t2i = recall_at_k(fresh, 1, Direction::TextToImage);

  detail = "trained R@1 " + fmt(t_i2t) + "/" + fmt(t_t2i) + ", untrained " + fmt(u_i2t) + "/" +
           fmt(u_t2i) + ", best epoch " + std::to_string(run.fitted.best.epoch) + " (" +
           fmt(run.fit_seconds) + " s single-threaded)";
  return t_i2t >= 90.0 && t_t2i >= 90.0 && u_i2t <= 10.0 && u_t2i <= 10.0 &&
         !run.fitted.diverged && run.fit_seconds < 600.0;
}

double mean_cnr(const Corpus& corpus, const HeadParams& params, bool apply_pe) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const Study& study : corpus.studies) {
    if (study.grounding.empty()) continue;
    StudyContext ctx = prep_study(study, apply_pe);
    for (const GroundingRecord& rec : study.grounding) {
      GridMap map = phrase_attention(ctx, rec.token_indices, params, MapVariant::Attention);
      acc += cnr(map, rec).value;
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

bool c5_planted_grounding(std::string& detail) {
  const PlantedRun& run = planted_run();
  double trained = mean_cnr(run.val, run.fitted.best.params, run.config.apply_pe);
  double untrained = mean_cnr(run.val, run.untrained, run.config.apply_pe);
  bool ok_trained = trained >= 1.0;
  bool ok_untrained = untrained < 0.3;
  detail = "trained mean CNR " + fmt(trained) + " (>= 1.0: " + (ok_trained ? "yes" : "no") +
           "), untrained " + fmt(untrained) + " (< 0.3: " + (ok_untrained ? "yes" : "no") + ")";
  if (!ok_untrained) {
    detail +=
        "\n       note: the phrase map is built from feature similarities and the fixed "
        "sharpness constant only; no trained weight enters it, so with planted features the "
        "untrained map equals the trained one and the < 0.3 clause is unattainable here";
  }
  return ok_trained && ok_untrained;
}

// ------------------------------------------------------------------ c6 -----
// A study without a lateral view must score bit-identically to the same study
// carrying an explicit all-zero lateral block, against every counterpart.

bool c6_lateral_zero(std::string& detail) {
  testgen::RandomSpec spec;
  spec.n = 6;
  spec.lateral_prob = 0.4;
  spec.seed = 21;
  Corpus corpus = testgen::random_corpus(spec);
  HeadParams params = init_head_params(spec.dim, 4, 10.0, 0.1);

  std::vector<StudyContext> ctx = testgen::contexts_of(corpus);
  std::size_t compared = 0, without = 0;
  for (std::size_t i = 0; i < corpus.studies.size(); ++i) {
    if (corpus.studies[i].lateral) continue;
    ++without;
    Study zeroed = corpus.studies[i];
    zeroed.lateral = FeatureMatrix(zeroed.grid.cells(), corpus.dim);
    StudyContext a = prep_study(corpus.studies[i], true);
    StudyContext b = prep_study(zeroed, true);

    for (std::size_t j = 0; j < ctx.size(); ++j) {
      PairForward fa = pair_forward(a, ctx[j], params.lambda);
      PairForward fb = pair_forward(b, ctx[j], params.lambda);
      double sa = aggregate(fa.word_align, fa.word_valid, params.agg_words).score +
                  aggregate(fa.region_align, fa.region_valid, params.agg_regions).score;
      double sb = aggregate(fb.word_align, fb.word_valid, params.agg_words).score +
                  aggregate(fb.region_align, fb.region_valid, params.agg_regions).score;
      if (sa != sb) {
        detail = "aggregated score differs for study " + corpus.studies[i].id;
        return false;
      }
      PoolForward pa = pool_global(a.regions, a.region_mask, params.pool_image);
      PoolForward pb = pool_global(b.regions, b.region_mask, params.pool_image);
      PoolForward pt = pool_global(ctx[j].tokens, ctx[j].token_mask, params.pool_text);
      if (global_align(pa.pooled, pt.pooled).scalar != global_align(pb.pooled, pt.pooled).scalar) {
        detail = "global score differs for study " + corpus.studies[i].id;
        return false;
      }
      ++compared;
    }
  }
  detail = std::to_string(without) + " lateral-free studies, " + std::to_string(compared) +
           " pairings, every score bit-identical";
  return without > 0;
}

// ------------------------------------------------------------------ c7 -----
// Corpus where 30% of the planted concepts live only on the lateral view:
// training with laterals must beat frontal-only training by >= 5 R@1 points.

bool c7_lateral_information(std::string& detail) {
  SynthConfig sc;
  sc.num_studies = 250;
  sc.dim = 32;
  sc.grid = {4, 4};
  sc.num_tokens = 8;
  sc.vocab_size = 30;
  sc.concepts_per_study = 2;
  sc.noise_sigma = 0.05;
  sc.lateral_fraction = 0.6;  // 0.6 of studies x 1 of 2 concepts = 30% lateral-only
  sc.seed = 11;
  Corpus corpus = generate(sc);
  Corpus train = corpus_slice(corpus, 0, 200, "train");
  Corpus val = corpus_slice(corpus, 200, 250, "val");

  TrainConfig tc;
  tc.batch_size = 16;
  tc.lr = 5e-5;
  tc.max_epochs = 50;
  tc.patience = 10;
  tc.seed = 1;

  auto r1_after_fit = [&](const Corpus& tr, const Corpus& va, double* i2t, double* t2i) {
    FitResult fr = fit(tr, va, tc);
    std::vector<StudyContext> ctx;
    ctx.reserve(va.studies.size());
    for (const Study& s : va.studies) ctx.push_back(prep_study(s, tc.apply_pe));
    ScoreMatrix s = score_corpus(ctx, fr.best.params, tc.rank_score, 1);
    *i2t = recall_at_k(s, 1, Direction::ImageToText);
    *t2i = recall_at_k(s, 1, Direction::TextToImage);
    return fr.diverged;
  };

  double li = 0, lt = 0, fi = 0, ft = 0;
  bool d1 = r1_after_fit(train, val, &li, &lt);
  bool d2 = r1_after_fit(strip_laterals(train), strip_laterals(val), &fi, &ft);

  detail = "with laterals R@1 " + fmt(li) + "/" + fmt(lt) + ", frontal-only " + fmt(fi) + "/" +
           fmt(ft);
  return !d1 && !d2 && li - fi >= 5.0 && lt - ft >= 5.0;
}

// ------------------------------------------------------------------ c8 -----
// Hand-computed metric examples, reproduced exactly.

bool c8_metric_examples(std::string& detail) {
  std::size_t checks = 0, failed = 0;
  auto expect = [&](bool ok, const char* what) {
    ++checks;
    if (!ok) {
      ++failed;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  };

  ScoreMatrix ident(4, 4);
  for (std::size_t i = 0; i < 4; ++i) ident.at(i, i) = 1.0;
  expect(recall_at_k(ident, 1, Direction::ImageToText) == 100.0, "identity R@1 i2t");
  expect(recall_at_k(ident, 1, Direction::TextToImage) == 100.0, "identity R@1 t2i");

  ScoreMatrix flat(10, 10);  // ties resolve to the lower index: only row 0 recalls at 1
  expect(recall_at_k(flat, 1, Direction::ImageToText) == 10.0, "all-equal R@1");
  expect(recall_at_k(flat, 5, Direction::ImageToText) == 50.0, "all-equal R@5");
  expect(recall_at_k(flat, 10, Direction::ImageToText) == 100.0, "all-equal R@10");

  ScoreMatrix hand(3, 3);
  const double rows[3][3] = {{0, 1, 2}, {3, 2, 1}, {0, 0, 5}};
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t j = 0; j < 3; ++j) hand.at(k, j) = rows[k][j];
  expect(recall_at_k(hand, 1, Direction::ImageToText) == 100.0 / 3.0, "hand 3x3 R@1");
  expect(recall_at_k(hand, 2, Direction::ImageToText) == 200.0 / 3.0, "hand 3x3 R@2");

  std::vector<int> same(6, 3);
  ScoreMatrix any(6, 6);
  for (std::size_t i = 0; i < any.data.size(); ++i) any.data[i] = static_cast<double>(i % 5);
  expect(precision_at_k(any, same, same, 3) == 100.0, "single-class precision");

  // top-2 of each query is exactly its class
  ScoreMatrix grouped(4, 4);
  std::vector<int> labels = {0, 0, 1, 1};
  for (std::size_t q = 0; q < 4; ++q)
    for (std::size_t j = 0; j < 4; ++j) grouped.at(q, j) = (labels[j] == labels[q]) ? 1.0 : 0.0;
  expect(precision_at_k(grouped, labels, labels, 2) == 100.0, "grouped precision@2");

  // chance level for balanced classes
  std::mt19937_64 g(99);
  const std::size_t n = 200;
  ScoreMatrix mc(n, n);
  for (double& v : mc.data) v = rng_unit(g);
  std::vector<int> five(n);
  for (std::size_t i = 0; i < n; ++i) five[i] = static_cast<int>(i % 5);
  double p = precision_at_k(mc, five, five, 10);
  expect(p > 15.0 && p < 25.0, "chance-level precision");

  GridMap uniform{{2, 3}, std::vector<double>(6, 1.0 / 6.0)};
  GroundingRecord box{0, 0, 1, 2, {}};
  CnrResult u = cnr(uniform, box);
  expect(u.value == 0.0 && u.flagged, "uniform-map CNR");

  // interior mean 0.8 variance 0.01, exterior mean 0.2 variance 0.01
  GridMap quad{{2, 2}, {0.7, 0.1, 0.9, 0.3}};
  GroundingRecord left{0, 0, 1, 2, {}};
  double q = cnr(quad, left).value;
  expect(std::abs(q - 4.242640687119285) < 1e-12, "hand CNR value");

  // the same contrast on exactly representable values, and affine invariance
  GridMap scaled{{2, 2}, {7.0, 1.0, 9.0, 3.0}};
  expect(cnr(scaled, left).value == 6.0 / std::sqrt(2.0), "scaled CNR exact");
  GridMap affine{{2, 2}, {2.5 * 7.0 - 7.0, 2.5 * 1.0 - 7.0, 2.5 * 9.0 - 7.0, 2.5 * 3.0 - 7.0}};
  expect(std::abs(cnr(affine, left).value - cnr(scaled, left).value) < 1e-12, "affine CNR");

  if (failed == 0) {
    detail = std::to_string(checks) + " hand examples reproduced";
    return true;
  }
  detail = std::to_string(failed) + " of " + std::to_string(checks) + " failed: " + detail;
  return false;
}

// ------------------------------------------------------------------ c9 -----
// Byte-determinism of the command-line pipeline: identical seed/config runs
// write identical history CSV and metrics JSON at any thread count.

struct Scratch {
  fs::path path;
  Scratch() {
    path = fs::temp_directory_path() /
           ("xmodal-accept-" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~Scratch() { fs::remove_all(path); }
};

int run_cli(const std::string& bin, const std::string& args, const fs::path& log) {
  std::string cmd = bin + " " + args + " >" + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool c9_determinism(std::string& detail) {
  const char* bin = std::getenv("XMODAL_BIN");
  if (!bin) {
    detail = "XMODAL_BIN is not set; cannot drive the command-line binary";
    return false;
  }
  Scratch dir;
  nlohmann::json cfg = {
      {"num_studies", 40}, {"dim", 16},
      {"grid", {{"height", 2}, {"width", 3}}},
      {"num_tokens", 5},   {"vocab_size", 8},
      {"concepts_per_study", 2}, {"noise_sigma", 0.1},
      {"lateral_fraction", 0.5}, {"seed", 6},
  };
  fs::path cfg_path = dir.path / "synth.json";
  std::ofstream(cfg_path) << cfg.dump(2);

  std::string train_lmtr = (dir.path / "train.lmtr").string();
  std::string val_lmtr = (dir.path / "val.lmtr").string();
  if (run_cli(bin, "gen --config " + cfg_path.string() + " --out " + train_lmtr +
                       " --split train --slice 0:28",
              dir.path / "gen1.log") != 0 ||
      run_cli(bin, "gen --config " + cfg_path.string() + " --out " + val_lmtr +
                       " --split val --slice 28:40",
              dir.path / "gen2.log") != 0) {
    detail = "corpus generation failed";
    return false;
  }

  const std::string flags = " --lr 0.001 --batch-size 7 --max-epochs 4 --patience 6 --seed 2";
  std::vector<std::pair<std::string, std::string>> runs = {
      {"a", ""}, {"b", ""}, {"c", " --threads 3"}};
  for (auto& [name, extra] : runs) {
    int rc = run_cli(bin,
                     "train --train " + train_lmtr + " --val " + val_lmtr + " --out-dir " +
                         (dir.path / name).string() + flags + extra,
                     dir.path / ("train-" + name + ".log"));
    if (rc != 0) {
      detail = "training run '" + name + "' exited with code " + std::to_string(rc);
      return false;
    }
  }

  for (const char* file : {"history.csv", "metrics.json", "checkpoint.lmtc"}) {
    std::string a = slurp(dir.path / "a" / file);
    if (a.empty()) {
      detail = std::string(file) + " missing or empty";
      return false;
    }
    if (a != slurp(dir.path / "b" / file)) {
      detail = std::string(file) + " differs between identical reruns";
      return false;
    }
    if (a != slurp(dir.path / "c" / file)) {
      detail = std::string(file) + " differs between --threads 1 and --threads 3";
      return false;
    }
  }
  detail = "history, metrics and checkpoint byte-identical across reruns and thread counts";
  return true;
}

struct Criterion {
  int id;
  const char* title;
  std::function<bool(std::string&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {1, "analytic gradients match central differences", c1_gradients},
      {2, "batched forward matches the naive reference", c2_oracle},
      {3, "uniform-similarity batch sits at the 2*ln(N) contrastive floor", c3_loss_floor},
      {4, "planted correspondences are retrievable after training", c4_planted_retrieval},
      {5, "planted boxes attract attention mass (CNR)", c5_planted_grounding},
      {6, "absent and all-zero lateral views score bit-identically", c6_lateral_zero},
      {7, "lateral views add retrievable information", c7_lateral_information},
      {8, "retrieval and grounding metrics reproduce hand examples", c8_metric_examples},
      {9, "training runs are byte-deterministic across reruns and threads", c9_determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) {
    int id = std::atoi(argv[i]);
    if (id < 1 || id > 9) {
      std::fprintf(stderr, "usage: %s [criterion 1..9]...\n", argv[0]);
      return 2;
    }
    wanted.push_back(id);
  }
  if (wanted.empty()) {
    for (const Criterion& c : criteria()) wanted.push_back(c.id);
  }

  int failures = 0;
  for (int id : wanted) {
    const Criterion& c = criteria()[static_cast<std::size_t>(id - 1)];
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::printf("[%s] c%d %s\n", ok ? "PASS" : "FAIL", c.id, c.title);
    if (!detail.empty()) std::printf("       %s\n", detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
