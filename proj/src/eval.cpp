#include "xmodal/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "xmodal/util.hpp"

namespace xmodal {

ScoreMatrix score_corpus(const std::vector<StudyContext>& contexts, const HeadParams& params,
                         RankScore score, int threads) {
  const std::size_t n = contexts.size();
  if (n == 0) throw std::invalid_argument("score_corpus: empty corpus");
  for (const StudyContext& ctx : contexts) {
    if (ctx.regions.dim != params.dim) {
      throw std::runtime_error("shape mismatch: study dim differs from head dim");
    }
  }

  ScoreMatrix s(n, n);

  if (score == RankScore::Global || score == RankScore::Sum) {
    std::vector<PoolForward> pi(n), pt(n);
    parallel_for(n, threads, [&](std::size_t i) {
      pi[i] = pool_global(contexts[i].regions, contexts[i].region_mask, params.pool_image);
      pt[i] = pool_global(contexts[i].tokens, contexts[i].token_mask, params.pool_text);
    });
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < n; ++j) {
        s.at(k, j) = global_align(pi[k].pooled, pt[j].pooled).scalar;
      }
    }
  }

  if (score == RankScore::Aggregated || score == RankScore::Sum) {
    parallel_for(n * n, threads, [&](std::size_t idx) {
      std::size_t k = idx / n;
      std::size_t j = idx % n;
      PairForward pf = pair_forward(contexts[k], contexts[j], params.lambda);
      double a = aggregate(pf.word_align, pf.word_valid, params.agg_words).score +
                 aggregate(pf.region_align, pf.region_valid, params.agg_regions).score;
      s.at(k, j) += a;
    });
  }

  return s;
}

namespace {

// Rank of the diagonal entry within its row (or column), counting earlier
// indices first on ties.
std::size_t diag_rank(const ScoreMatrix& s, std::size_t k, Direction dir) {
  const double self = s.at(k, k);
  std::size_t rank = 1;
  const std::size_t n = (dir == Direction::ImageToText) ? s.cols : s.rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == k) continue;
    double v = (dir == Direction::ImageToText) ? s.at(k, i) : s.at(i, k);
    if (v > self || (v == self && i < k)) ++rank;
  }
  return rank;
}

}  // namespace

double recall_at_k(const ScoreMatrix& s, std::size_t k, Direction dir) {
  if (!s.square() || s.rows == 0) throw std::invalid_argument("recall_at_k: square non-empty matrix required");
  if (k == 0) throw std::invalid_argument("recall_at_k: k must be positive");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < s.rows; ++q) {
    if (diag_rank(s, q, dir) <= k) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(s.rows);
}

double precision_at_k(const ScoreMatrix& s, const std::vector<int>& query_labels,
                      const std::vector<int>& item_labels, std::size_t k) {
  if (s.rows == 0 || s.cols == 0) throw std::invalid_argument("precision_at_k: empty matrix");
  if (query_labels.size() != s.rows || item_labels.size() != s.cols) {
    throw std::invalid_argument("precision_at_k: label count mismatch");
  }
  if (k == 0) throw std::invalid_argument("precision_at_k: k must be positive");
  const std::size_t take = std::min(k, s.cols);

  double acc = 0.0;
  std::vector<std::size_t> order(s.cols);
  for (std::size_t q = 0; q < s.rows; ++q) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      double va = s.at(q, a), vb = s.at(q, b);
      if (va != vb) return va > vb;
      return a < b;
    });
    std::size_t same = 0;
    for (std::size_t i = 0; i < take; ++i) {
      if (item_labels[order[i]] == query_labels[q]) ++same;
    }
    acc += static_cast<double>(same) / static_cast<double>(take);
  }
  return 100.0 * acc / static_cast<double>(s.rows);
}

RetrievalSummary retrieval_summary(const ScoreMatrix& s, const std::vector<std::size_t>& ks) {
  RetrievalSummary out;
  out.ks = ks;
  for (std::size_t k : ks) {
    out.image_to_text.push_back(recall_at_k(s, k, Direction::ImageToText));
    out.text_to_image.push_back(recall_at_k(s, k, Direction::TextToImage));
  }
  out.r_sum = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) out.r_sum += out.image_to_text[i] + out.text_to_image[i];
  return out;
}

nlohmann::json retrieval_json(const RetrievalSummary& r) {
  nlohmann::json i2t = nlohmann::json::object();
  nlohmann::json t2i = nlohmann::json::object();
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    std::string key = "recall_at_" + std::to_string(r.ks[i]);
    i2t[key] = r.image_to_text[i];
    t2i[key] = r.text_to_image[i];
  }
  return {{"image_to_text", i2t}, {"text_to_image", t2i}, {"r_sum", r.r_sum}};
}

MapVariant map_variant_from_string(const std::string& s) {
  if (s == "attention") return MapVariant::Attention;
  if (s == "cosine") return MapVariant::Cosine;
  throw std::runtime_error("unknown map variant '" + s + "' (expected attention|cosine)");
}

GridMap phrase_attention(const StudyContext& ctx, const std::vector<std::size_t>& phrase_tokens,
                         const HeadParams& params, MapVariant variant) {
  if (phrase_tokens.empty()) throw std::invalid_argument("phrase_attention: empty phrase");
  for (std::size_t idx : phrase_tokens) {
    if (idx >= ctx.tokens.rows) throw std::invalid_argument("phrase_attention: token index out of range");
    if (!ctx.token_mask[idx]) throw std::invalid_argument("phrase_attention: phrase token is masked");
  }
  const std::size_t cells = ctx.grid.cells();

  std::vector<std::size_t> vis;
  for (std::size_t i = 0; i < ctx.region_mask.size(); ++i) {
    if (ctx.region_mask[i]) vis.push_back(i);
  }
  if (vis.empty()) throw std::runtime_error("phrase_attention: no visible regions");

  GridMap map;
  map.grid = ctx.grid;
  map.values.assign(cells, 0.0);

  std::vector<double> col(vis.size());
  for (std::size_t t : phrase_tokens) {
    auto token = ctx.tokens.row(t);
    for (std::size_t k = 0; k < vis.size(); ++k) {
      col[k] = cosine(ctx.regions.row(vis[k]), token).value;
    }
    if (variant == MapVariant::Attention) {
      std::vector<double> w = softmax_scaled(col, params.lambda);
      for (std::size_t k = 0; k < vis.size(); ++k) {
        if (vis[k] < cells) map.values[vis[k]] += w[k];  // frontal cells only
      }
    } else {
      for (std::size_t k = 0; k < vis.size(); ++k) {
        if (vis[k] < cells) map.values[vis[k]] += col[k];
      }
    }
  }
  const double inv_count = 1.0 / static_cast<double>(phrase_tokens.size());
  for (double& v : map.values) v *= inv_count;

  if (variant == MapVariant::Attention) {
    double sum = 0.0;
    for (double v : map.values) sum += v;
    if (sum <= 0.0) throw std::runtime_error("phrase_attention: no attention mass on frontal grid");
    for (double& v : map.values) v /= sum;
  }
  return map;
}

CnrResult cnr(const GridMap& map, const GroundingRecord& box) {
  if (box.w == 0 || box.h == 0) throw std::invalid_argument("cnr: empty box");
  if (box.x + box.w > map.grid.width || box.y + box.h > map.grid.height) {
    throw std::invalid_argument("cnr: box out of grid bounds");
  }
  if (box.w * box.h == map.grid.cells()) throw std::invalid_argument("cnr: box covers the whole grid (empty exterior)");

  double sum_in = 0.0, sum_out = 0.0;
  std::size_t n_in = 0, n_out = 0;
  auto inside = [&](std::size_t x, std::size_t y) {
    return x >= box.x && x < box.x + box.w && y >= box.y && y < box.y + box.h;
  };
  for (std::size_t y = 0; y < map.grid.height; ++y) {
    for (std::size_t x = 0; x < map.grid.width; ++x) {
      double v = map.values[y * map.grid.width + x];
      if (inside(x, y)) {
        sum_in += v;
        ++n_in;
      } else {
        sum_out += v;
        ++n_out;
      }
    }
  }
  double mu_in = sum_in / static_cast<double>(n_in);
  double mu_out = sum_out / static_cast<double>(n_out);
  double var_in = 0.0, var_out = 0.0;
  for (std::size_t y = 0; y < map.grid.height; ++y) {
    for (std::size_t x = 0; x < map.grid.width; ++x) {
      double v = map.values[y * map.grid.width + x];
      if (inside(x, y)) {
        var_in += (v - mu_in) * (v - mu_in);
      } else {
        var_out += (v - mu_out) * (v - mu_out);
      }
    }
  }
  var_in /= static_cast<double>(n_in);
  var_out /= static_cast<double>(n_out);

  CnrResult out;
  double denom = var_in + var_out;
  if (denom < 1e-18) {
    denom += 1e-18;
    out.flagged = true;
  }
  out.value = std::abs(mu_in - mu_out) / std::sqrt(denom);
  return out;
}

void write_map_csv(const GridMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  char buf[64];
  for (std::size_t y = 0; y < map.grid.height; ++y) {
    for (std::size_t x = 0; x < map.grid.width; ++x) {
      std::snprintf(buf, sizeof(buf), "%.17g", map.values[y * map.grid.width + x]);
      out << buf << (x + 1 == map.grid.width ? "" : ",");
    }
    out << "\n";
  }
}

void write_map_pgm(const GridMap& map, const std::filesystem::path& path) {
  double lo = map.values[0], hi = map.values[0];
  for (double v : map.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "P2\n" << map.grid.width << " " << map.grid.height << "\n255\n";
  for (std::size_t y = 0; y < map.grid.height; ++y) {
    for (std::size_t x = 0; x < map.grid.width; ++x) {
      int v = 0;
      if (hi > lo) {
        v = static_cast<int>(std::lround(255.0 * (map.values[y * map.grid.width + x] - lo) / (hi - lo)));
      }
      out << v << (x + 1 == map.grid.width ? "" : " ");
    }
    out << "\n";
  }
}

}  // namespace xmodal
