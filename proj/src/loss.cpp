#include "xmodal/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xmodal/util.hpp"

namespace xmodal {

namespace {

void require_square(const ScoreMatrix& s, const char* who) {
  if (!s.square() || s.rows == 0) throw std::invalid_argument(std::string(who) + ": square non-empty matrix required");
  if (!all_finite(std::span<const double>(s.data))) {
    throw std::invalid_argument(std::string(who) + ": non-finite scores");
  }
}

double lse(const std::vector<double>& vals) {
  double hi = vals[0];
  for (double v : vals) hi = std::max(hi, v);
  double sum = 0.0;
  for (double v : vals) sum += std::exp(v - hi);
  return hi + std::log(sum);
}

// Scalarized local alignment: sum((a o b)/||a o b||) = dot(a, b)/||a o b||.
struct Scal {
  double value = 0.0;
  bool valid = false;
};

Scal scal_align(std::span<const double> a, std::span<const double> b) {
  double norm_sq = 0.0;
  double num = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double p = a[i] * b[i];
    norm_sq += p * p;
    num += p;
  }
  double n = std::sqrt(norm_sq);
  if (n <= kNormEps) return {0.0, false};
  return {num / n, true};
}

// Both-direction InfoNCE over a table with excluded (invalid) entries,
// positives on the diagonal, summed over queries. Rows/cols with an invalid
// diagonal are skipped entirely.
double masked_table_nce(const std::vector<double>& table, const std::vector<std::uint8_t>& valid,
                        std::size_t n, double tau, std::size_t* skipped_diag) {
  double acc = 0.0;
  std::vector<double> row, col;
  for (std::size_t a = 0; a < n; ++a) {
    if (!valid[a * n + a]) {
      if (skipped_diag) ++*skipped_diag;
      continue;
    }
    row.clear();
    col.clear();
    for (std::size_t b = 0; b < n; ++b) {
      if (valid[a * n + b]) row.push_back(table[a * n + b] / tau);
      if (valid[b * n + a]) col.push_back(table[b * n + a] / tau);
    }
    double diag = table[a * n + a] / tau;
    acc += (lse(row) - diag) + (lse(col) - diag);
  }
  return acc;
}

}  // namespace

std::vector<double> info_nce_row_terms(const ScoreMatrix& s, double tau) {
  require_square(s, "info_nce");
  if (tau <= 0.0) throw std::invalid_argument("info_nce: tau must be positive");
  std::vector<double> out(s.rows, 0.0);
  std::vector<double> vals(s.cols);
  for (std::size_t k = 0; k < s.rows; ++k) {
    for (std::size_t j = 0; j < s.cols; ++j) vals[j] = s.at(k, j) / tau;
    out[k] = lse(vals) - s.at(k, k) / tau;
  }
  return out;
}

std::vector<double> info_nce_col_terms(const ScoreMatrix& s, double tau) {
  require_square(s, "info_nce");
  if (tau <= 0.0) throw std::invalid_argument("info_nce: tau must be positive");
  std::vector<double> out(s.cols, 0.0);
  std::vector<double> vals(s.rows);
  for (std::size_t j = 0; j < s.cols; ++j) {
    for (std::size_t k = 0; k < s.rows; ++k) vals[k] = s.at(k, j) / tau;
    out[j] = lse(vals) - s.at(j, j) / tau;
  }
  return out;
}

double info_nce_sym(const ScoreMatrix& s, double tau) {
  std::vector<double> row = info_nce_row_terms(s, tau);
  std::vector<double> col = info_nce_col_terms(s, tau);
  double acc = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) acc += row[k] + col[k];
  return acc / static_cast<double>(row.size());
}

double local_internal_loss(const StudyContext& image, const StudyContext& report,
                           const PairForward& pf, double tau, std::size_t* excluded) {
  if (tau <= 0.0) throw std::invalid_argument("local_internal_loss: tau must be positive");

  double loss = 0.0;

  // Word side: token t_a against attended visual u_b, over visible words.
  {
    std::vector<std::size_t> vis;
    for (std::size_t j = 0; j < report.token_mask.size(); ++j) {
      if (report.token_mask[j]) vis.push_back(j);
    }
    const std::size_t n = vis.size();
    std::vector<double> table(n * n, 0.0);
    std::vector<std::uint8_t> valid(n * n, 0);
    for (std::size_t a = 0; a < n; ++a) {
      auto t = report.tokens.row(vis[a]);
      for (std::size_t b = 0; b < n; ++b) {
        Scal sc = scal_align(pf.text_to_regions.attended.row(vis[b]), t);
        table[a * n + b] = sc.value;
        valid[a * n + b] = sc.valid;
        if (!sc.valid && excluded) ++*excluded;
      }
    }
    loss += masked_table_nce(table, valid, n, tau, nullptr);
  }

  // Region side: region v_a against attended text m_b, over visible regions.
  {
    std::vector<std::size_t> vis;
    for (std::size_t i = 0; i < image.region_mask.size(); ++i) {
      if (image.region_mask[i]) vis.push_back(i);
    }
    const std::size_t n = vis.size();
    std::vector<double> table(n * n, 0.0);
    std::vector<std::uint8_t> valid(n * n, 0);
    for (std::size_t a = 0; a < n; ++a) {
      auto v = image.regions.row(vis[a]);
      for (std::size_t b = 0; b < n; ++b) {
        Scal sc = scal_align(pf.regions_to_text.attended.row(vis[b]), v);
        table[a * n + b] = sc.value;
        valid[a * n + b] = sc.valid;
        if (!sc.valid && excluded) ++*excluded;
      }
    }
    loss += masked_table_nce(table, valid, n, tau, nullptr);
  }

  return loss;
}

BatchForward batch_forward(const std::vector<const StudyContext*>& batch, const HeadParams& params,
                           const LossOptions& opts) {
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("batch_forward: empty batch");
  for (const StudyContext* ctx : batch) {
    if (ctx->regions.dim != params.dim || ctx->tokens.dim != params.dim) {
      throw std::runtime_error("shape mismatch: study dim differs from head dim");
    }
  }

  BatchForward bf;
  bf.pool_image.resize(n);
  bf.pool_text.resize(n);
  parallel_for(n, opts.threads, [&](std::size_t i) {
    bf.pool_image[i] = pool_global(batch[i]->regions, batch[i]->region_mask, params.pool_image);
    bf.pool_text[i] = pool_global(batch[i]->tokens, batch[i]->token_mask, params.pool_text);
  });

  bf.s_global = ScoreMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      bf.s_global.at(k, j) = global_align(bf.pool_image[k].pooled, bf.pool_text[j].pooled).scalar;
    }
  }

  bf.pairs.resize(n * n);
  bf.agg_words.resize(n * n);
  bf.agg_regions.resize(n * n);
  bf.s_agg_words = ScoreMatrix(n, n);
  bf.s_agg_regions = ScoreMatrix(n, n);
  bf.s_agg = ScoreMatrix(n, n);
  parallel_for(n * n, opts.threads, [&](std::size_t idx) {
    std::size_t k = idx / n;
    std::size_t j = idx % n;
    PairForward pf = pair_forward(*batch[k], *batch[j], params.lambda);
    bf.agg_words[idx] = aggregate(pf.word_align, pf.word_valid, params.agg_words);
    bf.agg_regions[idx] = aggregate(pf.region_align, pf.region_valid, params.agg_regions);
    bf.s_agg_words.at(k, j) = bf.agg_words[idx].score;
    bf.s_agg_regions.at(k, j) = bf.agg_regions[idx].score;
    bf.s_agg.at(k, j) = bf.agg_words[idx].score + bf.agg_regions[idx].score;
    bf.pairs[idx] = std::move(pf);
  });

  // Degenerate accounting over local alignment slots, fixed iteration order.
  for (std::size_t idx = 0; idx < n * n; ++idx) {
    std::size_t k = idx / n;
    std::size_t j = idx % n;
    const PairForward& pf = bf.pairs[idx];
    std::size_t visible_words = 0;
    for (std::uint8_t m : batch[j]->token_mask) visible_words += (m != 0);
    std::size_t visible_regions = 0;
    for (std::uint8_t m : batch[k]->region_mask) visible_regions += (m != 0);
    bf.loss.local_slots += visible_words + visible_regions;
    bf.loss.degenerate_local += pf.degenerate_words + pf.degenerate_regions;
  }
  if (bf.loss.local_slots > 0) {
    double frac = static_cast<double>(bf.loss.degenerate_local) / static_cast<double>(bf.loss.local_slots);
    if (frac > opts.degenerate_abort_fraction) {
      throw std::runtime_error("degenerate local alignments exceed " +
                               std::to_string(opts.degenerate_abort_fraction * 100.0) +
                               "% of batch slots (" + std::to_string(bf.loss.degenerate_local) + "/" +
                               std::to_string(bf.loss.local_slots) + ")");
    }
  }

  std::vector<double> internal(n, 0.0);
  std::vector<std::size_t> internal_excluded(n, 0);
  parallel_for(n, opts.threads, [&](std::size_t k) {
    internal[k] =
        local_internal_loss(*batch[k], *batch[k], bf.pairs[k * n + k], params.tau, &internal_excluded[k]);
  });
  double internal_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    internal_sum += internal[k];
    bf.loss.internal_excluded += internal_excluded[k];
  }

  bf.loss.global_term = info_nce_sym(bf.s_global, params.tau);
  if (opts.ext_variant == ExtVariant::SummedScore) {
    bf.loss.external_term = info_nce_sym(bf.s_agg, params.tau);
  } else {
    bf.loss.external_term =
        info_nce_sym(bf.s_agg_words, params.tau) + info_nce_sym(bf.s_agg_regions, params.tau);
  }
  bf.loss.internal_term = internal_sum / static_cast<double>(n);
  bf.loss.total = bf.loss.global_term + bf.loss.external_term + bf.loss.internal_term;
  return bf;
}

LossBreakdown total_loss(const std::vector<const StudyContext*>& batch, const HeadParams& params,
                         const LossOptions& opts) {
  return batch_forward(batch, params, opts).loss;
}

}  // namespace xmodal
