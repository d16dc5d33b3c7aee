#pragma once

#include "xmodal/params.hpp"

namespace xmodal {

// Dense score matrix, rows = image studies, cols = report studies.
// The contrastive losses and retrieval metrics require it square; the
// precision metric also accepts rectangular query x item scores.
struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  ScoreMatrix() = default;
  ScoreMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& at(std::size_t k, std::size_t j) { return data[k * cols + j]; }
  double at(std::size_t k, std::size_t j) const { return data[k * cols + j]; }
  bool square() const { return rows == cols; }
};

// Symmetric InfoNCE over a square score matrix: mean over k of
//   -log softmax_row_k(S/tau)[k] - log softmax_col_k(S/tau)[k].
// N = 1 gives exactly 0.
double info_nce_sym(const ScoreMatrix& s, double tau);

// Per-query decomposition (row term + column term per k); its mean is
// info_nce_sym. Exposed for tests and diagnostics.
std::vector<double> info_nce_row_terms(const ScoreMatrix& s, double tau);
std::vector<double> info_nce_col_terms(const ScoreMatrix& s, double tau);

// Local contrastive term of one study paired with itself. Word side: the
// scalarized alignment of token j with attended visual u_i forms an
// n_words x n_words score table whose diagonal is the positive; both the row
// and the column normalization contribute, summed over visible words.
// Region side mirrors this with regions against attended text. The scalarized
// alignment is sum((a o b)/||a o b||) = dot(a, b)/||a o b||; degenerate
// products are excluded from the table and counted.
double local_internal_loss(const StudyContext& image, const StudyContext& report,
                           const PairForward& pf, double tau, std::size_t* excluded = nullptr);

struct LossOptions {
  ExtVariant ext_variant = ExtVariant::SummedScore;
  int threads = 1;
  // Abort threshold on the fraction of dropped local alignments in a batch.
  double degenerate_abort_fraction = 0.01;
};

struct LossBreakdown {
  double total = 0.0;
  double global_term = 0.0;    // pooled-alignment contrastive loss
  double external_term = 0.0;  // aggregated-score contrastive loss
  double internal_term = 0.0;  // mean per-study local loss
  std::size_t degenerate_local = 0;   // dropped alignment slots across the batch
  std::size_t local_slots = 0;        // total alignment slots across the batch
  std::size_t internal_excluded = 0;  // degenerate entries dropped inside local tables
};

// Full forward over a batch with every cache needed by the backward pass.
// pairs/agg_* are n*n, row-major with index k*n + j meaning (image k, report j).
struct BatchForward {
  std::vector<PoolForward> pool_image;  // per study
  std::vector<PoolForward> pool_text;
  std::vector<PairForward> pairs;
  std::vector<AggForward> agg_words;
  std::vector<AggForward> agg_regions;
  ScoreMatrix s_global;
  ScoreMatrix s_agg_words;
  ScoreMatrix s_agg_regions;
  ScoreMatrix s_agg;  // elementwise sum of the two direction scores
  LossBreakdown loss;
};

// Throws when more than degenerate_abort_fraction of the batch's local
// alignment slots are degenerate ("degenerate local alignments ...").
BatchForward batch_forward(const std::vector<const StudyContext*>& batch, const HeadParams& params,
                           const LossOptions& opts);

// Convenience wrapper returning only the breakdown.
LossBreakdown total_loss(const std::vector<const StudyContext*>& batch, const HeadParams& params,
                         const LossOptions& opts);

}  // namespace xmodal
