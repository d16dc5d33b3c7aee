#pragma once

#include "xmodal/dataio.hpp"
#include "xmodal/numkit.hpp"

namespace xmodal {

// Attention pooling parameters (one set per modality).
struct PoolParams {
  FeatureMatrix w_query;  // d x d
  FeatureMatrix w_key;
  FeatureMatrix w_value;
};

// A study prepared for the forward pass: frontal and lateral views are
// concatenated into one region matrix (absent lateral becomes zero rows), the
// row mask marks visible rows, and positional encoding has been added per
// view grid with zero rows preserved. A study whose lateral view is absent is
// therefore bit-identical to one whose lateral view is present but all-zero.
struct StudyContext {
  FeatureMatrix regions;                 // 2 * grid.cells() x dim
  std::vector<std::uint8_t> region_mask;
  FeatureMatrix tokens;                  // n_tokens x dim
  std::vector<std::uint8_t> token_mask;
  GridShape grid;
  const Study* source = nullptr;
};

StudyContext prep_study(const Study& study, bool apply_pe);

// Pairwise cosine similarity, regions x tokens. Entries involving a masked
// row (or a zero vector) are stored as 0 and excluded downstream via the
// masks; attention treats them as -inf.
FeatureMatrix similarity(const FeatureMatrix& regions, const FeatureMatrix& tokens,
                         const std::vector<std::uint8_t>& region_mask,
                         const std::vector<std::uint8_t>& token_mask);

struct CrossAttention {
  FeatureMatrix weights;   // one row per query; exact zeros at masked slots
  FeatureMatrix attended;  // one attended feature row per query
};

// For each visible token j: weights_j = softmax over visible regions of
// lambda * C[., j], attended_j = sum_i weights_j[i] * region_i.
// Throws "no visible regions" / "no visible tokens" when a side is empty.
CrossAttention attend_text_to_regions(const FeatureMatrix& regions, const FeatureMatrix& c,
                                      double lambda, const std::vector<std::uint8_t>& region_mask,
                                      const std::vector<std::uint8_t>& token_mask);

// Mirror direction: for each visible region i, attend over visible tokens.
CrossAttention attend_regions_to_text(const FeatureMatrix& tokens, const FeatureMatrix& c,
                                      double lambda, const std::vector<std::uint8_t>& region_mask,
                                      const std::vector<std::uint8_t>& token_mask);

// Normalized elementwise product (a o b) / ||a o b||. valid=false when the
// product is degenerate; such pairs are dropped from aggregation and counted.
struct LocalAlign {
  std::vector<double> vec;
  bool valid = false;
};
LocalAlign local_align(std::span<const double> a, std::span<const double> b);

// Attention pooling with a mean-of-visible-rows query:
//   z_t = (W_q mean) . (W_k f_t) / sqrt(d), alpha = softmax(z over visible),
//   pooled = sum_t alpha_t (W_v f_t).
// Caches are kept for the backward pass.
struct PoolForward {
  std::vector<double> mean;
  std::vector<double> query;     // W_q mean
  std::vector<double> weights;   // full-length, exact zeros at masked rows
  FeatureMatrix keys;            // W_k f_t per row (zero rows where masked)
  FeatureMatrix values;          // W_v f_t per row
  std::vector<double> pooled;
};
PoolForward pool_global(const FeatureMatrix& f, const std::vector<std::uint8_t>& mask,
                        const PoolParams& params);

// Global alignment (pooled_image o pooled_text) / ||.|| and its scalar score,
// the sum of the vector's entries. Throws on a degenerate product.
struct GlobalAlign {
  std::vector<double> vec;
  double scalar = 0.0;
};
GlobalAlign global_align(std::span<const double> v_bar, std::span<const double> t_bar);

// Full cross-pair forward between one study's regions and another's tokens:
// similarity, both attention directions, and both local alignment sets.
struct PairForward {
  FeatureMatrix c;
  CrossAttention text_to_regions;  // weights n_tokens x n_regions, attended u
  CrossAttention regions_to_text;  // weights n_regions x n_tokens, attended m
  FeatureMatrix word_align;        // n_tokens x d
  std::vector<std::uint8_t> word_valid;
  FeatureMatrix region_align;      // n_regions x d
  std::vector<std::uint8_t> region_valid;
  std::size_t degenerate_words = 0;
  std::size_t degenerate_regions = 0;
};
PairForward pair_forward(const StudyContext& image, const StudyContext& report, double lambda);

}  // namespace xmodal
