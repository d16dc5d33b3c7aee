#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "xmodal/aggregate.hpp"
#include "xmodal/align.hpp"

namespace xmodal {

enum class RankScore { Aggregated, Global, Sum };
enum class ExtVariant { SummedScore, TwoTerm };

RankScore rank_score_from_string(const std::string& s);
std::string to_string(RankScore s);

// Every trainable weight of the scoring head: attention pooling per modality
// and one aggregation block per alignment direction. lambda (attention
// sharpness) and tau (loss temperature) are fixed hyperparameters, not
// trained. Input features are data, never parameters.
struct HeadParams {
  std::size_t dim = 0;
  PoolParams pool_image;
  PoolParams pool_text;
  AggParams agg_words;
  AggParams agg_regions;
  double lambda = 10.0;
  double tau = 0.1;
};

// Matrices and the fc read-out draw from uniform(-1/sqrt(d), 1/sqrt(d)); the
// fc bias starts at zero.
HeadParams init_head_params(std::size_t dim, std::uint64_t seed, double lambda, double tau);

// Gradient holder with the same trainable shapes (lambda/tau excluded).
struct GradientSet {
  std::size_t dim = 0;
  PoolParams pool_image;
  PoolParams pool_text;
  AggParams agg_words;
  AggParams agg_regions;
};
GradientSet zero_gradients(std::size_t dim);

// Flat view over the trainable blocks in a fixed order, used by the Adam
// update, the finite-difference checker and checkpoint serialization.
inline constexpr std::size_t kNumParamBlocks = 16;
const char* param_block_name(std::size_t block);
std::span<double> param_block(HeadParams& p, std::size_t block);
std::span<const double> param_block(const HeadParams& p, std::size_t block);
std::span<double> param_block(GradientSet& g, std::size_t block);
std::span<const double> param_block(const GradientSet& g, std::size_t block);

}  // namespace xmodal
