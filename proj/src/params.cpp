#include "xmodal/params.hpp"

#include <cmath>
#include <stdexcept>

#include "xmodal/util.hpp"

namespace xmodal {

RankScore rank_score_from_string(const std::string& s) {
  if (s == "agg") return RankScore::Aggregated;
  if (s == "global") return RankScore::Global;
  if (s == "sum") return RankScore::Sum;
  throw std::runtime_error("unknown rank score '" + s + "' (expected agg|global|sum)");
}

std::string to_string(RankScore s) {
  switch (s) {
    case RankScore::Aggregated: return "agg";
    case RankScore::Global: return "global";
    case RankScore::Sum: return "sum";
  }
  return "agg";
}

namespace {

void shape_pool(PoolParams& p, std::size_t d) {
  p.w_query = FeatureMatrix(d, d);
  p.w_key = FeatureMatrix(d, d);
  p.w_value = FeatureMatrix(d, d);
}

void shape_agg(AggParams& p, std::size_t d) {
  p.w_query = FeatureMatrix(d, d);
  p.w_key = FeatureMatrix(d, d);
  p.w_value = FeatureMatrix(d, d);
  p.fc_weight.assign(d, 0.0);
  p.fc_bias = 0.0;
}

}  // namespace

HeadParams init_head_params(std::size_t dim, std::uint64_t seed, double lambda, double tau) {
  if (dim == 0) throw std::invalid_argument("init_head_params: dim must be positive");
  if (tau <= 0.0) throw std::invalid_argument("init_head_params: tau must be positive");
  HeadParams p;
  p.dim = dim;
  p.lambda = lambda;
  p.tau = tau;
  shape_pool(p.pool_image, dim);
  shape_pool(p.pool_text, dim);
  shape_agg(p.agg_words, dim);
  shape_agg(p.agg_regions, dim);

  std::mt19937_64 g(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t b = 0; b < kNumParamBlocks; ++b) {
    auto span = param_block(p, b);
    if (span.size() == 1) continue;  // biases stay at zero
    for (double& v : span) v = rng_uniform(g, -bound, bound);
  }
  return p;
}

GradientSet zero_gradients(std::size_t dim) {
  GradientSet gset;
  gset.dim = dim;
  shape_pool(gset.pool_image, dim);
  shape_pool(gset.pool_text, dim);
  shape_agg(gset.agg_words, dim);
  shape_agg(gset.agg_regions, dim);
  return gset;
}

const char* param_block_name(std::size_t block) {
  static const char* names[kNumParamBlocks] = {
      "pool.image.w_query", "pool.image.w_key", "pool.image.w_value",
      "pool.text.w_query",  "pool.text.w_key",  "pool.text.w_value",
      "agg.words.w_query",  "agg.words.w_key",  "agg.words.w_value",
      "agg.words.fc_weight", "agg.words.fc_bias",
      "agg.regions.w_query", "agg.regions.w_key", "agg.regions.w_value",
      "agg.regions.fc_weight", "agg.regions.fc_bias",
  };
  if (block >= kNumParamBlocks) throw std::out_of_range("param_block_name: bad block");
  return names[block];
}

namespace {

template <typename T>
std::span<double> block_impl(T& p, std::size_t block) {
  switch (block) {
    case 0: return {p.pool_image.w_query.data.data(), p.pool_image.w_query.data.size()};
    case 1: return {p.pool_image.w_key.data.data(), p.pool_image.w_key.data.size()};
    case 2: return {p.pool_image.w_value.data.data(), p.pool_image.w_value.data.size()};
    case 3: return {p.pool_text.w_query.data.data(), p.pool_text.w_query.data.size()};
    case 4: return {p.pool_text.w_key.data.data(), p.pool_text.w_key.data.size()};
    case 5: return {p.pool_text.w_value.data.data(), p.pool_text.w_value.data.size()};
    case 6: return {p.agg_words.w_query.data.data(), p.agg_words.w_query.data.size()};
    case 7: return {p.agg_words.w_key.data.data(), p.agg_words.w_key.data.size()};
    case 8: return {p.agg_words.w_value.data.data(), p.agg_words.w_value.data.size()};
    case 9: return {p.agg_words.fc_weight.data(), p.agg_words.fc_weight.size()};
    case 10: return {&p.agg_words.fc_bias, 1};
    case 11: return {p.agg_regions.w_query.data.data(), p.agg_regions.w_query.data.size()};
    case 12: return {p.agg_regions.w_key.data.data(), p.agg_regions.w_key.data.size()};
    case 13: return {p.agg_regions.w_value.data.data(), p.agg_regions.w_value.data.size()};
    case 14: return {p.agg_regions.fc_weight.data(), p.agg_regions.fc_weight.size()};
    case 15: return {&p.agg_regions.fc_bias, 1};
    default: throw std::out_of_range("param_block: bad block");
  }
}

}  // namespace

std::span<double> param_block(HeadParams& p, std::size_t block) { return block_impl(p, block); }
std::span<const double> param_block(const HeadParams& p, std::size_t block) {
  auto s = block_impl(const_cast<HeadParams&>(p), block);
  return {s.data(), s.size()};
}
std::span<double> param_block(GradientSet& g, std::size_t block) { return block_impl(g, block); }
std::span<const double> param_block(const GradientSet& g, std::size_t block) {
  auto s = block_impl(const_cast<GradientSet&>(g), block);
  return {s.data(), s.size()};
}

}  // namespace xmodal
