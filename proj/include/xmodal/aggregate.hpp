#pragma once

#include "xmodal/numkit.hpp"

namespace xmodal {

// Self-attention aggregation of an alignment set into one scalar score.
struct AggParams {
  FeatureMatrix w_query;          // d x d
  FeatureMatrix w_key;
  FeatureMatrix w_value;
  std::vector<double> fc_weight;  // d
  double fc_bias = 0.0;
};

// Forward with caches:
//   mean  = mean of valid alignment rows
//   z_t   = (W_q mean) . (W_k a_t) / sqrt(d)
//   attn  = softmax(z), aggregated = sum_t attn_t (W_v a_t)
//   score = fc_weight . aggregated + fc_bias
struct AggForward {
  std::vector<std::size_t> items;  // source row ids of the valid alignments
  std::vector<double> mean;
  std::vector<double> query;
  FeatureMatrix keys;    // items x d
  FeatureMatrix values;  // items x d
  std::vector<double> attn;
  std::vector<double> aggregated;
  double score = 0.0;
};

// Throws "empty alignment set" when no row is valid.
AggForward aggregate(const FeatureMatrix& aligns, const std::vector<std::uint8_t>& valid,
                     const AggParams& params);

}  // namespace xmodal
