#include "xmodal/aggregate.hpp"

#include <cmath>
#include <stdexcept>

namespace xmodal {

AggForward aggregate(const FeatureMatrix& aligns, const std::vector<std::uint8_t>& valid,
                     const AggParams& params) {
  if (valid.size() != aligns.rows) throw std::invalid_argument("aggregate: valid mask size mismatch");
  if (params.fc_weight.size() != aligns.dim) throw std::invalid_argument("aggregate: fc size mismatch");

  AggForward out;
  for (std::size_t r = 0; r < aligns.rows; ++r) {
    if (valid[r]) out.items.push_back(r);
  }
  if (out.items.empty()) throw std::runtime_error("aggregate: empty alignment set");

  const std::size_t d = aligns.dim;
  out.mean.assign(d, 0.0);
  for (std::size_t t : out.items) {
    auto row = aligns.row(t);
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += row[j];
  }
  for (double& v : out.mean) v /= static_cast<double>(out.items.size());

  out.query = matvec(params.w_query, out.mean);
  out.keys = FeatureMatrix(out.items.size(), d);
  out.values = FeatureMatrix(out.items.size(), d);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> scores(out.items.size());
  for (std::size_t k = 0; k < out.items.size(); ++k) {
    auto key = matvec(params.w_key, aligns.row(out.items[k]));
    auto val = matvec(params.w_value, aligns.row(out.items[k]));
    scores[k] = dot(out.query, key) * inv_sqrt_d;
    std::copy(key.begin(), key.end(), out.keys.row(k).begin());
    std::copy(val.begin(), val.end(), out.values.row(k).begin());
  }
  out.attn = softmax_scaled(scores, 1.0);
  out.aggregated.assign(d, 0.0);
  for (std::size_t k = 0; k < out.items.size(); ++k) {
    auto val = out.values.row(k);
    for (std::size_t j = 0; j < d; ++j) out.aggregated[j] += out.attn[k] * val[j];
  }
  out.score = dot(params.fc_weight, out.aggregated) + params.fc_bias;
  return out;
}

}  // namespace xmodal
