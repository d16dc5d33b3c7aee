#include "xmodal/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace xmodal {

bool all_finite(std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool all_finite(const FeatureMatrix& m) {
  return all_finite(std::span<const double>(m.data));
}

bool row_is_zero(std::span<const double> x) {
  for (double v : x) {
    if (v != 0.0) return false;
  }
  return true;
}

double dot(std::span<const double> u, std::span<const double> v) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

double l2_norm(std::span<const double> x) {
  return std::sqrt(dot(x, x));
}

std::vector<double> softmax_scaled(std::span<const double> x, double scale) {
  if (x.empty()) throw std::invalid_argument("softmax_scaled: empty input");
  double hi = scale * x[0];
  for (std::size_t i = 1; i < x.size(); ++i) hi = std::max(hi, scale * x[i]);
  std::vector<double> out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(scale * x[i] - hi);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

std::vector<double> l2_normalize(std::span<const double> x) {
  double n = l2_norm(x);
  if (n <= kNormEps) throw std::invalid_argument("l2_normalize: degenerate vector");
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v /= n;
  return out;
}

CosineSim cosine(std::span<const double> u, std::span<const double> v) {
  double nu = l2_norm(u);
  double nv = l2_norm(v);
  if (nu <= kNormEps || nv <= kNormEps) return {0.0, true};
  return {dot(u, v) / (nu * nv), false};
}

std::vector<double> elem_mul(std::span<const double> u, std::span<const double> v) {
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] * v[i];
  return out;
}

std::vector<double> matvec(const FeatureMatrix& w, std::span<const double> x) {
  if (w.dim != x.size()) throw std::invalid_argument("matvec: dimension mismatch");
  std::vector<double> out(w.rows, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    out[r] = dot(w.row(r), x);
  }
  return out;
}

std::vector<double> masked_row_mean(const FeatureMatrix& f, const std::vector<std::uint8_t>& mask) {
  if (mask.size() != f.rows) throw std::invalid_argument("masked_row_mean: mask size mismatch");
  std::vector<double> out(f.dim, 0.0);
  std::size_t visible = 0;
  for (std::size_t r = 0; r < f.rows; ++r) {
    if (!mask[r]) continue;
    ++visible;
    auto row = f.row(r);
    for (std::size_t j = 0; j < f.dim; ++j) out[j] += row[j];
  }
  if (visible == 0) throw std::invalid_argument("masked_row_mean: all rows masked");
  for (double& v : out) v /= static_cast<double>(visible);
  return out;
}

}  // namespace xmodal
