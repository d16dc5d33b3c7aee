#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace xmodal {

// Norms below this are treated as degenerate (vector effectively zero).
inline constexpr double kNormEps = 1e-12;

// Dense row-major matrix of doubles. All math runs in double precision; file
// storage quantizes feature payloads to float32 (see dataio).
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> data;  // rows * dim, row-major

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t d) : rows(r), dim(d), data(r * d, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * dim, dim}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }

  double& at(std::size_t i, std::size_t j) { return data[i * dim + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * dim + j]; }
};

bool all_finite(std::span<const double> x);
bool all_finite(const FeatureMatrix& m);
bool row_is_zero(std::span<const double> x);

double dot(std::span<const double> u, std::span<const double> v);
double l2_norm(std::span<const double> x);

// softmax(scale * x). Uses max-subtraction; output sums to 1.
// Throws std::invalid_argument on empty input.
std::vector<double> softmax_scaled(std::span<const double> x, double scale);

// x / ||x||2. Throws std::invalid_argument on degenerate (near-zero) input.
std::vector<double> l2_normalize(std::span<const double> x);

// Cosine similarity. A zero operand yields value 0 with masked=true instead of
// an error; downstream attention treats masked entries as excluded. This is
// what makes zero-filled absent views drop out of every similarity.
struct CosineSim {
  double value = 0.0;
  bool masked = false;
};
CosineSim cosine(std::span<const double> u, std::span<const double> v);

std::vector<double> elem_mul(std::span<const double> u, std::span<const double> v);

// W (d x d) times x (d). Fixed accumulation order.
std::vector<double> matvec(const FeatureMatrix& w, std::span<const double> x);

// Mean of rows where mask is nonzero. Throws if no row is visible.
std::vector<double> masked_row_mean(const FeatureMatrix& f, const std::vector<std::uint8_t>& mask);

}  // namespace xmodal
