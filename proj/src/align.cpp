#include "xmodal/align.hpp"

#include <cmath>
#include <stdexcept>

#include "xmodal/posenc.hpp"

namespace xmodal {

namespace {

std::size_t count_visible(const std::vector<std::uint8_t>& mask) {
  std::size_t n = 0;
  for (std::uint8_t m : mask) n += (m != 0);
  return n;
}

}  // namespace

StudyContext prep_study(const Study& study, bool apply_pe_flag) {
  const std::size_t cells = study.grid.cells();
  const std::size_t d = study.frontal.dim;

  StudyContext ctx;
  ctx.grid = study.grid;
  ctx.source = &study;
  ctx.regions = FeatureMatrix(2 * cells, d);
  ctx.region_mask.assign(2 * cells, 0);

  for (std::size_t r = 0; r < cells; ++r) {
    auto src = study.frontal.row(r);
    std::copy(src.begin(), src.end(), ctx.regions.row(r).begin());
  }
  if (study.lateral) {
    for (std::size_t r = 0; r < cells; ++r) {
      auto src = study.lateral->row(r);
      std::copy(src.begin(), src.end(), ctx.regions.row(cells + r).begin());
    }
  }
  // Mask from the raw rows: a zero-filled row is invisible whether it came
  // from an absent view or from stored zeros.
  for (std::size_t r = 0; r < 2 * cells; ++r) {
    ctx.region_mask[r] = row_is_zero(ctx.regions.row(r)) ? 0 : 1;
  }

  if (apply_pe_flag) {
    // Per view grid independently; zero rows stay zero so masks survive.
    FeatureMatrix pe = pe_2d(study.grid, d);
    for (std::size_t r = 0; r < 2 * cells; ++r) {
      if (!ctx.region_mask[r]) continue;
      auto dst = ctx.regions.row(r);
      auto src = pe.row(r % cells);
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  }

  ctx.tokens = study.tokens;
  ctx.token_mask = study.token_mask;
  return ctx;
}

FeatureMatrix similarity(const FeatureMatrix& regions, const FeatureMatrix& tokens,
                         const std::vector<std::uint8_t>& region_mask,
                         const std::vector<std::uint8_t>& token_mask) {
  if (regions.dim != tokens.dim) throw std::invalid_argument("similarity: dim mismatch");
  if (region_mask.size() != regions.rows || token_mask.size() != tokens.rows) {
    throw std::invalid_argument("similarity: mask size mismatch");
  }
  FeatureMatrix c(regions.rows, tokens.rows);
  for (std::size_t i = 0; i < regions.rows; ++i) {
    if (!region_mask[i]) continue;
    for (std::size_t j = 0; j < tokens.rows; ++j) {
      if (!token_mask[j]) continue;
      c.at(i, j) = cosine(regions.row(i), tokens.row(j)).value;
    }
  }
  return c;
}

CrossAttention attend_text_to_regions(const FeatureMatrix& regions, const FeatureMatrix& c,
                                      double lambda, const std::vector<std::uint8_t>& region_mask,
                                      const std::vector<std::uint8_t>& token_mask) {
  if (c.rows != regions.rows || c.dim != token_mask.size()) {
    throw std::invalid_argument("attend_text_to_regions: shape mismatch");
  }
  if (count_visible(region_mask) == 0) throw std::runtime_error("attend_text_to_regions: no visible regions");
  if (count_visible(token_mask) == 0) throw std::runtime_error("attend_text_to_regions: no visible tokens");

  std::vector<std::size_t> vis;
  for (std::size_t i = 0; i < region_mask.size(); ++i) {
    if (region_mask[i]) vis.push_back(i);
  }

  CrossAttention out;
  out.weights = FeatureMatrix(token_mask.size(), regions.rows);
  out.attended = FeatureMatrix(token_mask.size(), regions.dim);
  std::vector<double> col(vis.size());
  for (std::size_t j = 0; j < token_mask.size(); ++j) {
    if (!token_mask[j]) continue;
    for (std::size_t k = 0; k < vis.size(); ++k) col[k] = c.at(vis[k], j);
    std::vector<double> w = softmax_scaled(col, lambda);
    auto wrow = out.weights.row(j);
    auto urow = out.attended.row(j);
    for (std::size_t k = 0; k < vis.size(); ++k) {
      wrow[vis[k]] = w[k];
      auto v = regions.row(vis[k]);
      for (std::size_t dd = 0; dd < regions.dim; ++dd) urow[dd] += w[k] * v[dd];
    }
  }
  return out;
}

CrossAttention attend_regions_to_text(const FeatureMatrix& tokens, const FeatureMatrix& c,
                                      double lambda, const std::vector<std::uint8_t>& region_mask,
                                      const std::vector<std::uint8_t>& token_mask) {
  if (c.dim != tokens.rows || c.rows != region_mask.size()) {
    throw std::invalid_argument("attend_regions_to_text: shape mismatch");
  }
  if (count_visible(region_mask) == 0) throw std::runtime_error("attend_regions_to_text: no visible regions");
  if (count_visible(token_mask) == 0) throw std::runtime_error("attend_regions_to_text: no visible tokens");

  std::vector<std::size_t> vis;
  for (std::size_t j = 0; j < token_mask.size(); ++j) {
    if (token_mask[j]) vis.push_back(j);
  }

  CrossAttention out;
  out.weights = FeatureMatrix(region_mask.size(), tokens.rows);
  out.attended = FeatureMatrix(region_mask.size(), tokens.dim);
  std::vector<double> row(vis.size());
  for (std::size_t i = 0; i < region_mask.size(); ++i) {
    if (!region_mask[i]) continue;
    for (std::size_t k = 0; k < vis.size(); ++k) row[k] = c.at(i, vis[k]);
    std::vector<double> w = softmax_scaled(row, lambda);
    auto wrow = out.weights.row(i);
    auto mrow = out.attended.row(i);
    for (std::size_t k = 0; k < vis.size(); ++k) {
      wrow[vis[k]] = w[k];
      auto t = tokens.row(vis[k]);
      for (std::size_t dd = 0; dd < tokens.dim; ++dd) mrow[dd] += w[k] * t[dd];
    }
  }
  return out;
}

LocalAlign local_align(std::span<const double> a, std::span<const double> b) {
  LocalAlign out;
  out.vec = elem_mul(a, b);
  double n = l2_norm(out.vec);
  if (n <= kNormEps) {
    out.valid = false;
    return out;
  }
  for (double& v : out.vec) v /= n;
  out.valid = true;
  return out;
}

PoolForward pool_global(const FeatureMatrix& f, const std::vector<std::uint8_t>& mask,
                        const PoolParams& params) {
  if (mask.size() != f.rows) throw std::invalid_argument("pool_global: mask size mismatch");
  PoolForward out;
  out.mean = masked_row_mean(f, mask);  // throws when everything is masked
  out.query = matvec(params.w_query, out.mean);
  out.keys = FeatureMatrix(f.rows, f.dim);
  out.values = FeatureMatrix(f.rows, f.dim);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(f.dim));

  std::vector<std::size_t> vis;
  for (std::size_t r = 0; r < f.rows; ++r) {
    if (mask[r]) vis.push_back(r);
  }
  std::vector<double> scores(vis.size());
  for (std::size_t k = 0; k < vis.size(); ++k) {
    auto key = matvec(params.w_key, f.row(vis[k]));
    auto val = matvec(params.w_value, f.row(vis[k]));
    scores[k] = dot(out.query, key) * inv_sqrt_d;
    std::copy(key.begin(), key.end(), out.keys.row(vis[k]).begin());
    std::copy(val.begin(), val.end(), out.values.row(vis[k]).begin());
  }
  std::vector<double> alpha = softmax_scaled(scores, 1.0);
  out.weights.assign(f.rows, 0.0);
  out.pooled.assign(f.dim, 0.0);
  for (std::size_t k = 0; k < vis.size(); ++k) {
    out.weights[vis[k]] = alpha[k];
    auto val = out.values.row(vis[k]);
    for (std::size_t j = 0; j < f.dim; ++j) out.pooled[j] += alpha[k] * val[j];
  }
  return out;
}

GlobalAlign global_align(std::span<const double> v_bar, std::span<const double> t_bar) {
  GlobalAlign out;
  std::vector<double> p = elem_mul(v_bar, t_bar);
  double n = l2_norm(p);
  if (n <= kNormEps) throw std::runtime_error("global_align: degenerate pooled product");
  out.vec.resize(p.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    out.vec[i] = p[i] / n;
    sum += out.vec[i];
  }
  out.scalar = sum;
  return out;
}

PairForward pair_forward(const StudyContext& image, const StudyContext& report, double lambda) {
  PairForward out;
  out.c = similarity(image.regions, report.tokens, image.region_mask, report.token_mask);
  out.text_to_regions =
      attend_text_to_regions(image.regions, out.c, lambda, image.region_mask, report.token_mask);
  out.regions_to_text =
      attend_regions_to_text(report.tokens, out.c, lambda, image.region_mask, report.token_mask);

  const std::size_t n_tokens = report.tokens.rows;
  const std::size_t n_regions = image.regions.rows;
  const std::size_t d = image.regions.dim;

  out.word_align = FeatureMatrix(n_tokens, d);
  out.word_valid.assign(n_tokens, 0);
  for (std::size_t j = 0; j < n_tokens; ++j) {
    if (!report.token_mask[j]) continue;
    LocalAlign la = local_align(out.text_to_regions.attended.row(j), report.tokens.row(j));
    if (!la.valid) {
      ++out.degenerate_words;
      continue;
    }
    std::copy(la.vec.begin(), la.vec.end(), out.word_align.row(j).begin());
    out.word_valid[j] = 1;
  }

  out.region_align = FeatureMatrix(n_regions, d);
  out.region_valid.assign(n_regions, 0);
  for (std::size_t i = 0; i < n_regions; ++i) {
    if (!image.region_mask[i]) continue;
    LocalAlign la = local_align(out.regions_to_text.attended.row(i), image.regions.row(i));
    if (!la.valid) {
      ++out.degenerate_regions;
      continue;
    }
    std::copy(la.vec.begin(), la.vec.end(), out.region_align.row(i).begin());
    out.region_valid[i] = 1;
  }

  return out;
}

}  // namespace xmodal
