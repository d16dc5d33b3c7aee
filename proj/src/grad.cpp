#include "xmodal/grad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xmodal/util.hpp"

namespace xmodal {

namespace {

// d info_nce_sym / dS for a square matrix: softmax over rows and columns of
// S/tau, minus the one-hot positives, averaged over queries and scaled by tau.
ScoreMatrix nce_backward(const ScoreMatrix& s, double tau) {
  const std::size_t n = s.rows;
  ScoreMatrix ds(n, n);
  const double scale = 1.0 / (static_cast<double>(n) * tau);
  std::vector<double> vals(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) vals[j] = s.at(k, j);
    std::vector<double> p = softmax_scaled(vals, 1.0 / tau);
    for (std::size_t j = 0; j < n; ++j) {
      ds.at(k, j) += scale * (p[j] - (j == k ? 1.0 : 0.0));
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) vals[k] = s.at(k, j);
    std::vector<double> p = softmax_scaled(vals, 1.0 / tau);
    for (std::size_t k = 0; k < n; ++k) {
      ds.at(k, j) += scale * (p[k] - (k == j ? 1.0 : 0.0));
    }
  }
  return ds;
}

void add_outer(FeatureMatrix& acc, std::span<const double> u, std::span<const double> v, double scale) {
  for (std::size_t r = 0; r < acc.rows; ++r) {
    double ur = scale * u[r];
    auto row = acc.row(r);
    for (std::size_t c = 0; c < acc.dim; ++c) row[c] += ur * v[c];
  }
}

// Backward of pool_global. gv = dL/d pooled. Visible rows follow the mask.
void pool_backward(const FeatureMatrix& f, const std::vector<std::uint8_t>& mask,
                   const PoolForward& cache, std::span<const double> gv, PoolParams& grad) {
  const std::size_t d = f.dim;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  // value path: pooled = sum alpha_t (W_v f_t)
  std::vector<double> h(d, 0.0);  // sum alpha_t f_t
  for (std::size_t r = 0; r < f.rows; ++r) {
    if (!mask[r]) continue;
    double a = cache.weights[r];
    auto row = f.row(r);
    for (std::size_t j = 0; j < d; ++j) h[j] += a * row[j];
  }
  add_outer(grad.w_value, gv, h, 1.0);

  // attention path through the softmax
  double ybar = 0.0;
  std::vector<double> y(f.rows, 0.0);
  for (std::size_t r = 0; r < f.rows; ++r) {
    if (!mask[r]) continue;
    y[r] = dot(gv, cache.values.row(r));
    ybar += cache.weights[r] * y[r];
  }
  std::vector<double> gz(f.rows, 0.0);
  std::vector<double> kk(d, 0.0);  // sum gz_t key_t
  std::vector<double> ff(d, 0.0);  // sum gz_t f_t
  for (std::size_t r = 0; r < f.rows; ++r) {
    if (!mask[r]) continue;
    gz[r] = cache.weights[r] * (y[r] - ybar);
    auto key = cache.keys.row(r);
    auto row = f.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      kk[j] += gz[r] * key[j];
      ff[j] += gz[r] * row[j];
    }
  }
  add_outer(grad.w_query, kk, cache.mean, inv_sqrt_d);
  add_outer(grad.w_key, cache.query, ff, inv_sqrt_d);
}

// Backward of aggregate. gs = dL/d score.
void agg_backward(const FeatureMatrix& aligns, const AggForward& cache, const AggParams& params,
                  double gs, AggParams& grad) {
  const std::size_t d = aligns.dim;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  for (std::size_t j = 0; j < d; ++j) grad.fc_weight[j] += gs * cache.aggregated[j];
  grad.fc_bias += gs;

  std::vector<double> ga(d);  // dL/d aggregated
  for (std::size_t j = 0; j < d; ++j) ga[j] = gs * params.fc_weight[j];

  std::vector<double> h(d, 0.0);  // sum attn_t a_t
  for (std::size_t k = 0; k < cache.items.size(); ++k) {
    auto row = aligns.row(cache.items[k]);
    for (std::size_t j = 0; j < d; ++j) h[j] += cache.attn[k] * row[j];
  }
  add_outer(grad.w_value, ga, h, 1.0);

  double ybar = 0.0;
  std::vector<double> y(cache.items.size(), 0.0);
  for (std::size_t k = 0; k < cache.items.size(); ++k) {
    y[k] = dot(ga, cache.values.row(k));
    ybar += cache.attn[k] * y[k];
  }
  std::vector<double> kk(d, 0.0);
  std::vector<double> aa(d, 0.0);
  for (std::size_t k = 0; k < cache.items.size(); ++k) {
    double gz = cache.attn[k] * (y[k] - ybar);
    auto key = cache.keys.row(k);
    auto row = aligns.row(cache.items[k]);
    for (std::size_t j = 0; j < d; ++j) {
      kk[j] += gz * key[j];
      aa[j] += gz * row[j];
    }
  }
  add_outer(grad.w_query, kk, cache.mean, inv_sqrt_d);
  add_outer(grad.w_key, cache.query, aa, inv_sqrt_d);
}

}  // namespace

BackwardResult backward(const std::vector<const StudyContext*>& batch, const HeadParams& params,
                        const LossOptions& opts) {
  BatchForward bf = batch_forward(batch, params, opts);
  const std::size_t n = batch.size();
  const std::size_t d = params.dim;

  BackwardResult out{bf.loss, zero_gradients(d)};

  // ---- global term -> pooling blocks --------------------------------------
  ScoreMatrix ds_g = nce_backward(bf.s_global, params.tau);
  std::vector<std::vector<double>> d_pool_img(n, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> d_pool_txt(n, std::vector<double>(d, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    const std::vector<double>& vbar = bf.pool_image[k].pooled;
    for (std::size_t j = 0; j < n; ++j) {
      const std::vector<double>& tbar = bf.pool_text[j].pooled;
      double g = ds_g.at(k, j);
      // s = sum(p)/||p|| with p = vbar o tbar
      double sum_p = 0.0, norm_sq = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        double p = vbar[i] * tbar[i];
        sum_p += p;
        norm_sq += p * p;
      }
      double m = std::sqrt(norm_sq);
      double m3 = m * m * m;
      for (std::size_t i = 0; i < d; ++i) {
        double p = vbar[i] * tbar[i];
        double dsdp = 1.0 / m - sum_p * p / m3;
        d_pool_img[k][i] += g * dsdp * tbar[i];
        d_pool_txt[j][i] += g * dsdp * vbar[i];
      }
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    pool_backward(batch[k]->regions, batch[k]->region_mask, bf.pool_image[k], d_pool_img[k],
                  out.grads.pool_image);
    pool_backward(batch[k]->tokens, batch[k]->token_mask, bf.pool_text[k], d_pool_txt[k],
                  out.grads.pool_text);
  }

  // ---- external term -> aggregation blocks --------------------------------
  if (opts.ext_variant == ExtVariant::SummedScore) {
    ScoreMatrix ds_a = nce_backward(bf.s_agg, params.tau);
    for (std::size_t idx = 0; idx < n * n; ++idx) {
      std::size_t k = idx / n;
      std::size_t j = idx % n;
      double gs = ds_a.at(k, j);
      agg_backward(bf.pairs[idx].word_align, bf.agg_words[idx], params.agg_words, gs,
                   out.grads.agg_words);
      agg_backward(bf.pairs[idx].region_align, bf.agg_regions[idx], params.agg_regions, gs,
                   out.grads.agg_regions);
    }
  } else {
    ScoreMatrix ds_w = nce_backward(bf.s_agg_words, params.tau);
    ScoreMatrix ds_r = nce_backward(bf.s_agg_regions, params.tau);
    for (std::size_t idx = 0; idx < n * n; ++idx) {
      std::size_t k = idx / n;
      std::size_t j = idx % n;
      agg_backward(bf.pairs[idx].word_align, bf.agg_words[idx], params.agg_words, ds_w.at(k, j),
                   out.grads.agg_words);
      agg_backward(bf.pairs[idx].region_align, bf.agg_regions[idx], params.agg_regions,
                   ds_r.at(k, j), out.grads.agg_regions);
    }
  }

  // The internal term depends only on features and lambda; nothing to do.
  return out;
}

std::vector<FdBlockReport> fd_check(const std::vector<const StudyContext*>& batch,
                                    const HeadParams& params, const LossOptions& opts,
                                    const FdOptions& fd, const GradientSet* analytic_override) {
  GradientSet analytic;
  if (analytic_override) {
    analytic = *analytic_override;
  } else {
    analytic = backward(batch, params, opts).grads;
  }

  HeadParams work = params;
  std::vector<FdBlockReport> reports;
  reports.reserve(kNumParamBlocks);
  for (std::size_t b = 0; b < kNumParamBlocks; ++b) {
    auto wspan = param_block(work, b);
    auto gspan = param_block(analytic, b);

    std::vector<std::size_t> coords(wspan.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > fd.max_coords_per_block) {
      std::mt19937_64 g(fd.coord_seed + b);
      shuffle_indices(coords, g);
      coords.resize(fd.max_coords_per_block);
      std::sort(coords.begin(), coords.end());
    }

    FdBlockReport rep;
    rep.block = param_block_name(b);
    rep.checked = coords.size();
    for (std::size_t c : coords) {
      double saved = wspan[c];
      wspan[c] = saved + fd.step;
      double up = total_loss(batch, work, opts).total;
      wspan[c] = saved - fd.step;
      double down = total_loss(batch, work, opts).total;
      wspan[c] = saved;
      double g_fd = (up - down) / (2.0 * fd.step);
      double g_an = gspan[c];
      double rel = std::abs(g_an - g_fd) / std::max({1.0, std::abs(g_an), std::abs(g_fd)});
      rep.max_rel_err = std::max(rep.max_rel_err, rel);
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace xmodal
