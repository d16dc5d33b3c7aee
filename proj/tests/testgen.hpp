#pragma once

// Seeded random corpora assembled by hand (not through synth), for oracle and
// gradient tests. Features are float32-quantized so container round trips are
// exact.

#include <random>
#include <string>

#include "xmodal/align.hpp"
#include "xmodal/dataio.hpp"
#include "xmodal/util.hpp"

namespace testgen {

struct RandomSpec {
  std::size_t n = 4;
  std::size_t dim = 8;
  xmodal::GridShape grid{2, 3};
  std::size_t n_tokens = 4;
  double lateral_prob = 1.0;    // chance a study carries a lateral view
  double token_mask_prob = 0.25;
  double region_zero_prob = 0.1;  // chance a stored region row is zeroed
  double scale = 1.0;
  bool with_labels = true;
  bool with_grounding = false;
  std::uint64_t seed = 1;
};

inline xmodal::FeatureMatrix random_view(std::size_t rows, std::size_t dim, double scale,
                                         double zero_prob, std::mt19937_64& g) {
  xmodal::FeatureMatrix f(rows, dim);
  for (std::size_t r = 0; r < rows; ++r) {
    bool zero = xmodal::rng_unit(g) < zero_prob;
    auto row = f.row(r);
    for (std::size_t j = 0; j < dim; ++j) {
      double v = scale * xmodal::rng_normal(g);
      row[j] = zero ? 0.0 : static_cast<double>(static_cast<float>(v));
    }
  }
  return f;
}

inline xmodal::Corpus random_corpus(const RandomSpec& spec) {
  std::mt19937_64 g(spec.seed);
  xmodal::Corpus corpus;
  corpus.dim = spec.dim;
  corpus.grid = spec.grid;
  corpus.split = "test";
  const std::size_t cells = spec.grid.cells();

  for (std::size_t i = 0; i < spec.n; ++i) {
    xmodal::Study s;
    s.id = "rs-" + std::to_string(i);
    s.grid = spec.grid;
    s.frontal = random_view(cells, spec.dim, spec.scale, spec.region_zero_prob, g);
    // At least one visible region: regenerate the first row unzeroed if needed.
    bool any = false;
    for (std::size_t r = 0; r < cells && !any; ++r) any = !xmodal::row_is_zero(s.frontal.row(r));
    if (!any) {
      auto row = s.frontal.row(0);
      for (std::size_t j = 0; j < spec.dim; ++j) {
        row[j] = static_cast<double>(static_cast<float>(spec.scale * xmodal::rng_normal(g)));
      }
    }
    if (xmodal::rng_unit(g) < spec.lateral_prob) {
      s.lateral = random_view(cells, spec.dim, spec.scale, spec.region_zero_prob, g);
    }
    s.tokens = random_view(spec.n_tokens, spec.dim, spec.scale, 0.0, g);
    s.token_mask.assign(spec.n_tokens, 1);
    for (std::size_t t = 0; t < spec.n_tokens; ++t) {
      if (xmodal::rng_unit(g) < spec.token_mask_prob) s.token_mask[t] = 0;
    }
    bool any_token = false;
    for (std::uint8_t m : s.token_mask) any_token |= (m != 0);
    if (!any_token) s.token_mask[0] = 1;

    if (spec.with_labels) s.label = static_cast<int>(xmodal::rng_index(g, 4));
    if (spec.with_grounding) {
      xmodal::GroundingRecord rec;
      rec.x = 0;
      rec.y = 0;
      rec.w = 1 + xmodal::rng_index(g, spec.grid.width > 1 ? 2 : 1);
      rec.h = 1 + xmodal::rng_index(g, spec.grid.height > 1 ? 2 : 1);
      for (std::size_t t = 0; t < spec.n_tokens; ++t) {
        if (s.token_mask[t]) {
          rec.token_indices = {t};
          break;
        }
      }
      s.grounding.push_back(rec);
    }
    corpus.studies.push_back(std::move(s));
  }
  xmodal::validate_corpus(corpus);
  return corpus;
}

inline std::vector<xmodal::StudyContext> contexts_of(const xmodal::Corpus& corpus,
                                                     bool apply_pe = true) {
  std::vector<xmodal::StudyContext> ctx;
  ctx.reserve(corpus.studies.size());
  for (const auto& s : corpus.studies) ctx.push_back(xmodal::prep_study(s, apply_pe));
  return ctx;
}

inline std::vector<const xmodal::StudyContext*> pointers_of(
    const std::vector<xmodal::StudyContext>& ctx) {
  std::vector<const xmodal::StudyContext*> out;
  out.reserve(ctx.size());
  for (const auto& c : ctx) out.push_back(&c);
  return out;
}

}  // namespace testgen
