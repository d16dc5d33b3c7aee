#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "xmodal/dataio.hpp"

namespace xmodal {

// Synthetic corpus with planted cross-modal structure. Each concept owns one
// latent direction shared by both modalities; a study draws a few concepts,
// plants each as a contiguous box of region cells and one matching token row,
// and fills everything else with per-modality background directions plus
// Gaussian noise. A configurable share of studies carries a lateral view whose
// concepts appear in no frontal cell, so that view is the only image evidence
// for them.
struct SynthConfig {
  std::size_t num_studies = 0;
  std::size_t dim = 0;
  GridShape grid;
  std::size_t num_tokens = 0;
  std::size_t vocab_size = 0;
  std::size_t concepts_per_study = 0;
  double noise_sigma = 0.0;
  double lateral_fraction = 0.0;
  std::uint64_t seed = 0;
};

// Content amplitude relative to unit latent directions. Keeps planted signal
// well above the positional encoding added at load time.
inline constexpr double kFeatureScale = 10.0;

SynthConfig synth_config_from_json(const nlohmann::json& j);

// Deterministic for a given config; identical seeds give bit-identical
// corpora. Features are quantized to float32 so a write/read round trip is
// exact. Throws on an unsatisfiable config (see validation messages).
Corpus generate(const SynthConfig& config, std::string split = "synth");

}  // namespace xmodal
