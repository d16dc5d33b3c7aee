#include "xmodal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "xmodal/util.hpp"

namespace xmodal {

namespace {

constexpr std::size_t kBackgroundVisual = 0;  // offsets after the concept rows
constexpr std::size_t kBackgroundText = 1;

// Orthonormal latent directions: rows 0..vocab-1 are concepts, then the two
// per-modality backgrounds. Gram-Schmidt over fresh Gaussian draws; a near-
// dependent draw is simply redrawn.
FeatureMatrix draw_directions(std::size_t count, std::size_t dim, std::mt19937_64& g) {
  FeatureMatrix dirs(count, dim);
  for (std::size_t r = 0; r < count; ++r) {
    while (true) {
      auto row = dirs.row(r);
      for (std::size_t j = 0; j < dim; ++j) row[j] = rng_normal(g);
      for (std::size_t p = 0; p < r; ++p) {
        auto prev = dirs.row(p);
        double proj = dot(row, prev);
        for (std::size_t j = 0; j < dim; ++j) row[j] -= proj * prev[j];
      }
      double n = l2_norm(row);
      if (n > 1e-6) {
        for (std::size_t j = 0; j < dim; ++j) row[j] /= n;
        break;
      }
    }
  }
  return dirs;
}

struct PlacedBox {
  std::size_t x, y, w, h;
  bool overlaps(const PlacedBox& o) const {
    return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h;
  }
};

PlacedBox place_box(GridShape grid, const std::vector<PlacedBox>& taken, std::mt19937_64& g) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    PlacedBox b;
    b.h = 1 + (grid.height > 1 ? rng_index(g, 2) : 0);
    b.w = 1 + (grid.width > 1 ? rng_index(g, 2) : 0);
    b.y = rng_index(g, grid.height - b.h + 1);
    b.x = rng_index(g, grid.width - b.w + 1);
    bool clash = false;
    for (const PlacedBox& t : taken) {
      if (b.overlaps(t)) {
        clash = true;
        break;
      }
    }
    if (!clash) return b;
  }
  throw std::runtime_error("synth: grid too small for requested boxes");
}

// Owner id per grid cell: concept index, or >= vocab for background.
void fill_view(FeatureMatrix& view, GridShape grid, const std::vector<std::size_t>& owner,
               const FeatureMatrix& dirs, double sigma, std::mt19937_64& g) {
  for (std::size_t cell = 0; cell < grid.cells(); ++cell) {
    auto dst = view.row(cell);
    auto dir = dirs.row(owner[cell]);
    for (std::size_t j = 0; j < view.dim; ++j) {
      double v = kFeatureScale * dir[j] + sigma * rng_normal(g);
      dst[j] = static_cast<double>(static_cast<float>(v));
    }
  }
}

void validate_config(const SynthConfig& c) {
  auto fail = [](const std::string& what) { throw std::runtime_error("synth config: " + what); };
  if (c.num_studies == 0) fail("num_studies must be positive");
  if (c.dim == 0) fail("dim must be positive");
  if (c.grid.cells() == 0) fail("grid must be non-empty");
  if (c.num_tokens == 0) fail("num_tokens must be positive");
  if (c.num_tokens > kTokenCap) fail("num_tokens exceeds token cap");
  if (c.vocab_size == 0) fail("vocab_size must be positive");
  if (c.concepts_per_study == 0) fail("concepts_per_study must be positive");
  if (c.concepts_per_study > c.vocab_size) fail("concepts_per_study exceeds vocab_size");
  if (c.concepts_per_study > c.num_tokens) fail("concepts_per_study exceeds num_tokens");
  if (c.vocab_size + 2 > c.dim) fail("dim too small for orthonormal vocabulary (need vocab_size + 2 <= dim)");
  if (c.noise_sigma < 0.0) fail("noise_sigma must be non-negative");
  if (!(c.lateral_fraction >= 0.0 && c.lateral_fraction <= 1.0)) fail("lateral_fraction must lie in [0, 1]");
}

}  // namespace

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw std::runtime_error(std::string("synth config: missing field '") + key + "'");
    return j.at(key);
  };
  auto as_count = [&](const char* key) -> std::size_t {
    const auto& v = require(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw std::runtime_error(std::string("synth config: field '") + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
  };
  c.num_studies = as_count("num_studies");
  c.dim = as_count("dim");
  const auto& grid = require("grid");
  if (!grid.is_object() || !grid.contains("height") || !grid.contains("width")) {
    throw std::runtime_error("synth config: field 'grid' must be an object with height and width");
  }
  c.grid.height = grid.at("height").get<std::size_t>();
  c.grid.width = grid.at("width").get<std::size_t>();
  c.num_tokens = as_count("num_tokens");
  c.vocab_size = as_count("vocab_size");
  c.concepts_per_study = as_count("concepts_per_study");
  const auto& sigma = require("noise_sigma");
  if (!sigma.is_number()) throw std::runtime_error("synth config: field 'noise_sigma' must be a number");
  c.noise_sigma = sigma.get<double>();
  const auto& lf = require("lateral_fraction");
  if (!lf.is_number()) throw std::runtime_error("synth config: field 'lateral_fraction' must be a number");
  c.lateral_fraction = lf.get<double>();
  c.seed = as_count("seed");
  return c;
}

Corpus generate(const SynthConfig& config, std::string split) {
  validate_config(config);
  std::mt19937_64 g(config.seed);

  FeatureMatrix dirs = draw_directions(config.vocab_size + 2, config.dim, g);
  const std::size_t bg_visual = config.vocab_size + kBackgroundVisual;
  const std::size_t bg_text = config.vocab_size + kBackgroundText;

  Corpus corpus;
  corpus.dim = config.dim;
  corpus.grid = config.grid;
  corpus.split = std::move(split);
  corpus.studies.reserve(config.num_studies);

  std::set<std::vector<std::size_t>> used_sets;
  std::vector<std::size_t> vocab_ids(config.vocab_size);
  for (std::size_t i = 0; i < config.vocab_size; ++i) vocab_ids[i] = i;
  std::vector<std::size_t> token_slots(config.num_tokens);
  for (std::size_t i = 0; i < config.num_tokens; ++i) token_slots[i] = i;

  int id_width = 1;
  for (std::size_t n = config.num_studies; n >= 10; n /= 10) ++id_width;

  for (std::size_t i = 0; i < config.num_studies; ++i) {
    Study s;
    {
      std::string num = std::to_string(i);
      s.id = "synth-" + std::string(static_cast<std::size_t>(id_width) - num.size(), '0') + num;
    }
    s.grid = config.grid;

    // Evenly spaced deterministic lateral assignment: for fraction f, study i
    // gets a lateral view iff floor((i+1)f) > floor(i*f).
    double f = config.lateral_fraction;
    bool has_lateral = std::floor(static_cast<double>(i + 1) * f) > std::floor(static_cast<double>(i) * f);

    // Concept set in draw order; resample while the sorted set collides with a
    // previous study so planted signatures stay distinguishable when the
    // vocabulary allows it.
    std::vector<std::size_t> concepts;
    for (int attempt = 0; attempt < 200; ++attempt) {
      std::vector<std::size_t> pool = vocab_ids;
      concepts.clear();
      for (std::size_t k = 0; k < config.concepts_per_study; ++k) {
        std::size_t pick = rng_index(g, pool.size());
        concepts.push_back(pool[pick]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
      }
      std::vector<std::size_t> key = concepts;
      std::sort(key.begin(), key.end());
      if (used_sets.insert(key).second) break;
    }

    // Alternate placement for lateral studies: even positions stay frontal,
    // odd positions exist only in the lateral view.
    std::vector<std::size_t> frontal_owner(config.grid.cells(), bg_visual);
    std::vector<std::size_t> lateral_owner(config.grid.cells(), bg_visual);
    std::vector<PlacedBox> frontal_boxes, lateral_boxes;
    std::vector<std::pair<std::size_t, PlacedBox>> frontal_planted;  // concept position -> box
    for (std::size_t k = 0; k < concepts.size(); ++k) {
      bool to_lateral = has_lateral && (k % 2 == 1);
      auto& owner = to_lateral ? lateral_owner : frontal_owner;
      auto& taken = to_lateral ? lateral_boxes : frontal_boxes;
      PlacedBox b = place_box(config.grid, taken, g);
      taken.push_back(b);
      for (std::size_t yy = b.y; yy < b.y + b.h; ++yy) {
        for (std::size_t xx = b.x; xx < b.x + b.w; ++xx) {
          owner[yy * config.grid.width + xx] = concepts[k];
        }
      }
      if (!to_lateral) frontal_planted.emplace_back(k, b);
    }

    // One token row per concept, all rows visible.
    std::vector<std::size_t> slots = token_slots;
    shuffle_indices(slots, g);
    std::vector<std::size_t> token_owner(config.num_tokens, bg_text);
    std::vector<std::size_t> concept_token(concepts.size());
    for (std::size_t k = 0; k < concepts.size(); ++k) {
      token_owner[slots[k]] = concepts[k];
      concept_token[k] = slots[k];
    }

    s.frontal = FeatureMatrix(config.grid.cells(), config.dim);
    fill_view(s.frontal, config.grid, frontal_owner, dirs, config.noise_sigma, g);
    if (has_lateral) {
      FeatureMatrix lat(config.grid.cells(), config.dim);
      fill_view(lat, config.grid, lateral_owner, dirs, config.noise_sigma, g);
      s.lateral = std::move(lat);
    }

    s.tokens = FeatureMatrix(config.num_tokens, config.dim);
    for (std::size_t t = 0; t < config.num_tokens; ++t) {
      auto dst = s.tokens.row(t);
      auto dir = dirs.row(token_owner[t]);
      for (std::size_t j = 0; j < config.dim; ++j) {
        double v = kFeatureScale * dir[j] + config.noise_sigma * rng_normal(g);
        dst[j] = static_cast<double>(static_cast<float>(v));
      }
    }
    s.token_mask.assign(config.num_tokens, 1);

    s.label = static_cast<int>(concepts[0]);

    for (const auto& [k, box] : frontal_planted) {
      GroundingRecord rec;
      rec.x = box.x;
      rec.y = box.y;
      rec.w = box.w;
      rec.h = box.h;
      rec.token_indices = {concept_token[k]};
      s.grounding.push_back(std::move(rec));
    }

    corpus.studies.push_back(std::move(s));
  }

  validate_corpus(corpus);
  return corpus;
}

}  // namespace xmodal
