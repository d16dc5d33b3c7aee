#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xmodal/numkit.hpp"
#include "xmodal/posenc.hpp"

namespace xmodal {

// Reports longer than this are rejected at validation time.
inline constexpr std::size_t kTokenCap = 97;

// A grounded phrase: a rectangle over the frontal grid plus the token indices
// of the phrase that names it. x/y are column/row of the top-left cell.
struct GroundingRecord {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t w = 0;
  std::size_t h = 0;
  std::vector<std::size_t> token_indices;
};

struct Study {
  std::string id;
  FeatureMatrix frontal;                  // grid.cells() x dim
  std::optional<FeatureMatrix> lateral;   // absent view stored as absent, not as zeros
  FeatureMatrix tokens;                   // n_tokens x dim
  std::vector<std::uint8_t> token_mask;   // 1 = token visible
  GridShape grid;
  std::optional<int> label;
  std::vector<GroundingRecord> grounding;
};

struct Corpus {
  std::vector<Study> studies;
  std::size_t dim = 0;
  GridShape grid;
  std::string split;
};

// Structural validation: shapes, finiteness, token cap, at least one visible
// non-zero token row per study, grounding boxes/indices in bounds.
// Throws std::runtime_error naming the offending study.
void validate_corpus(const Corpus& corpus);

// Binary container (magic "LMTR", version, little-endian payloads, float32
// features) plus a sibling JSON manifest at "<path>.json" carrying the split
// tag, counts and an FNV-1a64 checksum of the container bytes.
// Refuses empty or non-finite corpora.
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

// Verifies magic, version, declared sizes and manifest checksum before use.
// Distinct errors: "bad magic", "version mismatch", "checksum mismatch",
// "truncated file", "manifest missing".
Corpus read_corpus(const std::filesystem::path& path);

// Studies [begin, end) as a new corpus with the given split tag.
Corpus corpus_slice(const Corpus& corpus, std::size_t begin, std::size_t end, std::string split);

// Drops lateral views from every study (used for frontal-only experiments).
Corpus strip_laterals(const Corpus& corpus);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

}  // namespace xmodal
