#pragma once

#include <filesystem>

#include <nlohmann/json_fwd.hpp>

#include "xmodal/loss.hpp"

namespace xmodal {

enum class Direction { ImageToText, TextToImage };

// Pairwise ranking scores for a corpus against itself: rows are image
// studies, columns report studies. The score is the aggregated pair score,
// the pooled global alignment scalar, or their sum.
ScoreMatrix score_corpus(const std::vector<StudyContext>& contexts, const HeadParams& params,
                         RankScore score, int threads);

// Percentage of queries whose matching item (the diagonal) ranks in the top
// K. Ties resolve in favour of the lower column/row index, so the diagonal
// wins a tie only when no earlier index shares its score.
double recall_at_k(const ScoreMatrix& s, std::size_t k, Direction dir);

// Mean percentage of same-label items among each query row's top K
// (ties again to the lower index). Accepts rectangular queries x items.
double precision_at_k(const ScoreMatrix& s, const std::vector<int>& query_labels,
                      const std::vector<int>& item_labels, std::size_t k);

struct RetrievalSummary {
  std::vector<std::size_t> ks;
  std::vector<double> image_to_text;  // recall per k
  std::vector<double> text_to_image;
  double r_sum = 0.0;
};
RetrievalSummary retrieval_summary(const ScoreMatrix& s, const std::vector<std::size_t>& ks);
nlohmann::json retrieval_json(const RetrievalSummary& r);

enum class MapVariant { Attention, Cosine };
MapVariant map_variant_from_string(const std::string& s);

// Phrase-to-region map over the frontal grid. Attention variant: mean over
// the phrase tokens of their region attention rows, lateral cells dropped,
// renormalized to sum 1 over the frontal grid. Cosine variant: mean raw
// cosine row (no renormalization; CNR is shift/scale invariant anyway).
struct GridMap {
  GridShape grid;
  std::vector<double> values;
};
GridMap phrase_attention(const StudyContext& ctx, const std::vector<std::size_t>& phrase_tokens,
                         const HeadParams& params, MapVariant variant = MapVariant::Attention);

// Contrast-to-noise ratio of map values inside the box against outside:
// |mean_in - mean_out| / sqrt(var_in + var_out) with population variances.
// A vanishing denominator gets +1e-18 and sets flagged. A box covering the
// whole grid has no exterior and is an error.
struct CnrResult {
  double value = 0.0;
  bool flagged = false;
};
CnrResult cnr(const GridMap& map, const GroundingRecord& box);

void write_map_csv(const GridMap& map, const std::filesystem::path& path);
// 8-bit grayscale PGM, min-max scaled.
void write_map_pgm(const GridMap& map, const std::filesystem::path& path);

}  // namespace xmodal
