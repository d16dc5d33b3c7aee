#pragma once

#include "xmodal/loss.hpp"

namespace xmodal {

struct BackwardResult {
  LossBreakdown loss;
  GradientSet grads;
};

// Analytic gradient of the total batch loss with respect to every trainable
// parameter block. Gradients flow through two paths only: the pooled global
// alignment trains the pooling blocks, and the aggregated pair score trains
// the aggregation blocks. The attention/alignment stage has no parameters
// (features are inputs and lambda is fixed), so the local internal term is
// constant in the parameters and contributes zero gradient.
BackwardResult backward(const std::vector<const StudyContext*>& batch, const HeadParams& params,
                        const LossOptions& opts);

struct FdBlockReport {
  std::string block;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

struct FdOptions {
  double step = 1e-5;                  // central-difference half step
  std::size_t max_coords_per_block = 200;  // full block when smaller
  std::uint64_t coord_seed = 0x9e3779b97f4a7c15ull;
};

// Central finite differences of the total loss against the analytic gradient.
// Relative error per coordinate is |g - g_fd| / max(1, |g|, |g_fd|). Pass a
// gradient override to verify that a corrupted gradient is flagged.
std::vector<FdBlockReport> fd_check(const std::vector<const StudyContext*>& batch,
                                    const HeadParams& params, const LossOptions& opts,
                                    const FdOptions& fd = {},
                                    const GradientSet* analytic_override = nullptr);

}  // namespace xmodal
