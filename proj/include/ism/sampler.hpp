#pragma once

/// Negative mining over uncertainty-weakened distances. Semi-hard selection
/// follows the FaceNet rule (closest negative still farther than the
/// positive); distance-weighted selection draws negatives with probability
/// inversely proportional to the hypersphere distance density
///   p(d) = min(phi, d^{2-n} (1 - d^2/4)^{(3-n)/2}),  d in (0, 2).

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ism/labels.hpp"
#include "ism/metric.hpp"

namespace ism {

struct MiningConfig {
  double phi = 10.0;        // clip constant for p(d)
  int n_dim = 32;           // the n in p(d); set to the semantic dimension
  std::uint64_t rng_seed = 0;
  double d_min = 0.05;      // distances are clamped to [d_min, 2 - d_min]

  void validate() const;
};

/// Closest negative of `anchor` that is still farther than the positive;
/// falls back to the farthest negative when none satisfies the constraint.
/// Ties break to the lowest index. Empty optional when the batch holds no
/// negative for this anchor.
std::optional<std::size_t> semi_hard_negative(
    std::size_t anchor_idx, std::size_t positive_idx,
    std::span<const PairedEmbedding> batch, std::span<const LabelSet> labels,
    const MetricParams& p);

/// Unnormalized inverse-density weight, clipped at phi. Evaluated in log
/// space; d must lie in (0, 2).
double dw_density(double d, const MiningConfig& cfg);

/// Draws one negative for `anchor` with probability proportional to
/// dw_density of the clamped weakened distance. `stream_key` selects an
/// independent substream of cfg.rng_seed (per anchor or per pair), so
/// results do not depend on scheduling order.
std::size_t distance_weighted_negative(std::size_t anchor_idx,
                                       std::span<const PairedEmbedding> batch,
                                       std::span<const LabelSet> labels,
                                       const MetricParams& p,
                                       const MiningConfig& cfg,
                                       std::uint64_t stream_key = 0);

}  // namespace ism
