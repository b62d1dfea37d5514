#pragma once

/// Feature-level mixup with set-valued labels. Blended samples keep the ids
/// of both parents, and two samples count as same-class when their label
/// sets intersect. Blends inject controlled ambiguity into training batches;
/// the uncertainty head is expected to flag them.

#include <cstdint>
#include <span>
#include <vector>

#include "ism/labels.hpp"
#include "ism/vec.hpp"

namespace ism {

struct MixConfig {
  double mix_prob = 0.5;   // fraction of batch pairs that get mixed
  double beta_a = 1.0;     // Beta(a, a) law for the blend weight
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// lam * x1 + (1 - lam) * x2, componentwise.
Vec mix_pair(std::span<const double> x1, std::span<const double> x2, double lam);

/// A batch of raw feature vectors plus labels. `mixed` marks samples that
/// were generated by mix_batch (or injected as blends by the data generator).
struct FeatureBatch {
  std::vector<Vec> features;
  std::vector<LabelSet> labels;
  std::vector<bool> mixed;

  std::size_t size() const { return features.size(); }
};

/// Appends blended samples to the batch. Pairing shuffles the singleton-
/// labeled samples and greedily pairs cross-class neighbors, so a blend's
/// parents always have disjoint labels and the result carries a 2-id set.
/// Returns false (and appends nothing) when no cross-class pair exists.
bool mix_batch(FeatureBatch& batch, const MixConfig& cfg);

}  // namespace ism
