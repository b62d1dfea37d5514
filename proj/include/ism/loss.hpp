#pragma once

/// Seven metric-learning losses, all driven by the uncertainty-weakened
/// metric: margin with distance-weighted sampling, semi-hard triplet,
/// contrastive, multi-similarity, ProxyNCA, ProxyAnchor, and a proxy softmax.
/// Each returns its value together with exact gradients for every sample
/// embedding (and proxy, where applicable). With uncertainty pinned to zero
/// and gamma = 0 each loss reduces to its classical form.
///
/// Losses that mine pairs (margin, triplet) and the multi-similarity filter
/// are split into a selection step and an evaluation step, so gradient
/// checks can freeze the selection while perturbing the embeddings.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ism/labels.hpp"
#include "ism/metric.hpp"
#include "ism/sampler.hpp"

namespace ism {

enum class LossVariant {
  kMarginDW,
  kTripletSemihard,
  kContrastive,
  kMultiSimilarity,
  kProxyNCA,
  kProxyAnchor,
  kSoftmax,
};

LossVariant loss_variant_from_string(const std::string& name);
std::string loss_variant_name(LossVariant v);
bool loss_uses_proxies(LossVariant v);
bool loss_uses_cosine(LossVariant v);

/// Learnable per-class representatives. Every class id in the vocabulary
/// must own at least one proxy.
struct ProxyBank {
  std::vector<PairedEmbedding> proxies;
  std::vector<int> labels;

  std::size_t size() const { return proxies.size(); }
  void validate(std::span<const LabelSet> batch_labels) const;
};

struct LossConfig {
  LossVariant variant = LossVariant::kMarginDW;
  double xi = 0.2;       // margin loss: positive-pair margin
  double omega = 1.2;    // margin loss: negative-pair margin
  double delta = 0.2;    // triplet / contrastive margin
  double ms_alpha = 2.0;
  double ms_beta = 50.0;
  double ms_lambda = 1.0;
  double ms_epsilon = 0.1;
  double pa_alpha = 32.0;
  double pa_delta = 0.1;
  // Reproduce the printed forms of the margin / NCA / softmax objectives
  // (negative-hinge sign, e^{+D}, negatives-only denominator) instead of
  // the standard ones. For inspection only.
  bool fidelity_mode = false;
  double log_cap = 50.0;  // |log| clamp for NCA / softmax terms
  CosineVariant cosine_variant = CosineVariant::kSimilar;

  void validate() const;
  /// Literature defaults; delta depends on the variant.
  static LossConfig defaults_for(LossVariant v);
};

struct LossResult {
  double value = 0.0;
  std::vector<Vec> d_sem;  // per batch sample
  std::vector<Vec> d_unc;
  std::vector<Vec> d_proxy_sem;  // per proxy; empty for pair losses
  std::vector<Vec> d_proxy_unc;
  bool warning = false;  // single-class batch / no valid triplets
  long clamp_events = 0;
};

// ---------------------------------------------------------------------------
// Margin loss with distance-weighted negative sampling
// ---------------------------------------------------------------------------

struct MarginPairs {
  // Unordered positive pairs (i < j); one sampled negative per pair with the
  // lower index acting as anchor. neg[k] pairs with pos[k].
  std::vector<std::pair<std::size_t, std::size_t>> pos;
  std::vector<std::optional<std::size_t>> neg;
  bool warning = false;
};

MarginPairs mine_margin_pairs(std::span<const PairedEmbedding> batch,
                              std::span<const LabelSet> labels,
                              const MetricParams& p, const MiningConfig& mining);

LossResult margin_dw_eval(std::span<const PairedEmbedding> batch,
                          const MarginPairs& pairs, const MetricParams& p,
                          const LossConfig& cfg);

LossResult margin_dw_loss(std::span<const PairedEmbedding> batch,
                          std::span<const LabelSet> labels, const MetricParams& p,
                          const LossConfig& cfg, const MiningConfig& mining);

// ---------------------------------------------------------------------------
// Triplet loss with semi-hard negative mining
// ---------------------------------------------------------------------------

struct TripletSet {
  struct Triplet {
    std::size_t anchor, positive, negative;
  };
  std::vector<Triplet> triplets;
  bool warning = false;
};

TripletSet mine_semihard_triplets(std::span<const PairedEmbedding> batch,
                                  std::span<const LabelSet> labels,
                                  const MetricParams& p);

LossResult triplet_eval(std::span<const PairedEmbedding> batch,
                        const TripletSet& set, const MetricParams& p,
                        const LossConfig& cfg);

LossResult triplet_semihard_loss(std::span<const PairedEmbedding> batch,
                                 std::span<const LabelSet> labels,
                                 const MetricParams& p, const LossConfig& cfg);

// ---------------------------------------------------------------------------
// Contrastive loss (all pairs, no mining)
// ---------------------------------------------------------------------------

LossResult contrastive_loss(std::span<const PairedEmbedding> batch,
                            std::span<const LabelSet> labels,
                            const MetricParams& p, const LossConfig& cfg);

// ---------------------------------------------------------------------------
// Multi-similarity loss with pair filtering
// ---------------------------------------------------------------------------

struct MsSelection {
  // kept[i] lists the surviving (index, is_positive) pairs of anchor i;
  // anchors lacking positives or negatives keep nothing.
  struct Kept {
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
  };
  std::vector<Kept> kept;
};

MsSelection select_ms_pairs(std::span<const PairedEmbedding> batch,
                            std::span<const LabelSet> labels,
                            const MetricParams& p, const LossConfig& cfg);

LossResult multi_similarity_eval(std::span<const PairedEmbedding> batch,
                                 const MsSelection& sel, const MetricParams& p,
                                 const LossConfig& cfg);

LossResult multi_similarity_loss(std::span<const PairedEmbedding> batch,
                                 std::span<const LabelSet> labels,
                                 const MetricParams& p, const LossConfig& cfg);

// ---------------------------------------------------------------------------
// Proxy losses
// ---------------------------------------------------------------------------

LossResult proxy_nca_loss(std::span<const PairedEmbedding> batch,
                          std::span<const LabelSet> labels, const ProxyBank& bank,
                          const MetricParams& p, const LossConfig& cfg);

LossResult proxy_anchor_loss(std::span<const PairedEmbedding> batch,
                             std::span<const LabelSet> labels,
                             const ProxyBank& bank, const MetricParams& p,
                             const LossConfig& cfg);

LossResult softmax_proxy_loss(std::span<const PairedEmbedding> batch,
                              std::span<const LabelSet> labels,
                              const ProxyBank& bank, const MetricParams& p,
                              const LossConfig& cfg);

/// Dispatch on cfg.variant. `bank` may be null for pair losses.
LossResult compute_loss(std::span<const PairedEmbedding> batch,
                        std::span<const LabelSet> labels, const ProxyBank* bank,
                        const MetricParams& p, const LossConfig& cfg,
                        const MiningConfig& mining);

}  // namespace ism
