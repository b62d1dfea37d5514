#include "ism/sampler.hpp"

#include <cmath>
#include <stdexcept>

#include "ism/rng.hpp"

namespace ism {

void MiningConfig::validate() const {
  if (!(phi > 0.0)) throw std::invalid_argument("MiningConfig: phi must be > 0");
  if (n_dim < 3) throw std::invalid_argument("MiningConfig: n_dim must be >= 3");
  if (!(d_min > 0.0 && d_min < 1.0))
    throw std::invalid_argument("MiningConfig: d_min must be in (0,1)");
}

std::optional<std::size_t> semi_hard_negative(
    std::size_t anchor_idx, std::size_t positive_idx,
    std::span<const PairedEmbedding> batch, std::span<const LabelSet> labels,
    const MetricParams& p) {
  const double d_pos =
      introspective_distance(batch[anchor_idx], batch[positive_idx], p);

  bool found_any = false;
  bool found_semi = false;
  std::size_t best_semi = 0, best_far = 0;
  double best_semi_d = 0.0, best_far_d = -1.0;

  for (std::size_t n = 0; n < batch.size(); ++n) {
    if (n == anchor_idx || label_equal(labels[anchor_idx], labels[n])) continue;
    const double d = introspective_distance(batch[anchor_idx], batch[n], p);
    found_any = true;
    if (d > d_pos && (!found_semi || d < best_semi_d)) {
      found_semi = true;
      best_semi = n;
      best_semi_d = d;
    }
    if (d > best_far_d) {
      best_far = n;
      best_far_d = d;
    }
  }
  if (!found_any) return std::nullopt;
  return found_semi ? best_semi : best_far;
}

double dw_density(double d, const MiningConfig& cfg) {
  cfg.validate();
  if (!(d > 0.0 && d < 2.0))
    throw std::domain_error("dw_density: d must lie in (0, 2)");
  const double n = static_cast<double>(cfg.n_dim);
  // log p = (2-n) log d + (3-n)/2 * log(1 - d^2/4); the raw value overflows
  // near the domain edges for large n, so clip against phi in log space.
  const double log_p =
      (2.0 - n) * std::log(d) + 0.5 * (3.0 - n) * std::log1p(-0.25 * d * d);
  return std::exp(std::min(std::log(cfg.phi), log_p));
}

std::size_t distance_weighted_negative(std::size_t anchor_idx,
                                       std::span<const PairedEmbedding> batch,
                                       std::span<const LabelSet> labels,
                                       const MetricParams& p,
                                       const MiningConfig& cfg,
                                       std::uint64_t stream_key) {
  cfg.validate();
  std::vector<std::size_t> negs;
  std::vector<double> weights;
  double total = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    if (n == anchor_idx || label_equal(labels[anchor_idx], labels[n])) continue;
    const double d = introspective_distance(batch[anchor_idx], batch[n], p);
    const double clamped = std::min(std::max(d, cfg.d_min), 2.0 - cfg.d_min);
    const double w = dw_density(clamped, cfg);
    negs.push_back(n);
    weights.push_back(w);
    total += w;
  }
  if (negs.empty())
    throw std::invalid_argument("distance_weighted_negative: no negatives in batch");

  auto rng = make_rng(mix64(cfg.rng_seed, anchor_idx, stream_key));
  const double u = next_unit(rng) * total;
  double acc = 0.0;
  for (std::size_t k = 0; k < negs.size(); ++k) {
    acc += weights[k];
    if (u < acc) return negs[k];
  }
  return negs.back();
}

}  // namespace ism
