#include "ism/mixer.hpp"

#include <stdexcept>

#include "ism/rng.hpp"

namespace ism {

void MixConfig::validate() const {
  if (!(mix_prob >= 0.0 && mix_prob <= 1.0))
    throw std::invalid_argument("MixConfig: mix_prob must be in [0,1]");
  if (!(beta_a > 0.0))
    throw std::invalid_argument("MixConfig: beta_a must be > 0");
}

Vec mix_pair(std::span<const double> x1, std::span<const double> x2, double lam) {
  vec::check_same_dim(x1, x2, "mix_pair");
  Vec out(x1.size());
  for (std::size_t i = 0; i < x1.size(); ++i)
    out[i] = lam * x1[i] + (1.0 - lam) * x2[i];
  return out;
}

bool mix_batch(FeatureBatch& batch, const MixConfig& cfg) {
  cfg.validate();
  const std::size_t n = batch.size();
  if (n < 2) throw std::invalid_argument("mix_batch: batch must have >= 2 samples");
  if (cfg.mix_prob == 0.0) return true;

  // Only singleton-labeled samples are eligible parents; pairing a blend
  // would produce label sets larger than two ids.
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < n; ++i)
    if (batch.labels[i].is_singleton()) pool.push_back(i);

  auto rng = make_rng(cfg.rng_seed);
  shuffle(pool, rng);

  // Greedy cross-class pairing over the shuffled pool.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<bool> used(pool.size(), false);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (used[i]) continue;
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      if (used[j]) continue;
      if (!label_equal(batch.labels[pool[i]], batch.labels[pool[j]])) {
        pairs.emplace_back(pool[i], pool[j]);
        used[i] = used[j] = true;
        break;
      }
    }
  }
  if (pairs.empty()) return false;

  const std::size_t want =
      static_cast<std::size_t>(cfg.mix_prob * static_cast<double>(n / 2) + 1e-9);
  const std::size_t n_mix = std::min(want, pairs.size());

  for (std::size_t k = 0; k < n_mix; ++k) {
    const auto [i, j] = pairs[k];
    const double lam = next_beta_symmetric(rng, cfg.beta_a);
    batch.features.push_back(mix_pair(batch.features[i], batch.features[j], lam));
    batch.labels.push_back(LabelSet::merged(batch.labels[i], batch.labels[j]));
    batch.mixed.push_back(true);
  }
  return true;
}

}  // namespace ism
