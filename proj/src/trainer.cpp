#include "ism/trainer.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "ism/eval.hpp"
#include "ism/mixer.hpp"
#include "ism/rng.hpp"

namespace ism {
namespace {

// Fixed tags for the independent rng substreams of one run.
constexpr std::uint64_t kSeedEncoder = 101;
constexpr std::uint64_t kSeedProxies = 102;
constexpr std::uint64_t kSeedShuffle = 103;
constexpr std::uint64_t kSeedMix = 104;
constexpr std::uint64_t kSeedMining = 105;

std::vector<int> distinct_classes(const Dataset& data) {
  std::set<int> ids;
  for (const auto& set : data.labels)
    ids.insert(set.ids().begin(), set.ids().end());
  return {ids.begin(), ids.end()};
}

}  // namespace

ProxyBank proxy_bank_from_tensors(const std::vector<Tensor>& proxy_params,
                                  const std::vector<int>& proxy_labels) {
  if (proxy_params.size() != 2)
    throw std::invalid_argument("proxy bank needs sem and unc tensors");
  const Tensor& sem = proxy_params[0];
  const Tensor& unc = proxy_params[1];
  if (sem.rows != proxy_labels.size() || unc.rows != proxy_labels.size())
    throw std::invalid_argument("proxy tensor rows mismatch labels");
  ProxyBank bank;
  bank.labels = proxy_labels;
  bank.proxies.resize(proxy_labels.size());
  for (std::size_t q = 0; q < proxy_labels.size(); ++q) {
    bank.proxies[q].semantic.assign(sem.data.begin() + q * sem.cols,
                                    sem.data.begin() + (q + 1) * sem.cols);
    bank.proxies[q].uncertainty.assign(unc.data.begin() + q * unc.cols,
                                       unc.data.begin() + (q + 1) * unc.cols);
  }
  return bank;
}

TrainResult train(const RunConfig& cfg, const Dataset& train_data,
                  std::ostream* log) {
  cfg.validate();
  train_data.validate();
  if (train_data.size() < 2)
    throw std::invalid_argument("train: need at least 2 samples");

  const EncoderSpec spec = cfg.encoder_spec(train_data.dim());
  Encoder encoder(spec, mix64(cfg.seed, kSeedEncoder));

  TrainResult result;
  result.spec = spec;

  const bool with_proxies = loss_uses_proxies(cfg.loss.variant);
  if (with_proxies) {
    result.proxy_labels = distinct_classes(train_data);
    const std::size_t np = result.proxy_labels.size();
    Tensor sem;
    sem.name = "proxy.sem";
    sem.rows = np;
    sem.cols = cfg.semantic_dim;
    sem.data.resize(np * cfg.semantic_dim);
    auto rng = make_rng(mix64(cfg.seed, kSeedProxies));
    const double limit = 1.0 / std::sqrt(static_cast<double>(cfg.semantic_dim));
    for (double& v : sem.data) v = next_uniform(rng, -limit, limit);
    Tensor unc;
    unc.name = "proxy.unc";
    unc.rows = np;
    unc.cols = cfg.uncertainty_dim;
    unc.data.assign(np * cfg.uncertainty_dim, 0.0);  // proxies start certain
    result.proxy_params = {std::move(sem), std::move(unc)};
  }

  AdamW opt_enc(encoder.params(), cfg.optim);
  std::optional<AdamW> opt_proxy;
  if (with_proxies) opt_proxy.emplace(result.proxy_params, cfg.optim);

  const std::size_t n = train_data.size();
  const std::size_t n_batches =
      n >= cfg.batch_size ? n / cfg.batch_size : std::size_t{1};
  const std::size_t batch_len = n >= cfg.batch_size ? cfg.batch_size : n;

  std::vector<Tensor> last_good = encoder.params();
  std::vector<Tensor> last_good_proxy = result.proxy_params;

  MiningConfig mining = cfg.mining;
  mining.n_dim = static_cast<int>(cfg.semantic_dim);

  std::vector<std::size_t> perm(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.optim.lr_schedule != "constant") {
      double lr = cfg.optim.lr;
      if (cfg.optim.lr_schedule == "cosine") {
        const double span =
            static_cast<double>(cfg.epochs > 1 ? cfg.epochs - 1 : 1);
        const double phase =
            std::numbers::pi * static_cast<double>(epoch) / span;
        lr = cfg.optim.lr_min +
             0.5 * (cfg.optim.lr - cfg.optim.lr_min) * (1.0 + std::cos(phase));
      } else if (epoch >= cfg.epochs / 2) {  // "step"
        lr = cfg.optim.lr_min;
      }
      opt_enc.set_lr(lr);
      if (opt_proxy) opt_proxy->set_lr(lr);
    }
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    auto shuffle_rng = make_rng(mix64(cfg.seed, kSeedShuffle, epoch));
    shuffle(perm, shuffle_rng);

    EpochStats stats;
    stats.epoch = epoch;
    double loss_sum = 0.0;
    double u_sum[2] = {0.0, 0.0};
    std::size_t u_count[2] = {0, 0};
    bool aborted = false;

    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::uint64_t gbatch = epoch * n_batches + b;
      FeatureBatch fb;
      fb.features.reserve(batch_len);
      fb.labels.reserve(batch_len);
      for (std::size_t k = 0; k < batch_len; ++k) {
        const std::size_t idx = perm[b * batch_len + k];
        fb.features.push_back(train_data.features[idx]);
        fb.labels.push_back(train_data.labels[idx]);
      }
      // Ambiguous samples count as mixed whether they were blended here or
      // arrived with a set label already.
      fb.mixed.resize(batch_len);
      for (std::size_t k = 0; k < batch_len; ++k)
        fb.mixed[k] = fb.labels[k].size() > 1;
      if (cfg.mix_enabled) {
        MixConfig mix = cfg.mix;
        mix.rng_seed = mix64(cfg.seed, kSeedMix, gbatch);
        mix_batch(fb, mix);
      }

      Encoder::Trace trace;
      const std::vector<PairedEmbedding> embeddings =
          encoder.forward(fb.features, &trace);

      for (std::size_t k = 0; k < embeddings.size(); ++k) {
        const int slot = fb.mixed[k] ? 1 : 0;
        u_sum[slot] += vec::norm(embeddings[k].uncertainty);
        u_count[slot] += 1;
      }

      mining.rng_seed = mix64(cfg.seed, kSeedMining, gbatch);
      ProxyBank bank;
      if (with_proxies)
        bank = proxy_bank_from_tensors(result.proxy_params, result.proxy_labels);
      const LossResult loss =
          compute_loss(embeddings, fb.labels, with_proxies ? &bank : nullptr,
                       cfg.metric, cfg.loss, mining);

      if (!std::isfinite(loss.value)) {
        aborted = true;
        break;
      }
      loss_sum += loss.value;
      stats.clamp_events += loss.clamp_events;
      stats.warning = stats.warning || loss.warning;

      std::vector<Tensor> grads = make_like(encoder.params());
      encoder.backward(fb.features, trace, loss.d_sem, loss.d_unc, grads);
      opt_enc.step(encoder.params(), grads);

      if (with_proxies) {
        std::vector<Tensor> pgrads = make_like(result.proxy_params);
        for (std::size_t q = 0; q < bank.size(); ++q) {
          for (std::size_t d = 0; d < cfg.semantic_dim; ++d)
            pgrads[0].data[q * cfg.semantic_dim + d] = loss.d_proxy_sem[q][d];
          for (std::size_t d = 0; d < cfg.uncertainty_dim; ++d)
            pgrads[1].data[q * cfg.uncertainty_dim + d] = loss.d_proxy_unc[q][d];
        }
        opt_proxy->step(result.proxy_params, pgrads);
      }
    }

    if (aborted) {
      result.aborted_nan = true;
      encoder.params() = last_good;
      result.proxy_params = last_good_proxy;
      break;
    }

    stats.loss = loss_sum / static_cast<double>(n_batches);
    stats.u_norm_original =
        u_count[0] > 0 ? u_sum[0] / static_cast<double>(u_count[0]) : 0.0;
    stats.u_norm_mixed =
        u_count[1] > 0 ? u_sum[1] / static_cast<double>(u_count[1]) : 0.0;
    stats.n_mixed = u_count[1];
    result.history.push_back(stats);
    result.completed_epochs = epoch + 1;
    last_good = encoder.params();
    last_good_proxy = result.proxy_params;

    if (log != nullptr) {
      nlohmann::json line = {{"epoch", stats.epoch},
                             {"loss", stats.loss},
                             {"u_norm_original", stats.u_norm_original},
                             {"u_norm_mixed", stats.u_norm_mixed},
                             {"n_mixed", stats.n_mixed},
                             {"clamp_events", stats.clamp_events},
                             {"warning", stats.warning}};
      (*log) << line.dump() << '\n';
    }
  }

  result.params = encoder.params();
  return result;
}

}  // namespace ism
