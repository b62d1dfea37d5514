#pragma once

/// Training loop: seeded epoch shuffles, within-batch feature mixing, one
/// loss evaluation and AdamW step per batch, per-epoch statistics. Fully
/// deterministic for a fixed config and seed; a non-finite loss aborts the
/// run and rolls the parameters back to the last completed epoch.

#include <cstdint>
#include <ostream>
#include <vector>

#include "ism/config.hpp"
#include "ism/data.hpp"
#include "ism/encoder.hpp"
#include "ism/loss.hpp"

namespace ism {

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean over batches
  double u_norm_original = 0.0;
  double u_norm_mixed = 0.0;  // 0 when the epoch produced no mixed samples
  std::size_t n_mixed = 0;
  long clamp_events = 0;
  bool warning = false;
};

struct TrainResult {
  EncoderSpec spec;
  std::vector<Tensor> params;        // encoder parameters
  std::vector<Tensor> proxy_params;  // "proxy.sem"/"proxy.unc", may be empty
  std::vector<int> proxy_labels;
  std::vector<EpochStats> history;
  bool aborted_nan = false;
  std::size_t completed_epochs = 0;
};

/// Proxies materialized from the trainer's proxy tensors.
ProxyBank proxy_bank_from_tensors(const std::vector<Tensor>& proxy_params,
                                  const std::vector<int>& proxy_labels);

/// Trains on `train_data`; writes one JSON line per epoch to `log` when
/// non-null. Throws ConfigError and friends on bad setups.
TrainResult train(const RunConfig& cfg, const Dataset& train_data,
                  std::ostream* log);

}  // namespace ism
