#pragma once

/// Run configuration for the CLI: one JSON document covering data, metric,
/// loss, mixing, encoder, and optimizer settings. Values resolve with the
/// precedence defaults < config file < --set overrides < --seed flag.
/// Unknown keys are rejected.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ism/data.hpp"
#include "ism/encoder.hpp"
#include "ism/eval.hpp"
#include "ism/loss.hpp"
#include "ism/mixer.hpp"

namespace ism {

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t epochs = 100;
  std::size_t batch_size = 120;

  std::string data_csv;  // empty: generate synthetic data below
  SyntheticSpec synth;
  double train_fraction = 0.5;  // zero-shot class split

  MetricParams metric;
  LossConfig loss;
  MiningConfig mining;
  MixConfig mix;
  bool mix_enabled = true;

  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t semantic_dim = 16;
  std::size_t uncertainty_dim = 16;
  // When the config never mentions it, normalization follows the loss:
  // on for cosine-based variants, off for distance-based ones.
  bool normalize_semantic = false;
  bool freeze_uncertainty = false;

  AdamWConfig optim;
  DistanceMode eval_mode = DistanceMode::kIsm;
  std::vector<std::size_t> recall_ks{1, 2, 4, 8};

  RunConfig();

  void validate() const;
  EncoderSpec encoder_spec(std::size_t input_dim) const;
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& doc);

/// Thrown for malformed files, unknown keys, or bad override syntax.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dotted key=value pairs ("metric.tau=5") turned into a JSON merge patch.
/// Values parse as JSON scalars where possible, else as bare strings.
nlohmann::json overrides_to_patch(const std::vector<std::string>& overrides);

/// `path` may be empty (defaults only). Overrides are dotted key=value
/// pairs, e.g. "loss.variant=contrastive" or "metric.tau=5".
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides,
                          std::optional<std::uint64_t> seed_flag);

/// Re-resolves a stored config document (e.g. from a checkpoint) with
/// overrides applied on top. Unknown keys are rejected.
RunConfig resolve_config_doc(nlohmann::json doc,
                             const std::vector<std::string>& overrides);

}  // namespace ism
