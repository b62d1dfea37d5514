#include "ism/config.hpp"

#include <fstream>

namespace ism {

RunConfig::RunConfig() {
  loss = LossConfig::defaults_for(LossVariant::kMarginDW);
  metric.tau = 5.0;
  optim.lr = 1e-3;
  optim.weight_decay = 1e-4;
}

void RunConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw ConfigError("train_fraction must be in (0, 1]");
  if (semantic_dim < 1 || uncertainty_dim < 1)
    throw ConfigError("embedding dims must be >= 1");
  if (recall_ks.empty()) throw ConfigError("recall_ks must not be empty");
  for (std::size_t i = 0; i < recall_ks.size(); ++i) {
    if (recall_ks[i] < 1 || (i > 0 && recall_ks[i] <= recall_ks[i - 1]))
      throw ConfigError("recall_ks must be ascending and >= 1");
  }
  try {
    if (data_csv.empty()) synth.validate();
    metric.validate();
    loss.validate();
    mining.validate();
    mix.validate();
    optim.validate();
    encoder_spec(1).validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

EncoderSpec RunConfig::encoder_spec(std::size_t input_dim) const {
  EncoderSpec spec;
  spec.input_dim = input_dim;
  spec.hidden_dims = hidden_dims;
  spec.semantic_dim = semantic_dim;
  spec.uncertainty_dim = uncertainty_dim;
  spec.normalize_semantic = normalize_semantic;
  spec.freeze_uncertainty = freeze_uncertainty;
  return spec;
}

namespace {

std::string cosine_variant_name(CosineVariant v) {
  return v == CosineVariant::kSimilar ? "similar" : "dissimilar";
}

CosineVariant cosine_variant_from_string(const std::string& s) {
  if (s == "similar") return CosineVariant::kSimilar;
  if (s == "dissimilar") return CosineVariant::kDissimilar;
  throw ConfigError("unknown cosine_variant: " + s);
}

// Every object key in `doc` must exist in the defaults document.
void check_keys(const nlohmann::json& defaults, const nlohmann::json& doc,
                const std::string& path) {
  if (!doc.is_object()) return;
  for (const auto& [key, value] : doc.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!defaults.is_object() || !defaults.contains(key))
      throw ConfigError("unknown config key: " + here);
    check_keys(defaults[key], value, here);
  }
}

bool patch_has(const nlohmann::json& patch, const char* section,
               const char* key) {
  return patch.is_object() && patch.contains(section) &&
         patch[section].is_object() && patch[section].contains(key) &&
         !patch[section][key].is_null();
}

}  // namespace

nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["data"] = {{"csv", c.data_csv},
               {"n_classes", c.synth.n_classes},
               {"per_class", c.synth.per_class},
               {"dim", c.synth.dim},
               {"center_scale", c.synth.center_scale},
               {"cluster_spread", c.synth.cluster_spread},
               {"ambiguity_fraction", c.synth.ambiguity_fraction},
               {"train_class_fraction", c.synth.train_class_fraction},
               {"seed", c.synth.seed},
               {"train_fraction", c.train_fraction}};
  j["metric"] = {{"gamma", c.metric.gamma},
                 {"tau", c.metric.tau},
                 {"eps_div", c.metric.eps_div}};
  j["loss"] = {{"variant", loss_variant_name(c.loss.variant)},
               {"xi", c.loss.xi},
               {"omega", c.loss.omega},
               {"delta", c.loss.delta},
               {"ms_alpha", c.loss.ms_alpha},
               {"ms_beta", c.loss.ms_beta},
               {"ms_lambda", c.loss.ms_lambda},
               {"ms_epsilon", c.loss.ms_epsilon},
               {"pa_alpha", c.loss.pa_alpha},
               {"pa_delta", c.loss.pa_delta},
               {"fidelity_mode", c.loss.fidelity_mode},
               {"log_cap", c.loss.log_cap},
               {"cosine_variant", cosine_variant_name(c.loss.cosine_variant)}};
  j["mining"] = {{"phi", c.mining.phi},
                 {"n_dim", c.mining.n_dim},
                 {"d_min", c.mining.d_min}};
  j["mix"] = {{"enabled", c.mix_enabled},
              {"prob", c.mix.mix_prob},
              {"beta_a", c.mix.beta_a}};
  j["encoder"] = {{"hidden_dims", c.hidden_dims},
                  {"semantic_dim", c.semantic_dim},
                  {"uncertainty_dim", c.uncertainty_dim},
                  {"normalize_semantic", c.normalize_semantic},
                  {"freeze_uncertainty", c.freeze_uncertainty}};
  j["optim"] = {{"lr", c.optim.lr},
                {"beta1", c.optim.beta1},
                {"beta2", c.optim.beta2},
                {"eps", c.optim.eps},
                {"weight_decay", c.optim.weight_decay},
                {"lr_schedule", c.optim.lr_schedule},
                {"lr_min", c.optim.lr_min}};
  j["eval"] = {{"mode", distance_mode_name(c.eval_mode)},
               {"recall_ks", c.recall_ks}};
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    const auto& d = j.at("data");
    c.data_csv = d.at("csv").get<std::string>();
    c.synth.n_classes = d.at("n_classes").get<std::size_t>();
    c.synth.per_class = d.at("per_class").get<std::size_t>();
    c.synth.dim = d.at("dim").get<std::size_t>();
    c.synth.center_scale = d.at("center_scale").get<double>();
    c.synth.cluster_spread = d.at("cluster_spread").get<double>();
    c.synth.ambiguity_fraction = d.at("ambiguity_fraction").get<double>();
    c.synth.train_class_fraction = d.at("train_class_fraction").get<double>();
    c.synth.seed = d.at("seed").get<std::uint64_t>();
    c.train_fraction = d.at("train_fraction").get<double>();
    const auto& m = j.at("metric");
    c.metric.gamma = m.at("gamma").get<double>();
    c.metric.tau = m.at("tau").get<double>();
    c.metric.eps_div = m.at("eps_div").get<double>();
    const auto& l = j.at("loss");
    c.loss.variant = loss_variant_from_string(l.at("variant").get<std::string>());
    c.loss.xi = l.at("xi").get<double>();
    c.loss.omega = l.at("omega").get<double>();
    c.loss.delta = l.at("delta").get<double>();
    c.loss.ms_alpha = l.at("ms_alpha").get<double>();
    c.loss.ms_beta = l.at("ms_beta").get<double>();
    c.loss.ms_lambda = l.at("ms_lambda").get<double>();
    c.loss.ms_epsilon = l.at("ms_epsilon").get<double>();
    c.loss.pa_alpha = l.at("pa_alpha").get<double>();
    c.loss.pa_delta = l.at("pa_delta").get<double>();
    c.loss.fidelity_mode = l.at("fidelity_mode").get<bool>();
    c.loss.log_cap = l.at("log_cap").get<double>();
    c.loss.cosine_variant =
        cosine_variant_from_string(l.at("cosine_variant").get<std::string>());
    const auto& mn = j.at("mining");
    c.mining.phi = mn.at("phi").get<double>();
    c.mining.n_dim = mn.at("n_dim").get<int>();
    c.mining.d_min = mn.at("d_min").get<double>();
    const auto& mx = j.at("mix");
    c.mix_enabled = mx.at("enabled").get<bool>();
    c.mix.mix_prob = mx.at("prob").get<double>();
    c.mix.beta_a = mx.at("beta_a").get<double>();
    const auto& e = j.at("encoder");
    c.hidden_dims = e.at("hidden_dims").get<std::vector<std::size_t>>();
    c.semantic_dim = e.at("semantic_dim").get<std::size_t>();
    c.uncertainty_dim = e.at("uncertainty_dim").get<std::size_t>();
    c.normalize_semantic = e.at("normalize_semantic").get<bool>();
    c.freeze_uncertainty = e.at("freeze_uncertainty").get<bool>();
    const auto& o = j.at("optim");
    c.optim.lr = o.at("lr").get<double>();
    c.optim.beta1 = o.at("beta1").get<double>();
    c.optim.beta2 = o.at("beta2").get<double>();
    c.optim.eps = o.at("eps").get<double>();
    c.optim.weight_decay = o.at("weight_decay").get<double>();
    c.optim.lr_schedule = o.at("lr_schedule").get<std::string>();
    c.optim.lr_min = o.at("lr_min").get<double>();
    const auto& ev = j.at("eval");
    c.eval_mode = distance_mode_from_string(ev.at("mode").get<std::string>());
    c.recall_ks = ev.at("recall_ks").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

nlohmann::json overrides_to_patch(const std::vector<std::string>& overrides) {
  nlohmann::json patch = nlohmann::json::object();
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override must look like key=value: " + kv);
    std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    for (auto& ch : key)
      if (ch == '.') ch = '/';
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
      value = raw;  // bare strings are fine
    }
    try {
      patch[nlohmann::json::json_pointer("/" + key)] = value;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad override key '" + kv + "': " + e.what());
    }
  }
  return patch;
}

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides,
                          std::optional<std::uint64_t> seed_flag) {
  nlohmann::json patch = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    try {
      patch = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + path + ": " + e.what());
    }
    if (!patch.is_object()) throw ConfigError("config must be a JSON object");
  }
  patch.merge_patch(overrides_to_patch(overrides));

  const RunConfig defaults;
  nlohmann::json doc = run_config_to_json(defaults);
  check_keys(doc, patch, "");
  doc.merge_patch(patch);
  RunConfig cfg = run_config_from_json(doc);
  if (!patch_has(patch, "encoder", "normalize_semantic"))
    cfg.normalize_semantic = loss_uses_cosine(cfg.loss.variant);
  if (seed_flag) cfg.seed = *seed_flag;
  cfg.validate();
  return cfg;
}

RunConfig resolve_config_doc(nlohmann::json doc,
                             const std::vector<std::string>& overrides) {
  const nlohmann::json patch = overrides_to_patch(overrides);
  const RunConfig defaults;
  const nlohmann::json full = run_config_to_json(defaults);
  check_keys(full, patch, "");
  doc.merge_patch(patch);
  RunConfig cfg = run_config_from_json(doc);
  cfg.validate();
  return cfg;
}

}  // namespace ism
