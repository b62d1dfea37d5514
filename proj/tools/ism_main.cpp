// Command line front end: train, eval, sweep, gradcheck, gen-data, report.
// Exit codes: 0 success, 1 partial sweep, 2 config/data error, 3 training
// aborted on a non-finite loss, 4 gradient check failure.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ism/checkpoint.hpp"
#include "ism/config.hpp"
#include "ism/data.hpp"
#include "ism/encoder.hpp"
#include "ism/eval.hpp"
#include "ism/gradcheck.hpp"
#include "ism/rng.hpp"
#include "ism/trainer.hpp"

namespace fs = std::filesystem;
using namespace ism;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartialSweep = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNanAbort = 3;
constexpr int kExitGradCheck = 4;

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<int> singleton_labels(const Dataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& set : data.labels) out.push_back(set.sole_id());
  return out;
}

struct Metrics {
  std::vector<std::pair<std::size_t, double>> recall;
  double r_prec = 0.0;
  double map_r = 0.0;
  double nmi_score = 0.0;
};

Metrics evaluate_split(const Encoder& encoder, const Dataset& test,
                       const RunConfig& cfg) {
  const auto embeddings = encoder.forward(test.features);
  const auto labels = singleton_labels(test);
  const RetrievalIndex index = build_index(embeddings, cfg.eval_mode, cfg.metric);
  Metrics m;
  for (std::size_t k : cfg.recall_ks)
    m.recall.emplace_back(k, recall_at_k(index, labels, k));
  m.r_prec = r_precision(index, labels);
  m.map_r = map_at_r(index, labels);
  m.nmi_score = cluster_nmi(embeddings, labels, mix64(cfg.seed, 900));
  return m;
}

void write_metrics(std::ostream& out, const RunConfig& cfg, const Metrics& m) {
  out << "mode " << distance_mode_name(cfg.eval_mode) << '\n';
  for (const auto& [k, v] : m.recall)
    out << "recall@" << k << ' ' << fmt(v) << '\n';
  out << "r_precision " << fmt(m.r_prec) << '\n';
  out << "map_at_r " << fmt(m.map_r) << '\n';
  out << "nmi " << fmt(m.nmi_score) << '\n';
}

Dataset dataset_for(const RunConfig& cfg) {
  return cfg.data_csv.empty() ? generate_synthetic(cfg.synth)
                              : load_csv(cfg.data_csv);
}

Encoder encoder_from_checkpoint(const Checkpoint& ck) {
  std::vector<Tensor> enc_tensors;
  for (const auto& t : ck.tensors)
    if (t.name.rfind("proxy.", 0) != 0) enc_tensors.push_back(t);
  return Encoder(ck.spec, std::move(enc_tensors));
}

// ---------------------------------------------------------------------------

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& sets,
              std::optional<std::uint64_t> seed, const std::string& out_dir) {
  const RunConfig cfg = load_run_config(config_path, sets, seed);
  const Dataset data = dataset_for(cfg);
  const SplitResult split = split_zero_shot(data, cfg.train_fraction);
  fs::create_directories(out_dir);

  std::ofstream log(fs::path(out_dir) / "train_log.jsonl",
                    std::ios::binary | std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open train_log.jsonl for write");
  const TrainResult tr = train(cfg, split.train, &log);
  log.flush();

  nlohmann::json extra;
  extra["run_config"] = run_config_to_json(cfg);
  extra["proxy_labels"] = tr.proxy_labels;
  extra["completed_epochs"] = tr.completed_epochs;
  extra["aborted_nan"] = tr.aborted_nan;
  std::vector<Tensor> all_tensors = tr.params;
  for (const auto& t : tr.proxy_params) all_tensors.push_back(t);
  save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(), tr.spec,
                  all_tensors, extra);

  if (tr.aborted_nan) {
    std::cerr << "training aborted: non-finite loss after "
              << tr.completed_epochs
              << " completed epochs; checkpoint holds the last good state\n";
    return kExitNanAbort;
  }

  const Encoder encoder(tr.spec, tr.params);
  const Metrics m = evaluate_split(encoder, split.test, cfg);
  std::ofstream mf(fs::path(out_dir) / "metrics.txt",
                   std::ios::binary | std::ios::trunc);
  if (!mf) throw std::runtime_error("cannot open metrics.txt for write");
  write_metrics(mf, cfg, m);
  write_metrics(std::cout, cfg, m);
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_csv,
             const std::vector<std::string>& sets, const std::string& out_dir) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  RunConfig cfg = resolve_config_doc(ck.extra.at("run_config"), sets);
  const Encoder encoder = encoder_from_checkpoint(ck);

  Dataset test;
  if (!data_csv.empty()) {
    test = load_csv(data_csv);
  } else {
    const Dataset data = dataset_for(cfg);
    test = split_zero_shot(data, cfg.train_fraction).test;
  }
  const Metrics m = evaluate_split(encoder, test, cfg);
  write_metrics(std::cout, cfg, m);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream mf(fs::path(out_dir) / "metrics.txt",
                     std::ios::binary | std::ios::trunc);
    if (!mf) throw std::runtime_error("cannot open metrics.txt for write");
    write_metrics(mf, cfg, m);
  }
  return kExitOk;
}

int cmd_sweep(const std::string& config_path,
              const std::vector<std::string>& sets,
              std::optional<std::uint64_t> seed, const std::string& grid_spec,
              const std::string& out_dir) {
  // grid syntax: key=v1|v2;key2=v3|v4 expands to the cartesian product
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  std::size_t start = 0;
  while (start <= grid_spec.size() && !grid_spec.empty()) {
    const auto semi = grid_spec.find(';', start);
    const std::string part = grid_spec.substr(
        start, semi == std::string::npos ? std::string::npos : semi - start);
    const auto eq = part.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("bad grid axis: " + part);
    std::vector<std::string> values;
    std::size_t vstart = eq + 1;
    while (true) {
      const auto bar = part.find('|', vstart);
      values.push_back(part.substr(
          vstart, bar == std::string::npos ? std::string::npos : bar - vstart));
      if (bar == std::string::npos) break;
      vstart = bar + 1;
    }
    if (values.empty() || values.front().empty())
      throw ConfigError("grid axis needs values: " + part);
    axes.emplace_back(part.substr(0, eq), values);
    if (semi == std::string::npos) break;
    start = semi + 1;
  }
  if (axes.empty()) throw ConfigError("sweep needs a non-empty --grid");

  std::size_t n_cells = 1;
  for (const auto& [key, values] : axes) n_cells *= values.size();

  fs::create_directories(out_dir);
  std::ofstream csv(fs::path(out_dir) / "sweep_grid.csv",
                    std::ios::binary | std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot open sweep_grid.csv for write");
  for (const auto& [key, values] : axes) csv << key << ',';
  csv << "status,recall@1,r_precision,map_at_r,nmi,final_loss\n";

  bool any_failed = false;
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    std::vector<std::string> cell_sets = sets;
    std::size_t rem = cell;
    std::vector<std::string> cell_values;
    for (const auto& [key, values] : axes) {
      const std::string& v = values[rem % values.size()];
      rem /= values.size();
      cell_sets.push_back(key + "=" + v);
      cell_values.push_back(v);
    }
    for (const auto& v : cell_values) csv << v << ',';
    try {
      const RunConfig cfg = load_run_config(config_path, cell_sets, seed);
      const Dataset data = dataset_for(cfg);
      const SplitResult split = split_zero_shot(data, cfg.train_fraction);
      const TrainResult tr = train(cfg, split.train, nullptr);
      if (tr.aborted_nan) {
        csv << "nan_abort,,,,,\n";
        any_failed = true;
        continue;
      }
      const Encoder encoder(tr.spec, tr.params);
      const Metrics m = evaluate_split(encoder, split.test, cfg);
      const double r1 = m.recall.empty() ? 0.0 : m.recall.front().second;
      csv << "ok," << fmt(r1) << ',' << fmt(m.r_prec) << ',' << fmt(m.map_r)
          << ',' << fmt(m.nmi_score) << ','
          << fmt(tr.history.empty() ? 0.0 : tr.history.back().loss) << '\n';
    } catch (const std::exception& e) {
      csv << "error,,,,,\n";
      std::cerr << "sweep cell failed: " << e.what() << '\n';
      any_failed = true;
    }
  }
  csv.flush();
  std::cout << "sweep finished: " << n_cells << " cells, results in "
            << (fs::path(out_dir) / "sweep_grid.csv").string() << '\n';
  return any_failed ? kExitPartialSweep : kExitOk;
}

int cmd_gradcheck(std::optional<std::uint64_t> seed, bool inject_sign_bug) {
  GradCheckOptions opt;
  if (seed) opt.seed = *seed;
  opt.inject_sign_bug = inject_sign_bug;
  const GradCheckReport report = run_gradcheck(opt);
  for (const auto& kind : report.kinds) {
    std::cout << kind.name << ": " << kind.cases
              << " cases, max rel err " << fmt(kind.max_rel_err) << '\n';
  }
  std::cout << "total " << report.total_cases << " cases, max rel err "
            << fmt(report.max_rel_err) << ", tol " << fmt(report.tol) << ": "
            << (report.pass ? "PASS" : "FAIL") << '\n';
  return report.pass ? kExitOk : kExitGradCheck;
}

int cmd_gen_data(const std::string& config_path,
                 const std::vector<std::string>& sets,
                 std::optional<std::uint64_t> seed, const std::string& out_csv) {
  RunConfig cfg = load_run_config(config_path, sets, std::nullopt);
  if (seed) cfg.synth.seed = *seed;
  const Dataset data = generate_synthetic(cfg.synth);
  save_csv(out_csv, data);

  std::ifstream written(out_csv, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(written)),
                          std::istreambuf_iterator<char>());
  nlohmann::json meta = {
      {"samples", data.size()},
      {"dim", data.dim()},
      {"n_classes", cfg.synth.n_classes},
      {"per_class", cfg.synth.per_class},
      {"ambiguity_fraction", cfg.synth.ambiguity_fraction},
      {"train_class_fraction", cfg.synth.train_class_fraction},
      {"seed", cfg.synth.seed},
      {"fnv1a64", fnv1a64(std::span<const char>(bytes.data(), bytes.size()))}};
  std::ofstream mf(out_csv + ".json", std::ios::binary | std::ios::trunc);
  if (!mf) throw std::runtime_error("cannot open metadata sidecar for write");
  mf << meta.dump(2) << '\n';
  std::cout << "wrote " << data.size() << " samples to " << out_csv << '\n';
  return kExitOk;
}

int cmd_report(const std::string& checkpoint_path, const std::string& data_csv,
               const std::string& out_dir) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const RunConfig cfg = resolve_config_doc(ck.extra.at("run_config"), {});
  const Encoder encoder = encoder_from_checkpoint(ck);

  // Report on the train side, where the generated blends live.
  Dataset data;
  if (!data_csv.empty())
    data = load_csv(data_csv);
  else
    data = split_zero_shot(dataset_for(cfg), cfg.train_fraction).train;

  const auto embeddings = encoder.forward(data.features);
  std::vector<bool> mixed(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    mixed[i] = data.labels[i].size() > 1;
  const UncertaintyReport rep = uncertainty_report(embeddings, mixed);

  fs::create_directories(out_dir);
  std::ofstream hist(fs::path(out_dir) / "uncertainty_hist.csv",
                     std::ios::binary | std::ios::trunc);
  if (!hist) throw std::runtime_error("cannot open uncertainty_hist.csv");
  hist << "bin_lo,bin_hi,original,mixed\n";
  const double w = UncertaintyReport::kHistMax / UncertaintyReport::kHistBins;
  for (std::size_t b = 0; b <= UncertaintyReport::kHistBins; ++b) {
    if (b < UncertaintyReport::kHistBins)
      hist << fmt(b * w) << ',' << fmt((b + 1) * w);
    else
      hist << fmt(UncertaintyReport::kHistMax) << ",inf";
    hist << ',' << rep.original.hist[b] << ',' << rep.mixed.hist[b] << '\n';
  }
  auto print_group = [](const char* name, const UncertaintyReport::Group& g) {
    std::cout << name << ": count " << g.count << ", mean " << fmt(g.mean)
              << ", stddev " << fmt(g.stddev) << ", min " << fmt(g.min)
              << ", max " << fmt(g.max) << '\n';
  };
  print_group("original", rep.original);
  print_group("mixed", rep.mixed);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uncertainty-weakened metric learning toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_csv, checkpoint_path, grid_spec;
  std::string out_csv;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  bool inject_sign_bug = false;

  auto add_common = [&](CLI::App* cmd, bool with_config = true) {
    if (with_config)
      cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--seed", seed, "seed override");
    cmd->add_option("--set", sets, "config override key=value")
        ->take_all()
        ->expected(-1);
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train and evaluate");
  add_common(train_cmd);
  train_cmd->add_option("--out", out_dir, "output directory")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();
  eval_cmd->add_option("--data", data_csv, "CSV to evaluate on");
  eval_cmd->add_option("--set", sets, "config override key=value")
      ->take_all()
      ->expected(-1);
  eval_cmd->add_option("--out", out_dir, "optional output directory");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "grid of train runs");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--grid", grid_spec, "grid, e.g. metric.tau=1|5;metric.gamma=0|3")
      ->required();
  sweep_cmd->add_option("--out", out_dir, "output directory")->required();

  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check");
  grad_cmd->add_option("--seed", seed, "seed override");
  grad_cmd->add_flag("--inject-sign-bug", inject_sign_bug)->group("");

  CLI::App* gen_cmd = app.add_subcommand("gen-data", "write a synthetic CSV");
  add_common(gen_cmd);
  gen_cmd->add_option("--out", out_csv, "output CSV path")->required();

  CLI::App* report_cmd = app.add_subcommand("report", "uncertainty breakdown");
  report_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();
  report_cmd->add_option("--data", data_csv, "CSV to report on");
  report_cmd->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(config_path, sets, seed, out_dir);
    if (eval_cmd->parsed())
      return cmd_eval(checkpoint_path, data_csv, sets, out_dir);
    if (sweep_cmd->parsed())
      return cmd_sweep(config_path, sets, seed, grid_spec, out_dir);
    if (grad_cmd->parsed()) return cmd_gradcheck(seed, inject_sign_bug);
    if (gen_cmd->parsed()) return cmd_gen_data(config_path, sets, seed, out_csv);
    if (report_cmd->parsed())
      return cmd_report(checkpoint_path, data_csv, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
