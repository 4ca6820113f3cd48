// fedsynth: command-line driver.
//
//   fedsynth run --config FILE [--output DIR] [--seed N] [--set key=value]...
//   fedsynth diff A.jsonl B.jsonl [--output FILE]
//   fedsynth account --points N --input-dim D --classes C [--include-etas --steps M]
//                    [--model-params P]
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include "fedsynth/accounting.hpp"
#include "fedsynth/config.hpp"
#include "fedsynth/experiment.hpp"
#include "fedsynth/log.hpp"
#include "fedsynth/metrics.hpp"
#include "fedsynth/parallel.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

int run_command(const std::string& config_path, const std::string& output, const std::optional<std::uint64_t>& seed,
                const std::vector<std::string>& sets) {
  fedsynth::RunConfig cfg;
  try {
    cfg = fedsynth::load_config(config_path);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw fedsynth::ConfigError("--set expects key=value, got '" + kv + "'");
      fedsynth::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!output.empty()) cfg.output_dir = output;
    if (seed) cfg.master_seed = *seed;
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "fedsynth: " << e.what() << '\n';
    return kConfigError;
  }
  try {
    const auto outcome = fedsynth::run_experiment(cfg);
    for (const auto& f : outcome.files) std::cout << f << '\n';
  } catch (const fedsynth::ConfigError& e) {
    std::cerr << "fedsynth: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "fedsynth: run failed: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}

int diff_command(const std::string& a, const std::string& b, const std::string& output) {
  try {
    const auto rows = fedsynth::diff_metrics(fedsynth::read_metrics(a), fedsynth::read_metrics(b));
    if (output.empty()) {
      fedsynth::write_diff_csv(std::cout, rows);
    } else {
      std::ofstream out(output, std::ios::binary | std::ios::trunc);
      fedsynth::write_diff_csv(out, rows);
    }
  } catch (const std::exception& e) {
    std::cerr << "fedsynth: diff failed: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}

int account_command(const fedsynth::CommCost& cost) {
  const auto floats = fedsynth::payload_float_count(cost);
  std::cout << "payload_floats " << floats << '\n';
  if (cost.model_param_count > 0) {
    const double ratio = fedsynth::payload_ratio(cost);
    std::cout << "model_floats " << cost.model_param_count << '\n'
              << std::setprecision(6) << "ratio " << ratio << '\n'
              << std::fixed << std::setprecision(1) << "percent " << 100.0 * ratio << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  fedsynth::tune_allocator();
  CLI::App app{"Federated learning with synthetic-data update compression"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log per-round progress to stderr");

  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  std::string config_path, output;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  run->add_option("--config", config_path, "key = value config file")->required();
  run->add_option("--output", output, "Output directory (overrides output_dir)");
  run->add_option("--seed", seed, "Master seed (overrides master_seed)");
  run->add_option("--set", sets, "Override one config key, key=value");

  auto* diff = app.add_subcommand("diff", "Difference series (b - a) of two metrics files");
  std::string diff_a, diff_b, diff_out;
  diff->add_option("a", diff_a, "Baseline metrics file")->required();
  diff->add_option("b", diff_b, "Compared metrics file")->required();
  diff->add_option("--output", diff_out, "Write CSV here instead of stdout");

  auto* account = app.add_subcommand("account", "Upload float count of a synthetic payload");
  fedsynth::CommCost cost;
  account->add_option("--points", cost.points, "Synthetic points")->required();
  account->add_option("--input-dim", cost.input_dim, "Covariate dimension")->required();
  account->add_option("--classes", cost.num_classes, "Number of classes")->required();
  account->add_flag("--include-etas", cost.include_etas, "Also count the M step sizes");
  account->add_option("--steps", cost.num_steps, "Unroll length M");
  account->add_option("--model-params", cost.model_param_count, "Model size for the ratio");

  for (auto* sub : {run, diff, account}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }
  if (verbose) fedsynth::log::set_level(fedsynth::log::Level::info);

  if (*run) return run_command(config_path, output, seed, sets);
  if (*diff) return diff_command(diff_a, diff_b, diff_out);
  return account_command(cost);
}
