#include "fedsynth/experiment.hpp"

#include "fedsynth/blobs.hpp"
#include "fedsynth/idx.hpp"
#include "fedsynth/log.hpp"
#include "fedsynth/reverse.hpp"

#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace fedsynth {
namespace {

Dataset head(const Dataset& d, std::size_t limit) {
  if (limit == 0 || limit >= d.size()) return d;
  std::vector<std::size_t> idx(limit);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return d.subset(idx);
}

std::string alpha_tag(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void log_round(const std::string& series, const RoundMetrics& m) {
  log::info(series + " round " + std::to_string(m.round) + ": accuracy " + std::to_string(m.test_accuracy) +
            ", upload " + std::to_string(m.upload_floats) + " floats");
}

}  // namespace

ExperimentData prepare_data(const RunConfig& cfg) {
  ExperimentData data;
  data.arch = cfg.arch_descriptor();
  if (cfg.dataset == DatasetKind::blobs) {
    Rng layout = make_stream(cfg.master_seed, "blobs_layout");
    const Matrix means = make_blob_means(cfg.blobs_classes, cfg.blobs_dim, layout);
    Rng train_rng = make_stream(cfg.master_seed, "blobs_train");
    Rng test_rng = make_stream(cfg.master_seed, "blobs_test");
    data.train = sample_blobs(means, cfg.blobs_points_per_class, cfg.blobs_spread, train_rng);
    data.test = sample_blobs(means, cfg.blobs_test_per_class, cfg.blobs_spread, test_rng);
  } else {
    data.train = head(load_idx(cfg.idx_train_images, cfg.idx_train_labels, data.arch.num_classes), cfg.idx_train_limit);
    data.test = head(load_idx(cfg.idx_test_images, cfg.idx_test_labels, data.arch.num_classes), cfg.idx_test_limit);
  }
  if (data.train.dim() != data.arch.input_dim)
    throw ConfigError("dataset dimension " + std::to_string(data.train.dim()) + " does not match arch " + cfg.arch);
  Rng shard_rng = make_stream(cfg.master_seed, "sharding");
  data.clients = cfg.fed.partition == fed::Partition::iid
                     ? fed::shard_iid(data.train, cfg.fed.num_clients, shard_rng, cfg.master_seed)
                     : fed::shard_noniid(data.train, cfg.fed.num_clients, cfg.fed.shards_per_client,
                                         cfg.fed.shard_size, shard_rng, cfg.master_seed);
  return data;
}

nn::ModelParams initial_model(const nn::ArchDescriptor& arch, std::uint64_t master_seed) {
  return nn::init_from_seed(arch, derive_seed(master_seed, "model_init"));
}

std::vector<RoundMetrics> run_trajectory(const RunConfig& cfg, const ExperimentData& data, fed::Transport transport,
                                         const fed::RoundOptions& options,
                                         const std::function<void(const RoundMetrics&)>& on_round) {
  fed::ServerState state{initial_model(data.arch, cfg.master_seed), data.clients, cfg.fed, cfg.distill,
                         cfg.master_seed};
  state.fed.transport = transport;
  std::vector<RoundMetrics> rows;
  for (std::size_t r = 0; r < cfg.fed.rounds; ++r) {
    rows.push_back(fed::run_round(state, r, data.test, options));
    if (on_round) on_round(rows.back());
  }
  return rows;
}

ExperimentOutcome run_experiment(const RunConfig& cfg, const fed::RoundOptions& options) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const fs::path dir(cfg.output_dir);
  ExperimentOutcome outcome;

  {
    std::ofstream snap(dir / "config.snapshot", std::ios::binary | std::ios::trunc);
    snap << to_snapshot(cfg);
    outcome.files.push_back((dir / "config.snapshot").string());
  }

  const ExperimentData data = prepare_data(cfg);
  auto emit = [&](const std::string& name, std::vector<RoundMetrics> rows) {
    write_metrics((dir / (name + ".jsonl")).string(), rows);
    write_timings((dir / (name + ".timing.jsonl")).string(), rows);
    outcome.files.push_back((dir / (name + ".jsonl")).string());
    outcome.series.emplace_back(name, std::move(rows));
  };

  switch (cfg.experiment) {
    case Experiment::compare_transports: {
      auto full = run_trajectory(cfg, data, fed::Transport::full_gradient, options,
                                 [](const RoundMetrics& m) { log_round("full_gradient", m); });
      auto synth = run_trajectory(cfg, data, fed::Transport::synthetic, options,
                                  [](const RoundMetrics& m) { log_round("synthetic", m); });
      std::ofstream diff(dir / "difference.csv", std::ios::binary | std::ios::trunc);
      write_diff_csv(diff, diff_metrics(full, synth));
      outcome.files.push_back((dir / "difference.csv").string());
      emit("full_gradient", std::move(full));
      emit("synthetic", std::move(synth));
      break;
    }
    case Experiment::lr_sweep: {
      std::ofstream summary(dir / "lr_sweep.csv", std::ios::binary | std::ios::trunc);
      summary << "distill_lr,final_accuracy,final_loss\n";
      for (double alpha : cfg.lr_grid) {
        RunConfig sweep = cfg;
        sweep.distill.distill_lr = alpha;
        const std::string name = "alpha_" + alpha_tag(alpha);
        auto rows = run_trajectory(sweep, data, fed::Transport::synthetic, options,
                                   [&](const RoundMetrics& m) { log_round(name, m); });
        summary << alpha_tag(alpha) << ',' << alpha_tag(rows.back().test_accuracy) << ','
                << alpha_tag(rows.back().test_loss) << '\n';
        emit(name, std::move(rows));
      }
      outcome.files.push_back((dir / "lr_sweep.csv").string());
      break;
    }
    case Experiment::double_distill: {
      auto report = reverse::run_double_distill(cfg.fed, cfg.reverse, cfg.distill, data.arch, data.clients, data.test,
                                                cfg.master_seed,
                                                [](const RoundMetrics& m) { log_round("double_distill", m); });
      nlohmann::ordered_json s;
      s["anchor_accuracy"] = report.anchor_accuracy;
      s["failure_events"] = report.failure_events;
      s["anchor_floats"] = report.anchor_floats;
      s["model_param_count"] = nn::param_count(data.arch);
      std::ofstream summary(dir / "double_distill_summary.json", std::ios::binary | std::ios::trunc);
      summary << s.dump(2) << '\n';
      outcome.files.push_back((dir / "double_distill_summary.json").string());
      emit("double_distill", std::move(report.rounds));
      break;
    }
  }
  return outcome;
}

}  // namespace fedsynth
