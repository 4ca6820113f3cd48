#pragma once

#include "fedsynth/config.hpp"
#include "fedsynth/dataset.hpp"
#include "fedsynth/fedsim.hpp"
#include "fedsynth/metrics.hpp"

#include <functional>
#include <string>
#include <vector>

namespace fedsynth {

struct ExperimentData {
  nn::ArchDescriptor arch;
  std::vector<ClientShard> clients;
  Dataset train;
  Dataset test;
};

// Builds the dataset and shards it. Depends only on master_seed and the
// data/partition keys, never on transport or distillation settings.
ExperimentData prepare_data(const RunConfig& cfg);

// Initial server model for a run (shared by every transport).
nn::ModelParams initial_model(const nn::ArchDescriptor& arch, std::uint64_t master_seed);

// One federated trajectory of cfg.fed.rounds rounds with the given transport.
std::vector<RoundMetrics> run_trajectory(const RunConfig& cfg, const ExperimentData& data, fed::Transport transport,
                                         const fed::RoundOptions& options = {},
                                         const std::function<void(const RoundMetrics&)>& on_round = {});

struct ExperimentOutcome {
  std::vector<std::string> files;
  // Per series name, the rounds produced.
  std::vector<std::pair<std::string, std::vector<RoundMetrics>>> series;
};

// Runs cfg.experiment and writes its metrics, timings and a resolved config
// snapshot (config.snapshot) into cfg.output_dir.
ExperimentOutcome run_experiment(const RunConfig& cfg, const fed::RoundOptions& options = {});

}  // namespace fedsynth
