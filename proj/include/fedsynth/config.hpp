#pragma once

#include "fedsynth/arch.hpp"
#include "fedsynth/distill.hpp"
#include "fedsynth/fedsim.hpp"
#include "fedsynth/reverse.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fedsynth {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Experiment { compare_transports, lr_sweep, double_distill };
enum class DatasetKind { blobs, idx_files };

struct RunConfig {
  Experiment experiment = Experiment::compare_transports;
  DatasetKind dataset = DatasetKind::blobs;
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
  std::string arch = "2-16-3";
  nn::Activation activation = nn::Activation::relu;

  std::size_t blobs_classes = 3;
  std::size_t blobs_points_per_class = 400;
  std::size_t blobs_test_per_class = 100;
  std::size_t blobs_dim = 2;
  double blobs_spread = 0.6;

  std::string idx_train_images;
  std::string idx_train_labels;
  std::string idx_test_images;
  std::string idx_test_labels;
  std::size_t idx_train_limit = 0;  // 0 = all
  std::size_t idx_test_limit = 0;

  fed::FedConfig fed;
  distill::DistillConfig distill;
  reverse::ReverseConfig reverse;
  std::vector<double> lr_grid = {0.03, 0.1, 0.3};

  nn::ArchDescriptor arch_descriptor() const { return nn::parse_arch(arch, activation); }
  // Cross-field checks; throws ConfigError.
  void validate() const;
};

// Flat "key = value" text; '#' starts a comment; blank lines ignored.
// Unknown keys and malformed values throw ConfigError.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);

// Sets one key as if it appeared in a config file.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

// Every key with its resolved value, in a fixed order; parse_config of
// the result reproduces `cfg`.
std::string to_snapshot(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace fedsynth
