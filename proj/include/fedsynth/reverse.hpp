#pragma once

#include "fedsynth/dataset.hpp"
#include "fedsynth/distill.hpp"
#include "fedsynth/fedsim.hpp"
#include "fedsynth/metrics.hpp"
#include "fedsynth/params.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fedsynth::reverse {

// Everything a client needs to rebuild the server's initial model.
struct SeedAnchor {
  std::uint64_t init_seed = 0;
  nn::ArchDescriptor arch;

  nn::ModelParams expand() const { return nn::init_from_seed(arch, init_seed); }
};

// Wire format: {"format":"fedsynth-anchor","version":1,"init_seed":"<decimal>","arch":{...}}.
// The seed is a decimal string so 64-bit values survive JSON readers that
// use doubles.
std::string anchor_to_json(const SeedAnchor& anchor);
SeedAnchor anchor_from_json(const std::string& text);

struct ReverseConfig {
  std::size_t num_batches = 10;
  std::size_t batch_size = 10;
  std::size_t synth_epochs = 1;
  std::size_t distill_steps = 600;
  std::size_t num_seeds = 10;
  double distill_lr = 0.2;
  double lr_decay = 0.995;
  // Relative reconstruction error at or above which a round counts as a
  // failure event (the decoded model is barely closer than w_init).
  double failure_threshold = 0.9;

  void validate() const;
  distill::DistillConfig as_distill_config() const;
};

class ReverseFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ServerFit {
  SyntheticPayload payload;
  Vector decoded;
  // ||w_hat - w_server|| per seed; +inf for seeds whose fit failed.
  std::vector<double> distances;
  std::size_t chosen_seed = 0;
  double chosen_distance = 0.0;
  // chosen_distance / ||w_init - w_server|| (0 when the target is zero).
  double relative_error = 0.0;
};

// Fits cfg.num_seeds independent payloads (in parallel) to
// theta_rev = w_init - w_server and returns the one whose decoded model is
// closest to w_server. Throws ReverseFailure if every seed fails.
ServerFit fit_server_payload(const SeedAnchor& anchor, const nn::ModelParams& w_server, const ReverseConfig& cfg,
                             std::uint64_t seed);

// Index of the smallest distance (first on ties); the selection rule of
// fit_server_payload.
std::size_t select_closest(const std::vector<double>& distances);

// w = expand(anchor) - decode(payload, expand(anchor)).
nn::ModelParams client_restore(const SeedAnchor& anchor, const SyntheticPayload& payload);

struct DoubleDistillReport {
  std::vector<RoundMetrics> rounds;
  double anchor_accuracy = 0.0;
  std::size_t failure_events = 0;
  std::uint64_t anchor_floats = 0;
};

// Federated training with synthetic transport in both directions. Clients
// receive the anchor once, then each round a server-fitted payload, from
// which they rebuild w_hat; they train from w_hat and upload synthetic
// payloads; the server's next model is w_hat - aggregate.
DoubleDistillReport run_double_distill(const fed::FedConfig& fed, const ReverseConfig& rev,
                                       const distill::DistillConfig& dist, const nn::ArchDescriptor& arch,
                                       std::vector<ClientShard> clients, const Dataset& test,
                                       std::uint64_t master_seed,
                                       const std::function<void(const RoundMetrics&)>& on_round = {});

}  // namespace fedsynth::reverse
