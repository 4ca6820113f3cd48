#pragma once

#include "fedsynth/dataset.hpp"
#include "fedsynth/distill.hpp"
#include "fedsynth/metrics.hpp"
#include "fedsynth/params.hpp"
#include "fedsynth/rng.hpp"

#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace fedsynth::fed {

enum class Partition { iid, noniid };
enum class Transport { full_gradient, synthetic };

std::string_view to_string(Partition p);
std::string_view to_string(Transport t);
Partition parse_partition(std::string_view s);
Transport parse_transport(std::string_view s);

struct FedConfig {
  std::size_t num_clients = 100;
  std::size_t cohort_size = 10;
  std::size_t rounds = 20;
  Partition partition = Partition::iid;
  std::size_t shards_per_client = 2;
  std::size_t shard_size = 300;
  std::size_t local_epochs = 5;
  std::size_t local_batch_size = 10;
  double local_lr = 0.02;
  Transport transport = Transport::full_gradient;
  // Count the M step sizes in upload accounting.
  bool include_etas = false;

  void validate() const;
};

// Seed of client `id`'s private streams.
std::uint64_t client_seed(std::uint64_t master_seed, int client_id);

// Random permutation split into near-equal shards; the first
// (n mod num_clients) shards get one extra point.
std::vector<ClientShard> shard_iid(const Dataset& data, std::size_t num_clients, Rng& rng,
                                   std::uint64_t master_seed);

// Sort by label (stable), cut into contiguous shards of shard_size and deal
// shards_per_client of them to every client at random.
std::vector<ClientShard> shard_noniid(const Dataset& data, std::size_t num_clients,
                                      std::size_t shards_per_client, std::size_t shard_size, Rng& rng,
                                      std::uint64_t master_seed);

// theta = w0 - w_final after local_epochs of minibatch SGD on the client's
// cross-entropy. Minibatches come from `rng`, reshuffled every epoch.
Vector local_update(const ClientShard& client, const nn::ModelParams& w0, const FedConfig& cfg, Rng& rng);

// Σ weights_c * updates_c / Σ weights_c.
Vector aggregate(std::span<const Vector> updates, std::span<const double> weights);

// Upload size of one payload under the configured accounting.
std::uint64_t payload_floats(const SyntheticPayload& payload, bool include_etas);

struct ServerState {
  nn::ModelParams model;
  std::vector<ClientShard> clients;
  FedConfig fed;
  distill::DistillConfig distill;
  std::uint64_t master_seed = 0;
};

struct RoundOptions {
  // Test hook: when set, the synthetic transport skips fitting and uses
  // the hook's result as the decoded update of each client.
  std::function<Vector(const ClientShard&, const nn::ModelParams&, const Vector& theta)> decode_override;
  // Floats broadcast to every cohort member this round; defaults to the
  // full model size when unset.
  std::optional<std::uint64_t> download_floats;
  std::size_t workers = 0;  // 0 = worker_count()
};

// Client ids selected for a round, ascending.
std::vector<int> sample_cohort(std::size_t num_clients, std::size_t cohort_size, std::uint64_t master_seed,
                               std::size_t round_index);

// One round of federated training: cohort sampling, local updates, the
// configured transport, federated averaging and w <- w0 - g.
RoundMetrics run_round(ServerState& state, std::size_t round_index, const Dataset& test,
                       const RoundOptions& options = {});

}  // namespace fedsynth::fed
