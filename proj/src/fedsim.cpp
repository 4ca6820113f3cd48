#include "fedsynth/fedsim.hpp"

#include "fedsynth/accounting.hpp"
#include "fedsynth/log.hpp"
#include "fedsynth/mlp.hpp"
#include "fedsynth/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <numeric>
#include <string>

namespace fedsynth {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.X.resize(static_cast<Eigen::Index>(indices.size()), X.cols());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(indices[i]));
    out.labels.push_back(labels[indices[i]]);
  }
  return out;
}

std::vector<std::size_t> Dataset::label_histogram() const {
  std::vector<std::size_t> h(num_classes, 0);
  for (int y : labels) ++h[static_cast<std::size_t>(y)];
  return h;
}

namespace fed {

std::string_view to_string(Partition p) { return p == Partition::iid ? "iid" : "noniid"; }
std::string_view to_string(Transport t) { return t == Transport::full_gradient ? "full_gradient" : "synthetic"; }

Partition parse_partition(std::string_view s) {
  if (s == "iid") return Partition::iid;
  if (s == "noniid") return Partition::noniid;
  throw std::invalid_argument("unknown partition '" + std::string(s) + "'");
}

Transport parse_transport(std::string_view s) {
  if (s == "full_gradient") return Transport::full_gradient;
  if (s == "synthetic") return Transport::synthetic;
  throw std::invalid_argument("unknown transport '" + std::string(s) + "'");
}

void FedConfig::validate() const {
  if (num_clients == 0 || cohort_size == 0 || rounds == 0 || local_batch_size == 0 || shards_per_client == 0 ||
      shard_size == 0)
    throw std::invalid_argument("fed: counts and sizes must be positive");
  if (cohort_size > num_clients) throw std::invalid_argument("fed: cohort_size exceeds num_clients");
  if (!(local_lr > 0.0)) throw std::invalid_argument("fed: local_lr must be positive");
}

std::uint64_t client_seed(std::uint64_t master_seed, int client_id) {
  return derive_seed(master_seed, "client", static_cast<std::uint64_t>(client_id));
}

namespace {

ClientShard make_shard(const Dataset& data, int id, std::span<const std::size_t> indices, std::uint64_t master) {
  Dataset sub = data.subset(indices);
  ClientShard c;
  c.client_id = id;
  c.X = std::move(sub.X);
  c.labels = std::move(sub.labels);
  c.rng_seed = client_seed(master, id);
  return c;
}

}  // namespace

std::vector<ClientShard> shard_iid(const Dataset& data, std::size_t num_clients, Rng& rng,
                                   std::uint64_t master_seed) {
  if (num_clients == 0) throw std::invalid_argument("shard_iid: need at least one client");
  if (num_clients > data.size())
    throw std::invalid_argument("shard_iid: " + std::to_string(num_clients) + " clients but only " +
                                std::to_string(data.size()) + " points");
  const auto perm = rng.permutation(data.size());
  const std::size_t base = data.size() / num_clients;
  const std::size_t extra = data.size() % num_clients;
  std::vector<ClientShard> shards;
  std::size_t pos = 0;
  for (std::size_t c = 0; c < num_clients; ++c) {
    const std::size_t n = base + (c < extra ? 1 : 0);
    shards.push_back(make_shard(data, static_cast<int>(c), std::span(perm).subspan(pos, n), master_seed));
    pos += n;
  }
  return shards;
}

std::vector<ClientShard> shard_noniid(const Dataset& data, std::size_t num_clients,
                                      std::size_t shards_per_client, std::size_t shard_size, Rng& rng,
                                      std::uint64_t master_seed) {
  if (num_clients == 0 || shards_per_client == 0 || shard_size == 0)
    throw std::invalid_argument("shard_noniid: counts must be positive");
  const std::size_t num_shards = num_clients * shards_per_client;
  if (num_shards * shard_size > data.size())
    throw std::invalid_argument("shard_noniid: need " + std::to_string(num_shards * shard_size) +
                                " points, dataset has " + std::to_string(data.size()));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return data.labels[a] < data.labels[b]; });
  const auto deal = rng.permutation(num_shards);
  std::vector<ClientShard> shards;
  for (std::size_t c = 0; c < num_clients; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < shards_per_client; ++k) {
      const std::size_t s = deal[c * shards_per_client + k];
      idx.insert(idx.end(), order.begin() + static_cast<std::ptrdiff_t>(s * shard_size),
                 order.begin() + static_cast<std::ptrdiff_t>((s + 1) * shard_size));
    }
    shards.push_back(make_shard(data, static_cast<int>(c), idx, master_seed));
  }
  return shards;
}

Vector local_update(const ClientShard& client, const nn::ModelParams& w0, const FedConfig& cfg, Rng& rng) {
  if (client.size() == 0) throw ShapeError("local_update: client has no data");
  const Matrix targets = nn::one_hot(client.labels, w0.arch.num_classes);
  Vector w = w0.values;
  const std::size_t n = client.size();
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    const auto perm = rng.permutation(n);
    for (std::size_t start = 0; start < n; start += cfg.local_batch_size) {
      const std::size_t len = std::min(cfg.local_batch_size, n - start);
      Matrix Xb(static_cast<Eigen::Index>(len), client.X.cols());
      Matrix Yb(static_cast<Eigen::Index>(len), targets.cols());
      for (std::size_t i = 0; i < len; ++i) {
        Xb.row(static_cast<Eigen::Index>(i)) = client.X.row(static_cast<Eigen::Index>(perm[start + i]));
        Yb.row(static_cast<Eigen::Index>(i)) = targets.row(static_cast<Eigen::Index>(perm[start + i]));
      }
      w -= cfg.local_lr * nn::grad(w0.arch, w, Xb, Yb);
    }
  }
  return w0.values - w;
}

Vector aggregate(std::span<const Vector> updates, std::span<const double> weights) {
  if (updates.empty()) throw std::invalid_argument("aggregate: no updates");
  if (updates.size() != weights.size()) throw std::invalid_argument("aggregate: one weight per update");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("aggregate: weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("aggregate: weights sum to zero");
  Vector out = Vector::Zero(updates.front().size());
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (updates[i].size() != out.size()) throw ShapeError("aggregate: update lengths differ");
    out += (weights[i] / total) * updates[i];
  }
  return out;
}

std::uint64_t payload_floats(const SyntheticPayload& payload, bool include_etas) {
  return payload_float_count({payload.num_points(), payload.arch.input_dim, payload.arch.num_classes,
                              include_etas, payload.num_steps(), nn::param_count(payload.arch)});
}

std::vector<int> sample_cohort(std::size_t num_clients, std::size_t cohort_size, std::uint64_t master_seed,
                               std::size_t round_index) {
  if (cohort_size > num_clients) throw std::invalid_argument("cohort larger than population");
  Rng rng = make_stream(master_seed, "cohort", round_index);
  // Partial Fisher-Yates: the first cohort_size slots are a uniform sample
  // without replacement.
  std::vector<int> ids(num_clients);
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = 0; i < cohort_size; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.index(num_clients - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(cohort_size);
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

bool bit_identical(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

struct ClientOutcome {
  Vector update;
  double weight = 0.0;
  bool dropped = false;
  bool mismatch = false;
  std::uint64_t upload = 0;
  std::uint64_t decoder_calls = 0;
  std::optional<double> distill_loss;
};

}  // namespace

RoundMetrics run_round(ServerState& state, std::size_t round_index, const Dataset& test,
                       const RoundOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  state.fed.validate();
  if (state.clients.size() != state.fed.num_clients)
    throw std::invalid_argument("run_round: client list does not match num_clients");
  const nn::ModelParams w0 = state.model;
  const auto cohort = sample_cohort(state.fed.num_clients, state.fed.cohort_size, state.master_seed, round_index);
  const std::size_t full = nn::param_count(w0.arch);

  std::vector<ClientOutcome> outcomes(cohort.size());
  auto work = [&](std::size_t k) {
    const ClientShard& client = state.clients[static_cast<std::size_t>(cohort[k])];
    ClientOutcome& out = outcomes[k];
    out.weight = static_cast<double>(client.size());
    Rng local_rng = make_stream(client.rng_seed, "local", round_index);
    Vector theta = local_update(client, w0, state.fed, local_rng);

    if (state.fed.transport == Transport::full_gradient) {
      out.update = std::move(theta);
      out.upload = full;
      return;
    }
    if (options.decode_override) {
      try {
        out.update = options.decode_override(client, w0, theta);
      } catch (const distill::DistillFailure& e) {
        log::warn("round " + std::to_string(round_index) + ": client " + std::to_string(client.client_id) +
                  " dropped: " + e.what());
        out.dropped = true;
        return;
      }
      out.upload = payload_float_count({state.distill.num_synth_batches * state.distill.synth_batch_size,
                                        w0.arch.input_dim, w0.arch.num_classes, state.fed.include_etas,
                                        state.distill.num_steps(), full});
      out.distill_loss = theta.squaredNorm() > 0 ? (theta - out.update).squaredNorm() / theta.squaredNorm() : 0.0;
      return;
    }
    distill::DistillConfig dcfg = state.distill;
    dcfg.eta_init = state.fed.local_lr;
    Rng distill_rng = make_stream(client.rng_seed, "distill", round_index);
    distill::DistillResult fitted;
    try {
      fitted = distill::client_update(client, w0, theta, dcfg, distill_rng);
    } catch (const distill::DistillFailure& e) {
      log::warn("round " + std::to_string(round_index) + ": client " + std::to_string(client.client_id) +
                " dropped: " + e.what());
      out.dropped = true;
      return;
    }
    // Upload: the payload crosses the wire as bytes and the server decodes
    // its own copy.
    const std::string wire_bytes = serialize_payload(fitted.payload);
    const SyntheticPayload received = deserialize_payload(wire_bytes);
    out.update = distill::update_from_synthetic(received, w0);
    out.mismatch = !bit_identical(out.update, fitted.decoded);
    out.upload = payload_floats(received, state.fed.include_etas);
    out.decoder_calls = fitted.decoder_calls;
    out.distill_loss = theta.squaredNorm() > 0 ? (theta - out.update).squaredNorm() / theta.squaredNorm() : 0.0;
  };
  parallel_for(cohort.size(), work, options.workers ? options.workers : worker_count());

  RoundMetrics m;
  m.round = round_index;
  m.cohort = cohort;
  m.download_floats = options.download_floats.value_or(full);
  std::vector<Vector> updates;
  std::vector<double> weights;
  for (auto& out : outcomes) {
    if (out.dropped) {
      ++m.failures;
      continue;
    }
    if (out.mismatch) ++m.decode_mismatches;
    m.upload_floats += out.upload;
    m.decoder_calls += out.decoder_calls;
    if (out.distill_loss) m.distill_losses.push_back(*out.distill_loss);
    updates.push_back(std::move(out.update));
    weights.push_back(out.weight);
  }
  if (updates.empty()) throw std::runtime_error("round " + std::to_string(round_index) + ": every client was dropped");
  const Vector g = aggregate(updates, weights);
  state.model.values = w0.values - g;

  m.test_accuracy = nn::accuracy(state.model.arch, state.model.values, test.X, test.labels);
  m.test_loss = nn::cross_entropy(state.model.arch, state.model.values, test.X, test.labels);
  m.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
  return m;
}

}  // namespace fed
}  // namespace fedsynth
