#include "fedsynth/reverse.hpp"

#include "fedsynth/accounting.hpp"
#include "fedsynth/log.hpp"
#include "fedsynth/mlp.hpp"
#include "fedsynth/parallel.hpp"
#include "fedsynth/wire.hpp"

#include <chrono>
#include <cstring>
#include <limits>

namespace fedsynth::reverse {

std::string anchor_to_json(const SeedAnchor& anchor) {
  nlohmann::ordered_json j;
  j["format"] = "fedsynth-anchor";
  j["version"] = 1;
  j["init_seed"] = std::to_string(anchor.init_seed);
  j["arch"] = wire::arch_to_json(anchor.arch);
  return j.dump();
}

SeedAnchor anchor_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw wire::FormatError(std::string("anchor: ") + e.what());
  }
  if (j.value("format", "") != "fedsynth-anchor" || j.value("version", 0) != 1)
    throw wire::FormatError("anchor: unrecognized header");
  SeedAnchor a;
  try {
    a.init_seed = std::stoull(j.at("init_seed").get<std::string>());
  } catch (const std::exception& e) {
    throw wire::FormatError(std::string("anchor: bad init_seed: ") + e.what());
  }
  a.arch = wire::arch_from_json(j.at("arch"));
  return a;
}

void ReverseConfig::validate() const {
  if (num_batches == 0 || batch_size == 0 || synth_epochs == 0 || distill_steps == 0 || num_seeds == 0)
    throw std::invalid_argument("reverse: counts must be positive");
  if (!(distill_lr > 0.0)) throw std::invalid_argument("reverse: distill_lr must be positive");
}

distill::DistillConfig ReverseConfig::as_distill_config() const {
  distill::DistillConfig d;
  d.num_synth_batches = num_batches;
  d.synth_batch_size = batch_size;
  d.synth_epochs = synth_epochs;
  d.distill_lr = distill_lr;
  d.distill_steps = distill_steps;
  d.meta_optimizer = distill::MetaOptimizer::adam;
  d.loss_variant = distill::MetaLoss::param_sq;
  d.init_scheme = distill::InitScheme::gaussian;
  d.lr_decay = lr_decay;
  return d;
}

std::size_t select_closest(const std::vector<double>& distances) {
  if (distances.empty()) throw std::invalid_argument("select_closest: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < distances.size(); ++i)
    if (distances[i] < distances[best]) best = i;
  return best;
}

ServerFit fit_server_payload(const SeedAnchor& anchor, const nn::ModelParams& w_server, const ReverseConfig& cfg,
                             std::uint64_t seed) {
  cfg.validate();
  const nn::ModelParams w_init = anchor.expand();
  if (!(w_init.arch == w_server.arch)) throw ShapeError("fit_server_payload: anchor arch differs from server model");
  const Vector theta = w_init.values - w_server.values;
  const double target_norm = theta.norm();

  distill::DistillConfig dcfg = cfg.as_distill_config();
  // Start with steps that add up to the target length.
  if (target_norm > 0.0) dcfg.eta_init = target_norm / static_cast<double>(dcfg.num_steps());
  const Vector unit_scale = Vector::Ones(static_cast<Eigen::Index>(w_init.arch.input_dim));
  const distill::Scorer scorer = [&](const Vector& g) { return (theta - g).squaredNorm(); };

  std::vector<std::optional<distill::DistillResult>> fits(cfg.num_seeds);
  parallel_for(cfg.num_seeds, [&](std::size_t s) {
    Rng rng = make_stream(seed, "reverse_fit", s);
    try {
      auto start = distill::init_payload(w_init.arch, dcfg, unit_scale, nullptr, target_norm, rng);
      fits[s] = distill::fit_payload(w_init, theta, std::move(start), dcfg, scorer, nullptr, unit_scale, rng);
    } catch (const distill::DistillFailure& e) {
      log::warn(std::string("reverse fit seed ") + std::to_string(s) + " failed: " + e.what());
    }
  });

  ServerFit out;
  for (const auto& f : fits)
    out.distances.push_back(f ? (theta - f->decoded).norm() : std::numeric_limits<double>::infinity());
  out.chosen_seed = select_closest(out.distances);
  if (!fits[out.chosen_seed]) throw ReverseFailure("every reverse-distillation seed failed");
  out.payload = std::move(fits[out.chosen_seed]->payload);
  out.decoded = std::move(fits[out.chosen_seed]->decoded);
  out.chosen_distance = out.distances[out.chosen_seed];
  out.relative_error = target_norm > 0.0 ? out.chosen_distance / target_norm : 0.0;
  return out;
}

nn::ModelParams client_restore(const SeedAnchor& anchor, const SyntheticPayload& payload) {
  nn::ModelParams w = anchor.expand();
  if (!(payload.arch == w.arch)) throw ShapeError("client_restore: payload arch differs from anchor");
  const Vector g = distill::update_from_synthetic(payload, w);
  w.values -= g;
  return w;
}

DoubleDistillReport run_double_distill(const fed::FedConfig& fed_cfg, const ReverseConfig& rev,
                                       const distill::DistillConfig& dist, const nn::ArchDescriptor& arch,
                                       std::vector<ClientShard> clients, const Dataset& test,
                                       std::uint64_t master_seed,
                                       const std::function<void(const RoundMetrics&)>& on_round) {
  rev.validate();
  dist.validate();
  fed::FedConfig cfg = fed_cfg;
  cfg.transport = fed::Transport::synthetic;
  cfg.validate();

  const SeedAnchor anchor{derive_seed(master_seed, "model_init"), arch};
  const std::string anchor_wire = anchor_to_json(anchor);
  // Clients enroll once and keep the anchor.
  const SeedAnchor client_anchor = anchor_from_json(anchor_wire);

  fed::ServerState state{anchor.expand(), std::move(clients), cfg, dist, master_seed};
  DoubleDistillReport report;
  report.anchor_accuracy = nn::accuracy(arch, state.model.values, test.X, test.labels);
  report.anchor_floats = 1;

  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    const auto started = std::chrono::steady_clock::now();
    RoundMetrics m;
    ServerFit fit;
    try {
      fit = fit_server_payload(anchor, state.model, rev, derive_seed(master_seed, "reverse_round", r));
    } catch (const ReverseFailure& e) {
      log::warn("round " + std::to_string(r) + ": server fit failed, round aborted: " + e.what());
      m.round = r;
      m.failures = 1;
      ++report.failure_events;
      m.test_accuracy = nn::accuracy(arch, state.model.values, test.X, test.labels);
      m.test_loss = nn::cross_entropy(arch, state.model.values, test.X, test.labels);
      report.rounds.push_back(m);
      if (on_round) on_round(m);
      continue;
    }
    // Download: payload bytes to the clients, who rebuild w_hat.
    const SyntheticPayload received = deserialize_payload(serialize_payload(fit.payload));
    const nn::ModelParams w_hat = client_restore(client_anchor, received);
    nn::ModelParams server_view = anchor.expand();
    server_view.values -= fit.decoded;
    const bool download_match =
        std::memcmp(w_hat.values.data(), server_view.values.data(),
                    static_cast<std::size_t>(w_hat.values.size()) * sizeof(double)) == 0;
    const bool failed_fit = fit.relative_error >= rev.failure_threshold;
    if (failed_fit) ++report.failure_events;

    state.model = w_hat;
    fed::RoundOptions opts;
    opts.download_floats = fed::payload_floats(received, cfg.include_etas) + (r == 0 ? report.anchor_floats : 0);
    m = fed::run_round(state, r, test, opts);
    if (!download_match) ++m.decode_mismatches;
    if (failed_fit) ++m.failures;
    m.server_fit_error = fit.relative_error;
    m.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
    report.rounds.push_back(m);
    if (on_round) on_round(m);
  }
  return report;
}

}  // namespace fedsynth::reverse
