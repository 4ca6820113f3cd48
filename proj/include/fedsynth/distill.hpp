#pragma once

#include "fedsynth/dataset.hpp"
#include "fedsynth/mlp.hpp"
#include "fedsynth/params.hpp"
#include "fedsynth/rng.hpp"
#include "fedsynth/synthetic.hpp"
#include "fedsynth/unroll.hpp"

#include <functional>
#include <optional>
#include <string_view>

namespace fedsynth::distill {

inline constexpr double kLabelFloor = 1e-6;
inline constexpr double kEtaFloor = 1e-6;

enum class MetaOptimizer { adam, gd };
enum class MetaLoss { param_sq, function_kl };
enum class InitScheme { gaussian, sample_real };

std::string_view to_string(MetaOptimizer v);
std::string_view to_string(MetaLoss v);
std::string_view to_string(InitScheme v);
MetaOptimizer parse_meta_optimizer(std::string_view s);
MetaLoss parse_meta_loss(std::string_view s);
InitScheme parse_init_scheme(std::string_view s);

struct DistillConfig {
  std::size_t num_synth_batches = 5;
  std::size_t synth_batch_size = 10;
  std::size_t synth_epochs = 5;
  double distill_lr = 0.2;
  std::size_t distill_steps = 300;
  MetaOptimizer meta_optimizer = MetaOptimizer::adam;
  MetaLoss loss_variant = MetaLoss::param_sq;
  InitScheme init_scheme = InitScheme::gaussian;
  // Multiplies the meta learning rate after every step.
  double lr_decay = 0.995;
  // Initial step length of every synthetic batch; callers normally set it
  // to the clients' local learning rate.
  double eta_init = 0.02;

  std::size_t num_steps() const { return num_synth_batches * synth_epochs; }
  void validate() const;
};

class DistillFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The shared decoder. Client and server call exactly this.
Vector update_from_synthetic(const SyntheticPayload& payload, const nn::ModelParams& w0);

double param_sq_loss(const Vector& theta, const Vector& g);

// Mean KL between the predictions of w0 - theta and w0 - g on client_X.
double function_kl_loss(const Matrix& client_X, const nn::ModelParams& w0, const Vector& theta,
                        const Vector& g);

// The configured meta-loss of a decoded update g against theta.
// function_kl needs the client inputs.
double meta_loss_value(MetaLoss variant, const nn::ModelParams& w0, const Vector& theta, const Vector& g,
                       const Matrix* client_X);

struct MetaGradient {
  double loss = 0.0;
  Vector decoded;
  std::vector<nn::LeafGrad> leaves;  // one per payload batch
};

// Decodes the payload and backpropagates the meta-loss into every X, Y and
// eta leaf.
MetaGradient meta_gradient(const SyntheticPayload& payload, const nn::ModelParams& w0, const Vector& theta,
                           MetaLoss variant, const Matrix* client_X);

// Per row: clamp to [kLabelFloor, inf), then renormalize.
Matrix project_simplex(const Matrix& Y);

// Keeps the candidate with the lowest score seen so far; ties keep the
// incumbent.
class BestTracker {
 public:
  bool offer(const SyntheticPayload& candidate, double score, const Vector& decoded);
  bool empty() const { return !best_.has_value(); }
  double score() const { return score_; }
  const SyntheticPayload& payload() const { return *best_; }
  const Vector& decoded() const { return decoded_; }
  std::size_t offers() const { return offers_; }

 private:
  std::optional<SyntheticPayload> best_;
  Vector decoded_;
  double score_ = 0.0;
  std::size_t offers_ = 0;
};

// Cross-entropy of the client's hard labels under w0 - g.
double client_ce(const ClientShard& client, const nn::ModelParams& w0, const Vector& g);

// Decodes the candidate and offers it to the tracker scored by client_ce.
bool track_best(BestTracker& tracker, const SyntheticPayload& candidate, const ClientShard& client,
                const nn::ModelParams& w0);

struct DistillResult {
  SyntheticPayload payload;
  // The fitting side's own decode of `payload`.
  Vector decoded;
  double best_score = 0.0;
  double initial_param_sq = 0.0;
  double final_param_sq = 0.0;
  std::size_t degenerate_steps = 0;
  std::size_t decoder_calls = 0;
};

// Initial payload for a fit: gaussian covariates scaled by `feature_scale`
// (or perturbed copies of `real_X` rows for sample_real), near-uniform soft
// labels with Dirichlet(1) jitter, every eta = cfg.eta_init.
SyntheticPayload init_payload(const nn::ArchDescriptor& arch, const DistillConfig& cfg,
                              const Vector& feature_scale, const Matrix* real_X, double H, Rng& rng);

// Per-feature standard deviation of the rows of X.
Vector feature_stddev(const Matrix& X);

// Scores a decoded update; lower is better.
using Scorer = std::function<double(const Vector& g)>;

// The meta-optimization loop shared by client uploads and server
// downloads: fits `start` so that decoding it from w0 reproduces theta.
// Returns the best-scored iterate. Throws DistillFailure when every step
// was degenerate.
DistillResult fit_payload(const nn::ModelParams& w0, const Vector& theta, SyntheticPayload start,
                          const DistillConfig& cfg, const Scorer& scorer, const Matrix* kl_inputs,
                          const Vector& feature_scale, Rng& rng);

// Encodes a client's true local update theta into a synthetic payload.
DistillResult client_update(const ClientShard& client, const nn::ModelParams& w0, const Vector& theta,
                            const DistillConfig& cfg, Rng& rng);

}  // namespace fedsynth::distill
