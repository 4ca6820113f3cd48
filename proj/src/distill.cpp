#include "fedsynth/distill.hpp"

#include "fedsynth/log.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace fedsynth::distill {

std::string_view to_string(MetaOptimizer v) { return v == MetaOptimizer::adam ? "adam" : "gd"; }
std::string_view to_string(MetaLoss v) { return v == MetaLoss::param_sq ? "param_sq" : "function_kl"; }
std::string_view to_string(InitScheme v) { return v == InitScheme::gaussian ? "gaussian" : "sample_real"; }

MetaOptimizer parse_meta_optimizer(std::string_view s) {
  if (s == "adam") return MetaOptimizer::adam;
  if (s == "gd") return MetaOptimizer::gd;
  throw std::invalid_argument("unknown meta_optimizer '" + std::string(s) + "'");
}

MetaLoss parse_meta_loss(std::string_view s) {
  if (s == "param_sq") return MetaLoss::param_sq;
  if (s == "function_kl") return MetaLoss::function_kl;
  throw std::invalid_argument("unknown loss_variant '" + std::string(s) + "'");
}

InitScheme parse_init_scheme(std::string_view s) {
  if (s == "gaussian") return InitScheme::gaussian;
  if (s == "sample_real") return InitScheme::sample_real;
  throw std::invalid_argument("unknown init_scheme '" + std::string(s) + "'");
}

void DistillConfig::validate() const {
  if (num_synth_batches == 0 || synth_batch_size == 0 || synth_epochs == 0 || distill_steps == 0)
    throw std::invalid_argument("distill: batch counts, sizes, epochs and steps must be positive");
  if (!(distill_lr > 0.0)) throw std::invalid_argument("distill: distill_lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("distill: lr_decay must be in (0, 1]");
  if (!(eta_init > 0.0)) throw std::invalid_argument("distill: eta_init must be positive");
}

Vector update_from_synthetic(const SyntheticPayload& payload, const nn::ModelParams& w0) {
  payload.validate();
  if (!(payload.arch == w0.arch)) throw ShapeError("payload arch differs from model arch");
  return nn::unroll_decode(nn::MlpLoss{w0.arch}, w0.values, payload.batches, payload.schedule, payload.H);
}

double param_sq_loss(const Vector& theta, const Vector& g) {
  if (theta.size() != g.size()) throw ShapeError("param_sq_loss: length mismatch");
  return (theta - g).squaredNorm();
}

double function_kl_loss(const Matrix& client_X, const nn::ModelParams& w0, const Vector& theta,
                        const Vector& g) {
  if (theta.size() != w0.values.size() || g.size() != w0.values.size())
    throw ShapeError("function_kl_loss: update length mismatch");
  const Matrix target = nn::forward(w0.arch, w0.values - theta, client_X);
  const Matrix induced = nn::forward(w0.arch, w0.values - g, client_X);
  return nn::kl_loss(induced, target);
}

Matrix project_simplex(const Matrix& Y) {
  Matrix out = Y.cwiseMax(kLabelFloor);
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

bool BestTracker::offer(const SyntheticPayload& candidate, double score, const Vector& decoded) {
  ++offers_;
  if (best_ && !(score < score_)) return false;
  best_ = candidate;
  decoded_ = decoded;
  score_ = score;
  return true;
}

double client_ce(const ClientShard& client, const nn::ModelParams& w0, const Vector& g) {
  return nn::cross_entropy(w0.arch, w0.values - g, client.X, client.labels);
}

bool track_best(BestTracker& tracker, const SyntheticPayload& candidate, const ClientShard& client,
                const nn::ModelParams& w0) {
  const Vector g = update_from_synthetic(candidate, w0);
  return tracker.offer(candidate, client_ce(client, w0, g), g);
}

Vector feature_stddev(const Matrix& X) {
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const Matrix centered = X.rowwise() - mean;
  return (centered.colwise().squaredNorm() / static_cast<double>(X.rows())).cwiseSqrt().transpose();
}

SyntheticPayload init_payload(const nn::ArchDescriptor& arch, const DistillConfig& cfg,
                              const Vector& feature_scale, const Matrix* real_X, double H, Rng& rng) {
  cfg.validate();
  const auto rows = static_cast<Eigen::Index>(cfg.synth_batch_size);
  const auto d = static_cast<Eigen::Index>(arch.input_dim);
  const auto c = static_cast<Eigen::Index>(arch.num_classes);
  if (feature_scale.size() != d) throw ShapeError("init_payload: feature scale has wrong length");

  SyntheticPayload p;
  p.arch = arch;
  p.H = H;
  p.schedule = epoch_schedule(cfg.num_synth_batches, cfg.synth_epochs);
  for (std::size_t b = 0; b < cfg.num_synth_batches; ++b) {
    SyntheticBatch batch;
    batch.X.resize(rows, d);
    if (cfg.init_scheme == InitScheme::sample_real) {
      if (!real_X || real_X->rows() == 0) throw ShapeError("sample_real init needs real data");
      for (Eigen::Index i = 0; i < rows; ++i) {
        const auto src = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(real_X->rows())));
        for (Eigen::Index j = 0; j < d; ++j) batch.X(i, j) = (*real_X)(src, j) + rng.normal(0.0, 0.01);
      }
    } else {
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < d; ++j) batch.X(i, j) = rng.normal() * feature_scale[j];
    }
    batch.Y.resize(rows, c);
    for (Eigen::Index i = 0; i < rows; ++i) {
      double total = 0.0;
      for (Eigen::Index k = 0; k < c; ++k) total += batch.Y(i, k) = rng.exponential();
      for (Eigen::Index k = 0; k < c; ++k)
        batch.Y(i, k) = 0.9 / static_cast<double>(c) + 0.1 * batch.Y(i, k) / total;
    }
    batch.Y = project_simplex(batch.Y);
    batch.eta = cfg.eta_init;
    p.batches.push_back(std::move(batch));
  }
  return p;
}

namespace {

struct Moments {
  Matrix m_X, v_X, m_Y, v_Y;
  double m_eta = 0.0, v_eta = 0.0;
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_update(Matrix& x, Matrix& m, Matrix& v, const Matrix& grad, double lr, double c1, double c2) {
  m = kBeta1 * m + (1.0 - kBeta1) * grad;
  v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
  x.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kAdamEps);
}

void adam_update(double& x, double& m, double& v, double grad, double lr, double c1, double c2) {
  m = kBeta1 * m + (1.0 - kBeta1) * grad;
  v = kBeta2 * v + (1.0 - kBeta2) * grad * grad;
  x -= lr * (m / c1) / (std::sqrt(v / c2) + kAdamEps);
}

Vector meta_loss_cotangent(MetaLoss variant, const nn::ModelParams& w0, const Vector& theta,
                           const Vector& g, const Matrix* kl_inputs, const Matrix* kl_targets) {
  if (variant == MetaLoss::param_sq) return 2.0 * (g - theta);
  // d/dg KL(target || f(w0 - g)) = -grad_w at w0 - g
  return -nn::grad(w0.arch, w0.values - g, *kl_inputs, *kl_targets);
}

}  // namespace

double meta_loss_value(MetaLoss variant, const nn::ModelParams& w0, const Vector& theta, const Vector& g,
                       const Matrix* client_X) {
  if (variant == MetaLoss::param_sq) return param_sq_loss(theta, g);
  if (client_X == nullptr) throw std::invalid_argument("function_kl meta-loss needs client inputs");
  return function_kl_loss(*client_X, w0, theta, g);
}

MetaGradient meta_gradient(const SyntheticPayload& payload, const nn::ModelParams& w0, const Vector& theta,
                           MetaLoss variant, const Matrix* client_X) {
  payload.validate();
  if (variant == MetaLoss::function_kl && client_X == nullptr)
    throw std::invalid_argument("function_kl meta-loss needs client inputs");
  const nn::MlpLoss loss{w0.arch};
  nn::UnrollTape tape;
  MetaGradient out;
  out.decoded = nn::unroll_decode(loss, w0.values, payload.batches, payload.schedule, payload.H, &tape);
  out.loss = meta_loss_value(variant, w0, theta, out.decoded, client_X);
  std::optional<Matrix> targets;
  if (variant == MetaLoss::function_kl) targets = nn::forward(w0.arch, w0.values - theta, *client_X);
  const Vector d_g = meta_loss_cotangent(variant, w0, theta, out.decoded, client_X, targets ? &*targets : nullptr);
  out.leaves = nn::meta_grad(loss, payload.batches, tape, d_g);
  return out;
}

DistillResult fit_payload(const nn::ModelParams& w0, const Vector& theta, SyntheticPayload start,
                          const DistillConfig& cfg, const Scorer& scorer, const Matrix* kl_inputs,
                          const Vector& feature_scale, Rng& rng) {
  cfg.validate();
  if (theta.size() != w0.values.size()) throw ShapeError("fit_payload: theta has wrong length");
  if (cfg.loss_variant == MetaLoss::function_kl && kl_inputs == nullptr)
    throw std::invalid_argument("function_kl meta-loss needs client inputs");
  start.H = theta.norm();
  start.validate();

  DistillResult result;
  if (start.H == 0.0) {
    result.payload = std::move(start);
    result.decoded = Vector::Zero(theta.size());
    result.best_score = scorer(result.decoded);
    return result;
  }

  std::optional<Matrix> kl_targets;
  if (cfg.loss_variant == MetaLoss::function_kl)
    kl_targets = nn::forward(w0.arch, w0.values - theta, *kl_inputs);

  const nn::MlpLoss loss{w0.arch};
  SyntheticPayload current = std::move(start);
  std::vector<Moments> moments(current.batches.size());
  for (std::size_t b = 0; b < moments.size(); ++b) {
    const auto& batch = current.batches[b];
    moments[b].m_X = moments[b].v_X = Matrix::Zero(batch.X.rows(), batch.X.cols());
    moments[b].m_Y = moments[b].v_Y = Matrix::Zero(batch.Y.rows(), batch.Y.cols());
  }

  BestTracker tracker;
  nn::UnrollTape tape;
  double lr = cfg.distill_lr;
  std::size_t adam_t = 0;
  bool first = true;

  auto perturb = [&](SyntheticPayload& p) {
    for (auto& batch : p.batches)
      for (Eigen::Index i = 0; i < batch.X.rows(); ++i)
        for (Eigen::Index j = 0; j < batch.X.cols(); ++j)
          batch.X(i, j) += rng.normal(0.0, 0.1 * std::max(feature_scale[j], 0.1));
  };

  // One extra pass at the end scores the final iterate without updating it.
  for (std::size_t step = 0; step <= cfg.distill_steps; ++step) {
    Vector g;
    try {
      g = nn::unroll_decode(loss, w0.values, current.batches, current.schedule, current.H, &tape);
      ++result.decoder_calls;
    } catch (const nn::DegeneratePayload& e) {
      ++result.degenerate_steps;
      log::warn(std::string("distill step ") + std::to_string(step) + " degenerate (" + e.what() +
                "); re-perturbing covariates");
      perturb(current);
      continue;
    }
    const double sq = param_sq_loss(theta, g);
    if (first) {
      result.initial_param_sq = sq;
      first = false;
    }
    tracker.offer(current, scorer(g), g);
    if (step == cfg.distill_steps) break;

    const Vector d_g = meta_loss_cotangent(cfg.loss_variant, w0, theta, g, kl_inputs,
                                           kl_targets ? &*kl_targets : nullptr);
    const auto leaves = nn::meta_grad(loss, current.batches, tape, d_g);

    ++adam_t;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_t));
    for (std::size_t b = 0; b < current.batches.size(); ++b) {
      auto& batch = current.batches[b];
      const auto& leaf = leaves[b];
      if (cfg.meta_optimizer == MetaOptimizer::adam) {
        auto& mom = moments[b];
        adam_update(batch.X, mom.m_X, mom.v_X, leaf.d_X, lr, c1, c2);
        adam_update(batch.Y, mom.m_Y, mom.v_Y, leaf.d_Y, lr, c1, c2);
        adam_update(batch.eta, mom.m_eta, mom.v_eta, leaf.d_eta, lr, c1, c2);
      } else {
        batch.X -= lr * leaf.d_X;
        batch.Y -= lr * leaf.d_Y;
        batch.eta -= lr * leaf.d_eta;
      }
      batch.Y = project_simplex(batch.Y);
      batch.eta = std::max(batch.eta, kEtaFloor);
    }
    lr *= cfg.lr_decay;
  }

  if (tracker.empty())
    throw DistillFailure("every one of " + std::to_string(cfg.distill_steps + 1) +
                         " distillation steps produced a degenerate payload");
  result.payload = tracker.payload();
  result.decoded = tracker.decoded();
  result.best_score = tracker.score();
  result.final_param_sq = param_sq_loss(theta, result.decoded);
  return result;
}

DistillResult client_update(const ClientShard& client, const nn::ModelParams& w0, const Vector& theta,
                            const DistillConfig& cfg, Rng& rng) {
  if (client.size() == 0) throw ShapeError("client_update: client has no data");
  const Vector scale = feature_stddev(client.X);
  SyntheticPayload start = init_payload(w0.arch, cfg, scale, &client.X, theta.norm(), rng);
  Scorer scorer = [&](const Vector& g) { return client_ce(client, w0, g); };
  return fit_payload(w0, theta, std::move(start), cfg, scorer, &client.X, scale, rng);
}

}  // namespace fedsynth::distill
