#pragma once

#include "fedsynth/mlp.hpp"
#include "fedsynth/synthetic.hpp"
#include "fedsynth/types.hpp"

#include <concepts>
#include <span>
#include <vector>

namespace fedsynth::nn {

// Norms below this make the normalized steps undefined.
inline constexpr double kZeroNormFloor = 1e-12;

class DegeneratePayload : public NumericError {
 public:
  using NumericError::NumericError;
};

// Anything the unroll can replay: a parameter gradient of a label-driven
// loss plus the derivatives of (v . gradient) with respect to parameters,
// inputs and labels.
template <class L>
concept UnrollLoss = requires(const L& loss, const Vector& w, const Matrix& X, const Matrix& Y,
                              const Vector& v) {
  { loss.loss_grad(w, X, Y) } -> std::convertible_to<Vector>;
  { loss.grad_vjp(w, X, Y, v) } -> std::same_as<DirectionalGrad>;
};

// Meta-gradient of one synthetic batch.
struct LeafGrad {
  Matrix d_X;
  Matrix d_Y;
  double d_eta = 0.0;
};

class UnrollTape;

// g_m = eta_m * r_m / |r_m| with r_m = grad L(w_{m-1}; batch_m),
// w_m = w_{m-1} - g_m, and the result H * Σg_m / |Σg_m|. H = 0 returns the
// zero vector without evaluating anything.
template <UnrollLoss L>
Vector unroll_decode(const L& loss, const Vector& w0, std::span<const SyntheticBatch> batches,
                     std::span<const std::size_t> schedule, double H, UnrollTape* tape = nullptr);

// Backpropagates d(meta-loss)/dg through a recorded unroll. Contributions
// of a batch used at several schedule positions are summed.
template <UnrollLoss L>
std::vector<LeafGrad> meta_grad(const L& loss, std::span<const SyntheticBatch> batches,
                                const UnrollTape& tape, const Vector& d_g);

// Record of one normalized-SGD unroll, enough to backpropagate a scalar
// function of its output into every synthetic leaf.
class UnrollTape {
 public:
  bool recorded() const { return recorded_; }
  std::size_t num_steps() const { return steps_.size(); }
  void clear() {
    steps_.clear();
    recorded_ = false;
  }

 private:
  struct Step {
    std::size_t batch;
    Vector w_prev;
    Vector raw;
    double raw_norm;
  };
  std::vector<Step> steps_;
  Vector total_;
  double total_norm_ = 0.0;
  double scale_ = 0.0;
  std::size_t num_batches_ = 0;
  bool recorded_ = false;

  template <UnrollLoss L>
  friend Vector unroll_decode(const L&, const Vector&, std::span<const SyntheticBatch>,
                              std::span<const std::size_t>, double, UnrollTape*);
  template <UnrollLoss L>
  friend std::vector<LeafGrad> meta_grad(const L&, std::span<const SyntheticBatch>,
                                                const UnrollTape&, const Vector&);
};

template <UnrollLoss L>
Vector unroll_decode(const L& loss, const Vector& w0, std::span<const SyntheticBatch> batches,
                     std::span<const std::size_t> schedule, double H, UnrollTape* tape) {
  if (tape) {
    tape->clear();
    tape->num_batches_ = batches.size();
    tape->scale_ = H;
  }
  if (H == 0.0) {
    if (tape) {
      tape->total_ = Vector::Zero(w0.size());
      tape->recorded_ = true;
    }
    return Vector::Zero(w0.size());
  }
  Vector w = w0;
  Vector total = Vector::Zero(w0.size());
  for (std::size_t m = 0; m < schedule.size(); ++m) {
    const SyntheticBatch& batch = batches[schedule[m]];
    Vector raw = loss.loss_grad(w, batch.X, batch.Y);
    const double norm = raw.norm();
    if (!(norm >= kZeroNormFloor))
      throw DegeneratePayload("unroll step " + std::to_string(m) + ": gradient norm below floor");
    const Vector step = raw * (batch.eta / norm);
    if (tape) tape->steps_.push_back({schedule[m], w, std::move(raw), norm});
    total += step;
    w -= step;
  }
  const double total_norm = total.norm();
  if (!(total_norm >= kZeroNormFloor)) throw DegeneratePayload("unroll: summed update norm below floor");
  Vector g = total * (H / total_norm);
  if (tape) {
    tape->total_ = std::move(total);
    tape->total_norm_ = total_norm;
    tape->recorded_ = true;
  }
  return g;
}

template <UnrollLoss L>
std::vector<LeafGrad> meta_grad(const L& loss, std::span<const SyntheticBatch> batches,
                                const UnrollTape& tape, const Vector& d_g) {
  if (!tape.recorded_) throw std::logic_error("meta_grad: tape holds no recorded unroll");
  if (batches.size() != tape.num_batches_) throw ShapeError("meta_grad: batch count differs from tape");
  if (d_g.size() != tape.total_.size()) throw ShapeError("meta_grad: cotangent has wrong length");

  std::vector<LeafGrad> leaves(batches.size());
  for (std::size_t b = 0; b < batches.size(); ++b) {
    leaves[b].d_X = Matrix::Zero(batches[b].X.rows(), batches[b].X.cols());
    leaves[b].d_Y = Matrix::Zero(batches[b].Y.rows(), batches[b].Y.cols());
  }
  if (tape.scale_ == 0.0) return leaves;

  const Vector unit = tape.total_ / tape.total_norm_;
  const Vector d_total = (d_g - unit * unit.dot(d_g)) * (tape.scale_ / tape.total_norm_);

  Vector d_w = Vector::Zero(d_g.size());  // adjoint of the running parameters
  for (std::size_t m = tape.steps_.size(); m-- > 0;) {
    const auto& step = tape.steps_[m];
    const SyntheticBatch& batch = batches[step.batch];
    const Vector d_step = d_total - d_w;
    const Vector dir = step.raw / step.raw_norm;
    const double along = dir.dot(d_step);
    leaves[step.batch].d_eta += along;
    const Vector d_raw = (d_step - dir * along) * (batch.eta / step.raw_norm);
    DirectionalGrad vjp = loss.grad_vjp(step.w_prev, batch.X, batch.Y, d_raw);
    leaves[step.batch].d_X += vjp.d_X;
    leaves[step.batch].d_Y += vjp.d_Y;
    d_w += vjp.d_params;
  }
  return leaves;
}

}  // namespace fedsynth::nn
