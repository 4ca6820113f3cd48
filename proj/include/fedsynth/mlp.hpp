#pragma once

#include "fedsynth/params.hpp"
#include "fedsynth/types.hpp"

#include <span>

namespace fedsynth::nn {

// Softmax probabilities, one row per input row. Throws ShapeError when X
// does not match the architecture and NumericError on non-finite input.
Matrix forward(const ArchDescriptor& arch, const Vector& w, const Matrix& X);
inline Matrix forward(const ModelParams& p, const Matrix& X) { return forward(p.arch, p.values, X); }

// Mean over rows of KL(labels_i || pred_i), with 0 * log 0 = 0.
double kl_loss(const Matrix& pred, const Matrix& labels);

// Gradient with respect to the flat parameters of kl_loss(forward(w, X), Y).
// Y need not be row-stochastic; the expression is differentiated as written,
// which keeps meta-gradients exact when labels are perturbed off the simplex.
Vector grad(const ArchDescriptor& arch, const Vector& w, const Matrix& X, const Matrix& Y);
inline Vector grad(const ModelParams& p, const Matrix& X, const Matrix& Y) {
  return grad(p.arch, p.values, X, Y);
}

// Derivatives of s = v . grad_w L(w; X, Y) with respect to w, X and Y.
// d_params is the Hessian-vector product H v. Computed by pushing the
// tangent v through the forward pass (R-operator) and then running reverse
// mode over the tangent-augmented pass, so the cost is a small constant
// multiple of one gradient evaluation.
struct DirectionalGrad {
  double value = 0.0;
  Vector d_params;
  Matrix d_X;
  Matrix d_Y;
};
DirectionalGrad directional_grad_vjp(const ArchDescriptor& arch, const Vector& w, const Matrix& X,
                                     const Matrix& Y, const Vector& v);

Matrix one_hot(std::span<const int> labels, std::size_t num_classes);

// Mean negative log-likelihood of the hard labels.
double cross_entropy(const ArchDescriptor& arch, const Vector& w, const Matrix& X,
                     std::span<const int> labels);
double accuracy(const ArchDescriptor& arch, const Vector& w, const Matrix& X,
                std::span<const int> labels);

// Adapter giving the unroll engine a loss it can differentiate.
struct MlpLoss {
  ArchDescriptor arch;

  Vector loss_grad(const Vector& w, const Matrix& X, const Matrix& Y) const {
    return grad(arch, w, X, Y);
  }
  DirectionalGrad grad_vjp(const Vector& w, const Matrix& X, const Matrix& Y, const Vector& v) const {
    return directional_grad_vjp(arch, w, X, Y, v);
  }
};

}  // namespace fedsynth::nn
