#include "fedsynth/mlp.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace fedsynth::nn {
namespace {

using ConstMatMap = Eigen::Map<const Matrix>;
using MatMap = Eigen::Map<Matrix>;
using ConstVecMap = Eigen::Map<const Vector>;
using VecMap = Eigen::Map<Vector>;

struct LayerView {
  ConstMatMap W;
  ConstVecMap b;
};

LayerView layer(const ArchDescriptor& arch, const Vector& w, std::size_t l, std::size_t offset) {
  const auto in = static_cast<Eigen::Index>(arch.fan_in(l));
  const auto out = static_cast<Eigen::Index>(arch.fan_out(l));
  return {ConstMatMap(w.data() + offset, out, in), ConstVecMap(w.data() + offset + out * in, out)};
}

void check_inputs(const ArchDescriptor& arch, const Vector& w, const Matrix& X) {
  if (static_cast<std::size_t>(w.size()) != param_count(arch))
    throw ShapeError("parameter vector has " + std::to_string(w.size()) + " entries, arch " +
                     arch_to_string(arch) + " needs " + std::to_string(param_count(arch)));
  if (X.rows() < 1) throw ShapeError("input has no rows");
  if (static_cast<std::size_t>(X.cols()) != arch.input_dim)
    throw ShapeError("input has " + std::to_string(X.cols()) + " columns, arch " +
                     arch_to_string(arch) + " expects " + std::to_string(arch.input_dim));
  if (!X.allFinite()) throw NumericError("input contains non-finite values");
}

void check_labels(const ArchDescriptor& arch, const Matrix& X, const Matrix& Y) {
  if (Y.rows() != X.rows() || static_cast<std::size_t>(Y.cols()) != arch.num_classes)
    throw ShapeError("label matrix is " + std::to_string(Y.rows()) + "x" + std::to_string(Y.cols()) +
                     ", expected " + std::to_string(X.rows()) + "x" + std::to_string(arch.num_classes));
  if (!Y.allFinite()) throw NumericError("labels contain non-finite values");
}

Matrix activate(Activation act, const Matrix& Z) {
  if (act == Activation::relu) return Z.cwiseMax(0.0);
  return Z.array().tanh().matrix();
}

// sigma'(z), expressed through the activation output a = sigma(z).
Matrix activation_slope(Activation act, const Matrix& Z, const Matrix& A) {
  if (act == Activation::relu) return (Z.array() > 0.0).cast<double>().matrix();
  return (1.0 - A.array().square()).matrix();
}

// sigma''(z); zero almost everywhere for relu.
Matrix activation_curvature(Activation act, const Matrix& A) {
  if (act == Activation::relu) return Matrix::Zero(A.rows(), A.cols());
  return (-2.0 * A.array() * (1.0 - A.array().square())).matrix();
}

Matrix softmax_rows(const Matrix& Z) {
  Matrix P = Z.colwise() - Z.rowwise().maxCoeff();
  P = P.array().exp().matrix();
  P.array().colwise() /= P.rowwise().sum().array();
  return P;
}

struct ForwardCache {
  std::vector<Matrix> inputs;  // inputs[l] feeds layer l; inputs[0] = X
  std::vector<Matrix> pre;     // pre-activations of every layer
  Matrix probs;
};

ForwardCache run_forward(const ArchDescriptor& arch, const Vector& w, const Matrix& X) {
  ForwardCache c;
  c.inputs.reserve(arch.num_layers());
  c.pre.reserve(arch.num_layers());
  c.inputs.push_back(X);
  std::size_t offset = 0;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    auto [W, b] = layer(arch, w, l, offset);
    Matrix Z = c.inputs.back() * W.transpose();
    Z.rowwise() += b.transpose();
    if (l + 1 < arch.num_layers()) c.inputs.push_back(activate(arch.activation, Z));
    c.pre.push_back(std::move(Z));
    offset += (arch.fan_in(l) + 1) * arch.fan_out(l);
  }
  c.probs = softmax_rows(c.pre.back());
  return c;
}

}  // namespace

Matrix forward(const ArchDescriptor& arch, const Vector& w, const Matrix& X) {
  check_inputs(arch, w, X);
  return run_forward(arch, w, X).probs;
}

double kl_loss(const Matrix& pred, const Matrix& labels) {
  if (pred.rows() != labels.rows() || pred.cols() != labels.cols())
    throw ShapeError("kl_loss: prediction and label shapes differ");
  if (pred.rows() < 1) throw ShapeError("kl_loss: empty input");
  if (!pred.allFinite() || !labels.allFinite()) throw NumericError("kl_loss: non-finite input");
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i)
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      const double z = labels(i, c);
      if (z != 0.0) total += z * (std::log(z) - std::log(pred(i, c)));
    }
  return total / static_cast<double>(pred.rows());
}

Vector grad(const ArchDescriptor& arch, const Vector& w, const Matrix& X, const Matrix& Y) {
  check_inputs(arch, w, X);
  check_labels(arch, X, Y);
  const ForwardCache c = run_forward(arch, w, X);
  const double inv_n = 1.0 / static_cast<double>(X.rows());

  // dL/dZ_out = (rowsum(Y) * P - Y) / n
  Matrix delta = (c.probs.array().colwise() * Y.rowwise().sum().array() - Y.array()).matrix() * inv_n;

  Vector g(w.size());
  for (std::size_t l = arch.num_layers(); l-- > 0;) {
    const std::size_t offset = layer_offset(arch, l);
    const auto in = static_cast<Eigen::Index>(arch.fan_in(l));
    const auto out = static_cast<Eigen::Index>(arch.fan_out(l));
    MatMap(g.data() + offset, out, in).noalias() = delta.transpose() * c.inputs[l];
    VecMap(g.data() + offset + out * in, out) = delta.colwise().sum().transpose();
    if (l > 0) {
      auto [W, b] = layer(arch, w, l, offset);
      Matrix back = delta * W;
      delta = back.cwiseProduct(activation_slope(arch.activation, c.pre[l - 1], c.inputs[l]));
    }
  }
  return g;
}

DirectionalGrad directional_grad_vjp(const ArchDescriptor& arch, const Vector& w, const Matrix& X,
                                     const Matrix& Y, const Vector& v) {
  check_inputs(arch, w, X);
  check_labels(arch, X, Y);
  if (v.size() != w.size()) throw ShapeError("direction has wrong length");
  const std::size_t L = arch.num_layers();
  const double inv_n = 1.0 / static_cast<double>(X.rows());

  // Tangent-augmented forward pass.
  const ForwardCache c = run_forward(arch, w, X);
  std::vector<Matrix> dot_in(L);   // tangent of each layer input; dot_in[0] = 0
  std::vector<Matrix> dot_pre(L);  // tangent of each pre-activation
  std::vector<Matrix> slope(L);    // sigma'(pre) for hidden layers
  dot_in[0] = Matrix::Zero(X.rows(), X.cols());
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t offset = layer_offset(arch, l);
    auto [W, b] = layer(arch, w, l, offset);
    auto [V, vb] = layer(arch, v, l, offset);
    Matrix dz = c.inputs[l] * V.transpose();
    dz.rowwise() += vb.transpose();
    if (l > 0) dz.noalias() += dot_in[l] * W.transpose();
    if (l + 1 < L) {
      slope[l] = activation_slope(arch.activation, c.pre[l], c.inputs[l + 1]);
      dot_in[l + 1] = slope[l].cwiseProduct(dz);
    }
    dot_pre[l] = std::move(dz);
  }

  const Matrix& P = c.probs;
  const Matrix& dZ = dot_pre[L - 1];
  const Vector row_mass = Y.rowwise().sum();
  const Vector mu = P.cwiseProduct(dZ).rowwise().sum();

  DirectionalGrad out;
  // s = (1/n) Σ (m_i P_ic - Y_ic) dZ_ic
  Matrix bar_dot = (P.array().colwise() * row_mass.array() - Y.array()).matrix() * inv_n;
  out.value = bar_dot.cwiseProduct(dZ).sum();
  out.d_Y = ((-dZ).colwise() + mu) * inv_n;
  Matrix bar_pre = ((dZ.colwise() - mu).array() * P.array()).colwise() * row_mass.array();
  bar_pre *= inv_n;

  out.d_params = Vector::Zero(w.size());
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t offset = layer_offset(arch, l);
    const auto in = static_cast<Eigen::Index>(arch.fan_in(l));
    const auto outw = static_cast<Eigen::Index>(arch.fan_out(l));
    auto [W, b] = layer(arch, w, l, offset);
    auto [V, vb] = layer(arch, v, l, offset);
    MatMap gW(out.d_params.data() + offset, outw, in);
    gW.noalias() += bar_pre.transpose() * c.inputs[l];
    if (l > 0) gW.noalias() += bar_dot.transpose() * dot_in[l];
    VecMap(out.d_params.data() + offset + outw * in, outw) += bar_pre.colwise().sum().transpose();

    Matrix bar_in = bar_pre * W;
    bar_in.noalias() += bar_dot * V;
    if (l == 0) {
      out.d_X = std::move(bar_in);
      break;
    }
    Matrix bar_dot_in = bar_dot * W;
    const Matrix curvature = activation_curvature(arch.activation, c.inputs[l]);
    bar_pre = bar_in.cwiseProduct(slope[l - 1]) +
              bar_dot_in.cwiseProduct(curvature).cwiseProduct(dot_pre[l - 1]);
    bar_dot = bar_dot_in.cwiseProduct(slope[l - 1]);
  }
  return out;
}

Matrix one_hot(std::span<const int> labels, std::size_t num_classes) {
  Matrix Y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
      throw ShapeError("label " + std::to_string(labels[i]) + " out of range");
    Y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return Y;
}

double cross_entropy(const ArchDescriptor& arch, const Vector& w, const Matrix& X,
                     std::span<const int> labels) {
  check_inputs(arch, w, X);
  if (labels.size() != static_cast<std::size_t>(X.rows())) throw ShapeError("label count mismatch");
  const ForwardCache c = run_forward(arch, w, X);
  const Matrix& Z = c.pre.back();
  double total = 0.0;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= Z.cols()) throw ShapeError("label out of range");
    const double m = Z.row(i).maxCoeff();
    const double lse = m + std::log((Z.row(i).array() - m).exp().sum());
    total += lse - Z(i, y);
  }
  return total / static_cast<double>(Z.rows());
}

double accuracy(const ArchDescriptor& arch, const Vector& w, const Matrix& X,
                std::span<const int> labels) {
  const Matrix P = forward(arch, w, X);
  if (labels.size() != static_cast<std::size_t>(P.rows())) throw ShapeError("label count mismatch");
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    Eigen::Index best = 0;
    P.row(i).maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(P.rows());
}

}  // namespace fedsynth::nn
