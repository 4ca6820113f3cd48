#pragma once

// Independent reference computations used as test oracles: naive loops over
// the documented flat layout and central finite differences. Nothing here
// calls into the reverse-mode code paths it checks.

#include "fedsynth/arch.hpp"
#include "fedsynth/rng.hpp"
#include "fedsynth/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using fedsynth::Matrix;
using fedsynth::Vector;
using fedsynth::nn::Activation;
using fedsynth::nn::ArchDescriptor;

inline Matrix naive_forward(const ArchDescriptor& arch, const Vector& w, const Matrix& X) {
  Matrix out(X.rows(), static_cast<Eigen::Index>(arch.num_classes));
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    std::vector<double> a(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) a[j] = X(r, j);
    std::size_t offset = 0;
    const std::size_t layers = arch.hidden_dims.size() + 1;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = l == 0 ? arch.input_dim : arch.hidden_dims[l - 1];
      const std::size_t outw = l + 1 == layers ? arch.num_classes : arch.hidden_dims[l];
      std::vector<double> z(outw);
      for (std::size_t o = 0; o < outw; ++o) {
        double s = w[static_cast<Eigen::Index>(offset + outw * in + o)];
        for (std::size_t i = 0; i < in; ++i) s += w[static_cast<Eigen::Index>(offset + o * in + i)] * a[i];
        z[o] = s;
      }
      offset += (in + 1) * outw;
      if (l + 1 < layers) {
        for (auto& v : z) v = arch.activation == Activation::relu ? std::max(v, 0.0) : std::tanh(v);
      }
      a = std::move(z);
    }
    const double m = *std::max_element(a.begin(), a.end());
    double total = 0.0;
    for (auto& v : a) total += (v = std::exp(v - m));
    for (std::size_t c = 0; c < a.size(); ++c) out(r, static_cast<Eigen::Index>(c)) = a[c] / total;
  }
  return out;
}

inline double naive_kl(const Matrix& pred, const Matrix& labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      const double z = labels(i, c);
      if (z > 0.0) row += z * std::log(z / pred(i, c));
    }
    total += row;
  }
  return total / static_cast<double>(pred.rows());
}

// KL loss as a function of everything, through the naive forward pass.
inline double naive_loss(const ArchDescriptor& arch, const Vector& w, const Matrix& X, const Matrix& Y) {
  const Matrix P = naive_forward(arch, w, X);
  double total = 0.0;
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (Eigen::Index c = 0; c < P.cols(); ++c) total -= Y(i, c) * std::log(P(i, c));
  return total / static_cast<double>(P.rows());  // entropy term omitted: constant in w
}

// Central differences of f over every entry of x (x is restored).
template <class Container>
Container central_diff(const std::function<double()>& f, Container& x, double h) {
  Container g = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = f();
    x.data()[i] = saved - h;
    const double down = f();
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Norm-wise relative error max|a - b| / max(max|b|, floor).
template <class A, class B>
double rel_error(const A& a, const B& b, double floor = 1e-8) {
  const double diff = (a - b).cwiseAbs().maxCoeff();
  return diff / std::max(b.cwiseAbs().maxCoeff(), floor);
}

inline Matrix random_matrix(fedsynth::Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline Matrix random_simplex_rows(fedsynth::Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    double t = 0.0;
    for (Eigen::Index j = 0; j < c; ++j) t += m(i, j) = rng.exponential() + 0.05;
    m.row(i) /= t;
  }
  return m;
}

inline Vector random_vector(fedsynth::Rng& rng, Eigen::Index n, double scale = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

}  // namespace oracle
