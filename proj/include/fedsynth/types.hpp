#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace fedsynth {

// Row-major so that one row is one example and flat parameter blocks map
// directly onto weight matrices.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace fedsynth
