#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace dck {

using Index = std::int32_t;
using Point = std::array<double, 3>;

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

// Coefficients of a P1 function on the boundary, ordered like IndexSets::boundary.
using BoundaryVector = Vector;
// Coefficients of a P1 function on the whole mesh, ordered by global node index.
using FieldVector = Vector;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotSpdError : public Error {
 public:
  using Error::Error;
};

class SingularSystemError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dck
