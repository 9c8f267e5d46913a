#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <type_traits>

#include <Eigen/Dense>

namespace stork {

/// Column-major batch of states: one column per independent state, one row
/// per state dimension. A single state is a one-column batch.
template <class Scalar = double>
using Batch = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised for invalid configurations: bad parameters, mismatched dimensions,
/// unsupported degrees in strict mode, malformed grids. Always thrown before
/// any field evaluation happens.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

template <class T>
struct is_complex : std::false_type {};
template <class T>
struct is_complex<std::complex<T>> : std::true_type {};

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace stork
