#ifndef FOLILAB_TYPES_HPP
#define FOLILAB_TYPES_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace folilab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Rank-3 array T[k](i,j), used for Christoffel symbols and metric derivatives.
using Tensor3 = std::vector<Mat>;

/// A point of the manifold, given as coordinates in one chart of the atlas.
struct ChartPoint {
  int chart_id = 0;
  Vec coords;
};

/// A tangent vector: base point plus components in the chart coordinate frame.
struct TangentVector {
  ChartPoint base;
  Vec components;
};

inline TangentVector make_tangent(const ChartPoint& p, const Vec& v) {
  return TangentVector{p, v};
}

// ---------------------------------------------------------------------------
// Error taxonomy. All errors derive from Error; the C API maps them to codes.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Point outside the declared open domain of its chart.
class DomainError : public Error {
 public:
  DomainError(const std::string& what, int chart_id)
      : Error(what), chart_id(chart_id) {}
  int chart_id = -1;
};

/// Malformed or inconsistent arguments (mismatched base points, bad sizes).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a declared precondition (e.g. non-basic warp function).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Rank-deficient frame or singular Gram matrix.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Ill-conditioned linear algebra (e.g. inverting a near-singular matrix).
class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// Groupoid operation on incompatible endpoints.
class GroupoidError : public Error {
 public:
  using Error::Error;
};

/// Transported field left the vertical bundle beyond tolerance.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, double time)
      : Error(what), failure_time(time) {}
  double failure_time = 0.0;
};

/// Geodesic ran off the atlas; carries the last good state.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double time, ChartPoint last_point,
                   Vec last_velocity)
      : Error(what),
        failure_time(time),
        last_point(std::move(last_point)),
        last_velocity(std::move(last_velocity)) {}
  double failure_time = 0.0;
  ChartPoint last_point;
  Vec last_velocity;
};

/// The model itself is broken (e.g. horizontality not preserved): not a user
/// error.
class ModelConsistencyError : public Error {
 public:
  using Error::Error;
};

/// A Monte Carlo routine could not draw enough admissible samples.
class SamplingError : public Error {
 public:
  SamplingError(const std::string& what, int found)
      : Error(what), samples_found(found) {}
  int samples_found = 0;
};

/// Requested kernel direction does not exist (form numerically nonsingular).
class NoKernelError : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace folilab

#endif
