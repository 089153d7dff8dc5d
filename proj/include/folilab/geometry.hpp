#ifndef FOLILAB_GEOMETRY_HPP
#define FOLILAB_GEOMETRY_HPP

#include "folilab/rng.hpp"
#include "folilab/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace folilab {

/// Open chart domain: a coordinate box, optionally intersected with a ball
/// constraint on a contiguous coordinate slice. Every domain keeps a margin
/// between its "core" (where integrators are allowed to stay) and its actual
/// boundary, so finite differences near the core never leave the domain.
struct ChartDomain {
  Vec lo, hi;  // open box bounds

  struct Ball {
    int start = 0;   // first coordinate of the slice
    int count = 0;   // slice length
    double radius = 0.0;
  };
  std::optional<Ball> ball;

  double core_fraction = 0.9;

  bool contains(const Vec& u) const;
  /// Distance from u to the domain boundary (conservative, per-constraint min).
  double boundary_margin(const Vec& u) const;
  bool in_core(const Vec& u) const;

  static ChartDomain box(const Vec& lo, const Vec& hi);
  static ChartDomain cube(int dim, double half_width);
  /// Box crossed with a ball constraint on coordinates [start, start+count).
  static ChartDomain with_ball(int dim, int start, int count, double radius);
};

/// Analytic transition between overlapping charts.
struct ChartTransition {
  int from = 0;
  int to = 0;
  std::function<Vec(const Vec&)> map;
  std::function<Mat(const Vec&)> jacobian;
};

/// Chart-based Riemannian metric: analytic metric evaluation with optional
/// analytic first derivatives (from which Christoffel symbols are exact) and
/// a finite-difference fallback.
struct MetricModel {
  int dimension = 0;
  std::vector<ChartDomain> charts;
  std::vector<ChartTransition> transitions;

  std::function<Mat(const ChartPoint&)> metric_fn;
  /// Optional: d g / d u_a, one matrix per coordinate a.
  std::function<Tensor3(const ChartPoint&)> dmetric_fn;
  /// Optional analytic Christoffel evaluator; derived from dmetric_fn when
  /// models are built through the standard constructors.
  std::function<Tensor3(const ChartPoint&)> christoffel_fn;

  double fd_step = 1e-4;        // step for FD of the metric
  double fd_step_gamma = 1e-3;  // step for FD of Christoffel symbols

  /// Draws a point of the model's sampling domain (used by experiments).
  std::function<ChartPoint(Rng&)> sample_fn;

  std::string name;

  void require_in_domain(const ChartPoint& p) const;
  const ChartTransition* find_transition(int from, int to) const;
};

/// One dense sample of a geodesic: time, point and chart-frame velocity.
struct GeodesicSample {
  double t = 0.0;
  ChartPoint point;
  Vec velocity;
};

/// Seam in a dense sample list: at samples[index] the representation changed
/// (chart switch) or the velocity jumped (segment junction of a broken
/// geodesic). Stores the state seen when approaching the seam from the left.
struct SeamRecord {
  int index = 0;
  ChartPoint left_point;
  Vec left_velocity;
};

/// Dense 4th-order geodesic with uniform time samples. Seams sit on even
/// sample indices so that transport steps (which pair two sample intervals)
/// never straddle a representation change.
struct GeodesicSegment {
  std::string model_name;
  std::vector<GeodesicSample> samples;
  std::vector<SeamRecord> seams;
  double step = 0.0;
};

// -- operations --------------------------------------------------------------

Mat metric_eval(const MetricModel& model, const ChartPoint& p);

/// Christoffel symbols of the second kind, Gamma[k](i,j). Uses the analytic
/// evaluator when available, 4th-order central differences of the metric
/// otherwise.
Tensor3 christoffels(const MetricModel& model, const ChartPoint& p);

/// Finite-difference Christoffels with explicit step (testing/Richardson).
Tensor3 christoffels_fd(const MetricModel& model, const ChartPoint& p,
                        double step);

/// Largest step <= requested such that p +- 2*step stays inside the chart;
/// shrinks up to 4x, then throws DomainError.
double fd_step_for(const MetricModel& model, const ChartPoint& p,
                   double requested);

/// Contraction M(l,m) = sum_i Gamma[l](i,m) X^i, the connection matrix that
/// appears in every covariant derivative along X.
Mat christoffel_contract(const Tensor3& gamma, const Vec& X);

/// Christoffel symbols from a metric and its coordinate derivatives.
Tensor3 christoffels_from(const Mat& g, const Tensor3& dg);

/// Curvature operator R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z
/// - nabla_[X,Y] Z; sign convention fixed so the round sphere has positive
/// sectional curvature.
TangentVector riemann(const MetricModel& model, const ChartPoint& p,
                      const TangentVector& X, const TangentVector& Y,
                      const TangentVector& Z);

/// Unreduced sectional curvature <R(X,Y)Y, X> (no division by the area term).
double unreduced_sectional(const MetricModel& model, const TangentVector& X,
                           const TangentVector& Y);

double inner(const MetricModel& model, const TangentVector& X,
             const TangentVector& Y);
double norm(const MetricModel& model, const TangentVector& X);

/// Classical RK4 on the geodesic equation with automatic chart switching and
/// dense output at uniform t in [0, T]. `steps` is rounded up to an even
/// count so seams stay on even indices.
GeodesicSegment integrate_geodesic(const MetricModel& model,
                                   const TangentVector& v0, double T,
                                   int steps);

/// Re-expresses p in the target chart through a registered transition.
/// Returns the mapped point and the transition Jacobian at p.
std::optional<std::pair<ChartPoint, Mat>> to_chart(const MetricModel& model,
                                                   const ChartPoint& p,
                                                   int target_chart);

/// Coordinate distance between two points, mapping q into p's chart first.
double chart_distance(const MetricModel& model, const ChartPoint& p,
                      const ChartPoint& q);

}  // namespace folilab

#endif
