#ifndef FOLILAB_HOLONOMY_HPP
#define FOLILAB_HOLONOMY_HPP

#include "folilab/foliation.hpp"

#include <cstdint>
#include <limits>
#include <tuple>

namespace folilab {

/// Recipe for one geodesic leg of a piecewise-geodesic path: a unit
/// horizontal direction is reconstructed from the stored frame coefficients,
/// so paths can be rebuilt with a different speed or discretization.
struct PathLeg {
  Vec direction_coeffs;  // coefficients in the orthonormal horizontal frame
  double length = 0.0;
};

/// A dense, piecewise horizontal curve with cached velocities. Samples sit
/// on a uniform time grid with an even interval count; seams (chart switches
/// and junction kinks of broken geodesics) sit on even indices so transport
/// steps never straddle them.
struct HorizontalPath {
  std::string model_name;
  std::vector<GeodesicSample> samples;
  std::vector<SeamRecord> seams;
  double step = 0.0;
  bool closed = false;
  double closure_gap = std::numeric_limits<double>::quiet_NaN();
  double max_horizontality_drift = 0.0;
  /// Generating recipe when built by random_horizontal_path (reparametrization
  /// tests rebuild from it); empty otherwise.
  ChartPoint recipe_start;
  std::vector<PathLeg> recipe;

  double duration() const { return samples.empty() ? 0.0 : samples.back().t; }
  const GeodesicSample& front() const { return samples.front(); }
  const GeodesicSample& back() const { return samples.back(); }
  /// Number of transport steps (half the sample intervals).
  int transport_steps() const {
    return static_cast<int>((samples.size() - 1) / 2);
  }
};

/// Linear isomorphism V_source -> V_target realized by a horizontal path,
/// expressed in the deterministic orthonormal vertical frames at both ends.
/// The matrix is frame-dependent; singular values, rho and all groupoid
/// invariants are not.
struct HolonomyTransformation {
  ChartPoint source, target;
  Mat matrix;        // k x k
  Mat source_frame;  // n x k orthonormal columns
  Mat target_frame;
  Mat source_dual;   // G * frame, caches the coefficient pairing
  Mat target_dual;
  std::string path_ref;
};

/// A vertical field along a path, sampled at transport nodes.
struct TransportedField {
  enum class Kind { holonomy, dual, parallel };
  Kind kind = Kind::holonomy;
  std::string path_ref;
  std::vector<std::pair<double, TangentVector>> samples;
  double max_verticality_drift = 0.0;

  const TangentVector& endpoint() const { return samples.back().second; }
};

/// Precomputed per-node transport data for one path: evaluating the
/// connection, A* and S against the path velocity once makes every
/// subsequent transport along the same path a sequence of small mat-vecs.
class TransportOperator {
 public:
  TransportOperator(const FoliatedModel& fm, const HorizontalPath& path);

  enum class Kind { holonomy, dual, parallel };

  struct Node {
    Mat rhs_holonomy;  // -(Gamma_c + A* Pv + S Pv)
    Mat rhs_dual;      // -(Gamma_c + A* Pv - S Pv)
    Mat rhs_parallel;  // -Gamma_c
    Mat g;
    Mat Pv;
  };

  /// Field values at every transport node (even path samples).
  std::vector<Vec> integrate(Kind kind, const Vec& xi0) const;

  /// Holonomy matrices c-hat(t_i) in the endpoint orthonormal frames, at
  /// every transport node; element i maps V_{c(0)} to V_{c(t_i)} coefficients.
  std::vector<Mat> transformation_series() const;

  /// Orthonormal vertical frame at transport node i (in that node's chart).
  const Mat& frame_at(int node) const { return frames_[node]; }
  const Mat& metric_at(int node) const { return nodes_[2 * node].g; }
  const Mat& vertical_projector_at(int node) const {
    return nodes_[2 * node].Pv;
  }
  int num_nodes() const { return static_cast<int>(frames_.size()); }
  double node_time(int node) const { return path_->samples[2 * node].t; }
  const ChartPoint& node_point(int node) const {
    return path_->samples[2 * node].point;
  }

  double verticality_drift(int node, const Vec& xi) const;

 private:
  const FoliatedModel* fm_;
  const HorizontalPath* path_;
  std::vector<Node> nodes_;           // one per path sample (stored view)
  std::vector<Node> seam_nodes_;      // left-of-seam view per seam
  std::vector<Mat> seam_jacobians_;   // per seam, chart-change Jacobian or I
  std::vector<int> seam_index_;       // sample index of each seam
  std::vector<Mat> frames_;           // orthonormal vertical frame per node
  const Mat& pick_rhs(const Node& n, Kind k) const;
};

// -- path construction ---------------------------------------------------------

/// Horizontal geodesic from a horizontal vector; checks that horizontality
/// persists (drift beyond 1e-5 signals a broken model, not a user error).
HorizontalPath horizontal_geodesic(const FoliatedModel& fm,
                                   const TangentVector& X, double T,
                                   int steps);

/// Piecewise horizontal geodesic with directions drawn uniformly on the
/// horizontal unit sphere; deterministic given the seed.
HorizontalPath random_horizontal_path(const FoliatedModel& fm,
                                      const ChartPoint& p, int num_segments,
                                      double seg_len, std::uint64_t seed,
                                      int steps_per_segment = 128);

HorizontalPath concatenate(const FoliatedModel& fm, const HorizontalPath& a,
                           const HorizontalPath& b);

/// Rebuilds a recipe-carrying path with a different speed and step count:
/// the same geometric curve under a different parametrization and
/// discretization.
HorizontalPath rebuild_path(const FoliatedModel& fm,
                            const HorizontalPath& path, double speed,
                            int steps_per_segment);

/// The time-reversed path (realizes the groupoid inverse).
HorizontalPath reverse_path(const FoliatedModel& fm,
                            const HorizontalPath& path);

// -- transports and the groupoid ------------------------------------------------

TransportedField transport_holonomy(const FoliatedModel& fm,
                                    const HorizontalPath& path,
                                    const TangentVector& xi0);

TransportedField transport_dual(const FoliatedModel& fm,
                                const HorizontalPath& path,
                                const TangentVector& nu0);

/// Dual transport through inverse-transpose propagation of the holonomy
/// frame matrices; cross-agreement with the direct ODE is a standing
/// self-test.
TransportedField transport_dual_via_frames(const FoliatedModel& fm,
                                           const HorizontalPath& path,
                                           const TangentVector& nu0);

HolonomyTransformation holonomy_transformation(const FoliatedModel& fm,
                                               const HorizontalPath& path);

HolonomyTransformation identity_transformation(const FoliatedModel& fm,
                                               const ChartPoint& p);

/// h2 after h1; endpoints must match within tolerance. Frames are reconciled
/// through the metric pairing when the meeting points differ slightly.
HolonomyTransformation compose(const FoliatedModel& fm,
                               const HolonomyTransformation& h2,
                               const HolonomyTransformation& h1);

HolonomyTransformation invert(const FoliatedModel& fm,
                              const HolonomyTransformation& h);

/// Natural action on vertical vectors and its dual: zeta(h, xi) = h(xi),
/// zeta_bar(h, nu) = (h^*)^{-1}(nu) (inverse transpose in orthonormal
/// frames).
TangentVector zeta(const HolonomyTransformation& h, const TangentVector& xi0);
TangentVector zeta_bar(const HolonomyTransformation& h,
                       const TangentVector& nu0);

/// rho(h, nu0) = |zeta_bar(h, nu0)|^2 with nu0 normalized internally.
double rho(const HolonomyTransformation& h, const TangentVector& nu0);

// -- sampling-based estimates ----------------------------------------------------

struct PathBudget {
  int num_segments = 3;
  double seg_len = 0.5;
  int steps_per_segment = 32;
};

/// max over `budget` random paths from p of the largest singular value of
/// the holonomy transformation; deterministic given the seed and independent
/// of the worker count.
double holonomy_bound_estimate(const FoliatedModel& fm, const ChartPoint& p,
                               int budget, int num_segments, double seg_len,
                               std::uint64_t seed);

struct ThmMaxResult {
  HolonomyTransformation best;
  TangentVector nu;          // zeta_bar(best, nu0) at the target point
  double worst_margin = 0.0; // max over sampled X of K(X, nu) - |A*_X nu|^2
  double rho_best = 0.0;
  /// (budget used, incumbent rho, margin) checkpoints for margin-vs-budget
  /// curves.
  std::vector<std::tuple<int, double, double>> checkpoints;
};

/// Stochastic maximization of rho over transformations sourced at p: random
/// restarts plus greedy extension of the incumbent by short random segments.
/// Reports margins, never certificates.
ThmMaxResult thm_max_search(const FoliatedModel& fm, const ChartPoint& p,
                            const TangentVector& nu0, int budget,
                            std::uint64_t seed,
                            const PathBudget& paths = PathBudget{});

// -- dual-leaf spans -------------------------------------------------------------

/// Running span of vertical vectors pulled back to a base point; rank is
/// counted by singular values above max(1e-8, 1e-8 * sigma_max).
class SpanAccumulator {
 public:
  SpanAccumulator(ChartPoint base, int leaf_dim);
  void add(const Vec& frame_coeffs);
  int rank() const;
  Vec singular_values() const;
  const Mat& vectors() const { return vectors_; }
  const ChartPoint& base() const { return base_; }
  int leaf_dim() const { return leaf_dim_; }
  /// Orthonormal basis of the accumulated span (frame coefficients).
  Mat span_basis() const;
  /// Orthonormal basis of the orthogonal complement within V_p.
  Mat complement_basis() const;

 private:
  ChartPoint base_;
  int leaf_dim_;
  int count_ = 0;
  Mat vectors_;
};

/// Pulls back A_{c'(t_i)} Z_j over an orthonormal horizontal frame through
/// the inverse holonomy transformations and accumulates the span at c(0).
SpanAccumulator dual_leaf_span(const FoliatedModel& fm,
                               const HorizontalPath& path, int num_times);

struct DualOrthogonalityResult {
  bool applicable = false;
  double max_astar_residual = 0.0;
  double max_pairing_residual = 0.0;
};

/// Transports a dual field started orthogonal to the accumulated span and
/// reports how far it drifts from orthogonality (and from ker A*) along the
/// path. Not applicable when the span already fills the vertical space.
DualOrthogonalityResult dual_orthogonality_check(const FoliatedModel& fm,
                                                 const HorizontalPath& path,
                                                 const SpanAccumulator& span);

struct InvariantAverageResult {
  Mat Q;  // k x k inner product on V_p
  double invariance_residual = 0.0;
  int loops_used = 0;
};

/// Monte Carlo average of pullback inner products over closed-loop
/// transformations at p; the residual measures invariance of Q under fresh
/// loop samples.
InvariantAverageResult invariant_metric_average(const FoliatedModel& fm,
                                                const ChartPoint& p,
                                                int loop_budget,
                                                std::uint64_t seed);

}  // namespace folilab

#endif
