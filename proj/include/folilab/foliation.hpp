#ifndef FOLILAB_FOLIATION_HPP
#define FOLILAB_FOLIATION_HPP

#include "folilab/geometry.hpp"

#include <memory>

namespace folilab {

struct FoliatedModel;
struct HorizontalPath;

/// Data attached to a vertically warped metric: the basic function, its
/// chart-frame differential, and the unwarped model it was built from.
struct WarpInfo {
  std::function<double(const ChartPoint&)> phi;
  std::function<Vec(const ChartPoint&)> dphi;
  std::shared_ptr<const FoliatedModel> base;
  std::string family;      // "constant" or "height" for catalog warps
  double amplitude = 0.0;
};

/// A chart-based Riemannian manifold together with a vertical frame field
/// spanning the leaf tangent spaces. The single source of geometric truth
/// for all foliation and holonomy operations.
struct FoliatedModel {
  MetricModel metric;
  /// Columns span the vertical space at p (n x k, full rank k).
  std::function<Mat(const ChartPoint&)> vertical_frame_fn;
  /// Optional analytic derivative: element a is d(frame)/d u_a.
  std::function<Tensor3(const ChartPoint&)> vertical_frame_jac_fn;
  int leaf_dim = 0;
  bool totally_geodesic_claimed = false;
  std::shared_ptr<const WarpInfo> warp;
  /// Optional closed-horizontal-loop generator based at p (model supplied);
  /// index enumerates distinct loop families deterministically. Returns
  /// nullptr when the family is exhausted.
  std::function<std::shared_ptr<HorizontalPath>(const ChartPoint& p,
                                                int index)>
      closed_loop_fn;
  std::string name;

  int dimension() const { return metric.dimension; }
  int horizontal_dim() const { return metric.dimension - leaf_dim; }
};

/// Orthogonal projections onto the vertical and horizontal distributions in
/// chart coordinates: Pv + Ph = I, both g-self-adjoint.
struct Projectors {
  ChartPoint base;
  Mat Pv, Ph;
};

/// The skew form omega(X_i, X_j) = <A_{X_i} X_j, xi> on an orthonormal
/// horizontal frame; a point is fat for xi exactly when omega is nonsingular.
struct FatnessForm {
  ChartPoint base;
  TangentVector xi;
  Mat omega;
  Mat horizontal_frame;  // the frame omega is expressed in (columns)
};

Projectors projectors(const FoliatedModel& fm, const ChartPoint& p);

/// Deterministic orthonormal frames (Gram-Schmidt with fixed pivot order).
Mat orthonormal_vertical_frame(const FoliatedModel& fm, const ChartPoint& p);
Mat orthonormal_horizontal_frame(const FoliatedModel& fm, const ChartPoint& p);

/// Pointwise evaluation kit for the O'Neill tensors: fixes metric,
/// projectors and Christoffels at one point, then evaluates A and S against
/// many arguments. Transport precomputation leans on this, so the matrix
/// builders avoid redundant projector evaluations.
class OneillPoint {
 public:
  OneillPoint(const FoliatedModel& fm, const ChartPoint& p);

  const ChartPoint& point() const { return p_; }
  const Mat& metric() const { return g_; }
  const Projectors& proj() const { return pr_; }
  const Tensor3& gamma() const { return gamma_; }

  /// d/ds Ph(p + s dir) at s = 0 (4th-order differences of the projector).
  Mat dph(const Vec& dir) const;

  /// A_X as a matrix on horizontal vectors: A_X Y = Pv(dPh/dX Y + G(X) Ph Y).
  Mat a_matrix(const Vec& X) const;

  /// S_X xi = -Pv(dPh/dxi X + G(xi) Ph X) for one vertical xi.
  Vec s_apply(const Vec& X, const Vec& xi) const;

  /// xi -> A*_X xi assembled on the given orthonormal horizontal frame.
  Mat astar_matrix(const Vec& X, const Mat& horizontal_frame) const;

  /// xi -> S_X xi assembled on the given orthonormal vertical frame.
  Mat s_matrix(const Vec& X, const Mat& vertical_frame) const;

 private:
  const FoliatedModel* fm_;
  ChartPoint p_;
  Mat g_;
  Projectors pr_;
  Tensor3 gamma_;
};

/// O'Neill tensor A_X Y = (nabla_X Y^h)^v for horizontal X, Y; evaluated by
/// differentiating the projected constant-component extension of Y along X.
/// Antisymmetric and extension-independent (both are standing self-tests).
TangentVector a_tensor(const FoliatedModel& fm, const TangentVector& X,
                       const TangentVector& Y);

/// Same tensor through a parallel-frame extension of Y; used as the
/// independent second route in extension-invariance tests.
TangentVector a_tensor_parallel_ext(const FoliatedModel& fm,
                                    const TangentVector& X,
                                    const TangentVector& Y);

/// Pointwise adjoint A*_X xi: the unique horizontal vector with
/// <A*_X xi, Y> = <xi, A_X Y> for all horizontal Y.
TangentVector a_star(const FoliatedModel& fm, const TangentVector& X,
                     const TangentVector& xi);

/// Shape operator of the leaves, S_X xi = -(nabla_xi X^h)^v; vanishes exactly
/// when the leaves are totally geodesic.
TangentVector s_tensor(const FoliatedModel& fm, const TangentVector& X,
                       const TangentVector& xi);

/// Vertical warping g_phi(X + xi) = g0(X,X) + e^{2 phi} g0(xi,xi) for a basic
/// function phi. Requires totally geodesic leaves on the input; basicness of
/// phi is validated numerically (dphi must annihilate the vertical frame).
FoliatedModel warp_metric(const FoliatedModel& fm,
                          std::function<double(const ChartPoint&)> phi,
                          std::function<Vec(const ChartPoint&)> dphi);

FatnessForm fatness_form(const FoliatedModel& fm, const ChartPoint& p,
                         const TangentVector& xi);

/// min over sampled unit vertical xi of the smallest singular value of the
/// fatness form; strictly positive means p is numerically a fat point.
double fat_point_margin(const FoliatedModel& fm, const ChartPoint& p,
                        int num_xi_samples);

/// A unit horizontal X with A*_X xi = 0, from the null space of the fatness
/// form. Throws NoKernelError when the form is numerically nonsingular.
TangentVector kernel_direction(const FoliatedModel& fm, const ChartPoint& p,
                               const TangentVector& xi);

/// Uniform random unit horizontal / vertical vectors at p.
TangentVector random_horizontal_unit(const FoliatedModel& fm,
                                     const ChartPoint& p, Rng& rng);
TangentVector random_vertical_unit(const FoliatedModel& fm,
                                   const ChartPoint& p, Rng& rng);

}  // namespace folilab

#endif
