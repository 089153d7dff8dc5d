#include "folilab/foliation.hpp"

#include <cmath>

namespace folilab {

namespace {

constexpr double kRawVerticalityTol = 1e-8;

void require_same_base(const TangentVector& X, const TangentVector& Y,
                       const char* op) {
  if (X.base.chart_id != Y.base.chart_id ||
      (X.base.coords - Y.base.coords).norm() > 1e-12)
    throw ArgumentError(std::string(op) + ": arguments at different base points");
}

/// Gram-Schmidt in the metric G over the given candidate columns, fixed
/// left-to-right pivot order; keeps the first `want` independent vectors.
Mat gram_schmidt(const Mat& g, const Mat& candidates, int want,
                 const char* what) {
  const int n = candidates.rows();
  Mat out(n, want);
  int got = 0;
  for (int c = 0; c < candidates.cols() && got < want; ++c) {
    Vec v = candidates.col(c);
    const double scale = std::sqrt(std::max(v.dot(g * v), 0.0));
    for (int i = 0; i < got; ++i) {
      v -= out.col(i).dot(g * v) * out.col(i);
    }
    // second pass for numerical orthogonality
    for (int i = 0; i < got; ++i) {
      v -= out.col(i).dot(g * v) * out.col(i);
    }
    const double nrm = std::sqrt(std::max(v.dot(g * v), 0.0));
    if (nrm <= 1e-10 * std::max(1.0, scale)) continue;
    out.col(got++) = v / nrm;
  }
  if (got < want)
    throw DegeneracyError(std::string(what) + ": rank-deficient frame");
  return out;
}

}  // namespace

Projectors projectors(const FoliatedModel& fm, const ChartPoint& p) {
  fm.metric.require_in_domain(p);
  const int n = fm.dimension();
  const Mat g = fm.metric.metric_fn(p);
  const Mat v = fm.vertical_frame_fn(p);
  if (v.rows() != n || v.cols() != fm.leaf_dim)
    throw DegeneracyError("vertical frame has wrong shape");
  const Mat gram = v.transpose() * g * v;
  Eigen::LLT<Mat> llt(gram);
  if (llt.info() != Eigen::Success)
    throw DegeneracyError("vertical frame is rank deficient");
  Projectors pr;
  pr.base = p;
  pr.Pv = v * llt.solve(v.transpose() * g);
  pr.Ph = Mat::Identity(n, n) - pr.Pv;
  return pr;
}

Mat orthonormal_vertical_frame(const FoliatedModel& fm, const ChartPoint& p) {
  const Mat g = fm.metric.metric_fn(p);
  return gram_schmidt(g, fm.vertical_frame_fn(p), fm.leaf_dim,
                      "vertical frame");
}

Mat orthonormal_horizontal_frame(const FoliatedModel& fm,
                                 const ChartPoint& p) {
  const int n = fm.dimension();
  const Mat g = fm.metric.metric_fn(p);
  const Projectors pr = projectors(fm, p);
  // Project the coordinate basis and orthonormalize what survives.
  return gram_schmidt(g, pr.Ph, n - fm.leaf_dim, "horizontal frame");
}

OneillPoint::OneillPoint(const FoliatedModel& fm, const ChartPoint& p)
    : fm_(&fm),
      p_(p),
      g_(metric_eval(fm.metric, p)),
      pr_(projectors(fm, p)),
      gamma_(christoffels(fm.metric, p)) {}

Mat OneillPoint::dph(const Vec& dir) const {
  const double h = fd_step_for(fm_->metric, p_, fm_->metric.fd_step);
  ChartPoint q = p_;
  auto ph_at = [&](double s) {
    q.coords = p_.coords + s * dir;
    return projectors(*fm_, q).Ph;
  };
  return (-ph_at(2 * h) + 8.0 * ph_at(h) - 8.0 * ph_at(-h) + ph_at(-2 * h)) /
         (12.0 * h);
}

Mat OneillPoint::a_matrix(const Vec& X) const {
  const double len = X.norm();
  if (len == 0.0) return Mat::Zero(X.size(), X.size());
  const Vec dir = X / len;
  return pr_.Pv * (len * dph(dir) + christoffel_contract(gamma_, X) * pr_.Ph);
}

Vec OneillPoint::s_apply(const Vec& X, const Vec& xi) const {
  const double len = xi.norm();
  if (len == 0.0) return Vec::Zero(X.size());
  const Vec dir = xi / len;
  const Vec w =
      len * (dph(dir) * X) + christoffel_contract(gamma_, xi) * (pr_.Ph * X);
  return -(pr_.Pv * w);
}

Mat OneillPoint::astar_matrix(const Vec& X, const Mat& z) const {
  const Mat az = a_matrix(X) * z;
  // A*_X xi = sum_j <xi, A_X Z_j> Z_j  =>  Z (A_X Z)^T G.
  return z * az.transpose() * g_;
}

Mat OneillPoint::s_matrix(const Vec& X, const Mat& f) const {
  Mat out = Mat::Zero(f.rows(), f.rows());
  for (int a = 0; a < f.cols(); ++a) {
    out += s_apply(X, f.col(a)) * (f.col(a).transpose() * g_);
  }
  return out;
}

namespace {

void require_horizontal(const OneillPoint& ctx, const TangentVector& X,
                        const char* op) {
  const Vec vert = ctx.proj().Pv * X.components;
  const double total =
      std::sqrt(X.components.dot(ctx.metric() * X.components));
  const double v = std::sqrt(std::max(vert.dot(ctx.metric() * vert), 0.0));
  if (total > 0 && v > kRawVerticalityTol * total)
    throw ArgumentError(std::string(op) + ": argument is not horizontal");
}

void require_vertical(const OneillPoint& ctx, const TangentVector& xi,
                      const char* op) {
  const Vec hor = ctx.proj().Ph * xi.components;
  const double total =
      std::sqrt(xi.components.dot(ctx.metric() * xi.components));
  const double h = std::sqrt(std::max(hor.dot(ctx.metric() * hor), 0.0));
  if (total > 0 && h > kRawVerticalityTol * total)
    throw ArgumentError(std::string(op) + ": argument is not vertical");
}

}  // namespace

TangentVector a_tensor(const FoliatedModel& fm, const TangentVector& X,
                       const TangentVector& Y) {
  require_same_base(X, Y, "a_tensor");
  OneillPoint ctx(fm, X.base);
  require_horizontal(ctx, X, "a_tensor");
  require_horizontal(ctx, Y, "a_tensor");
  const Vec xh = ctx.proj().Ph * X.components;
  const Vec yh = ctx.proj().Ph * Y.components;
  return TangentVector{X.base, ctx.a_matrix(xh) * yh};
}

TangentVector a_tensor_parallel_ext(const FoliatedModel& fm,
                                    const TangentVector& X,
                                    const TangentVector& Y) {
  require_same_base(X, Y, "a_tensor");
  OneillPoint ctx(fm, X.base);
  const Vec xh = ctx.proj().Ph * X.components;
  const Vec yh = ctx.proj().Ph * Y.components;
  const double len = xh.norm();
  if (len == 0.0) return TangentVector{X.base, Vec::Zero(xh.size())};
  const Vec dir = xh / len;
  const double h = fd_step_for(fm.metric, X.base, fm.metric.fd_step);

  // Parallel transport of Y along the coordinate line p + s dir, then the
  // same projected-field derivative as a_tensor. Agreement of the two
  // extensions is the tensoriality self-test.
  auto transported = [&](double s_target) {
    const int substeps = 4;
    const double ds = s_target / substeps;
    Vec y = yh;
    ChartPoint q = X.base;
    auto rhs = [&](double s, const Vec& w) {
      q.coords = X.base.coords + s * dir;
      return Vec(-(christoffel_contract(christoffels(fm.metric, q), dir) * w));
    };
    double s = 0.0;
    for (int i = 0; i < substeps; ++i) {
      const Vec k1 = rhs(s, y);
      const Vec k2 = rhs(s + 0.5 * ds, y + 0.5 * ds * k1);
      const Vec k3 = rhs(s + 0.5 * ds, y + 0.5 * ds * k2);
      const Vec k4 = rhs(s + ds, y + ds * k3);
      y += (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      s += ds;
    }
    return y;
  };
  ChartPoint q = X.base;
  auto w_at = [&](double s) {
    q.coords = X.base.coords + s * dir;
    return Vec(projectors(fm, q).Ph * transported(s));
  };
  const Vec dW = (-w_at(2 * h) + 8.0 * w_at(h) - 8.0 * w_at(-h) +
                  w_at(-2 * h)) /
                 (12.0 * h);
  const Vec nabla = len * dW + christoffel_contract(ctx.gamma(), xh) * yh;
  return TangentVector{X.base, ctx.proj().Pv * nabla};
}

TangentVector a_star(const FoliatedModel& fm, const TangentVector& X,
                     const TangentVector& xi) {
  require_same_base(X, xi, "a_star");
  OneillPoint ctx(fm, X.base);
  require_horizontal(ctx, X, "a_star");
  require_vertical(ctx, xi, "a_star");
  const Vec xh = ctx.proj().Ph * X.components;
  const Vec xiv = ctx.proj().Pv * xi.components;
  const Mat z = orthonormal_horizontal_frame(fm, X.base);
  const Mat az = ctx.a_matrix(xh) * z;  // columns A_X Z_j
  Vec out = Vec::Zero(xh.size());
  for (int j = 0; j < z.cols(); ++j) {
    out += xiv.dot(ctx.metric() * az.col(j)) * z.col(j);
  }
  return TangentVector{X.base, out};
}

TangentVector s_tensor(const FoliatedModel& fm, const TangentVector& X,
                       const TangentVector& xi) {
  require_same_base(X, xi, "s_tensor");
  OneillPoint ctx(fm, X.base);
  require_horizontal(ctx, X, "s_tensor");
  require_vertical(ctx, xi, "s_tensor");
  const Vec xh = ctx.proj().Ph * X.components;
  const Vec xiv = ctx.proj().Pv * xi.components;
  return TangentVector{X.base, ctx.s_apply(xh, xiv)};
}

FoliatedModel warp_metric(const FoliatedModel& fm,
                          std::function<double(const ChartPoint&)> phi,
                          std::function<Vec(const ChartPoint&)> dphi) {
  if (!fm.totally_geodesic_claimed)
    throw ValidationError(
        "warp_metric requires a model with totally geodesic leaves");
  if (!phi || !dphi) throw ArgumentError("warp_metric: phi and dphi required");

  // Basicness: dphi must annihilate the vertical frame at sampled points.
  {
    Rng rng(0xba51cULL);
    for (int i = 0; i < 64; ++i) {
      const ChartPoint p = fm.metric.sample_fn(rng);
      const Vec d = dphi(p);
      const Mat v = fm.vertical_frame_fn(p);
      const Mat g = fm.metric.metric_fn(p);
      for (int c = 0; c < v.cols(); ++c) {
        const double vn = std::sqrt(v.col(c).dot(g * v.col(c)));
        if (std::abs(d.dot(v.col(c))) > 1e-8 * std::max(1.0, vn) *
                                            std::max(1.0, d.norm()))
          throw ValidationError(
              "warp_metric: phi is not basic (vertical derivative above "
              "tolerance)");
      }
    }
  }

  const auto base = std::make_shared<const FoliatedModel>(fm);
  const auto base_metric = base->metric.metric_fn;
  const auto base_dmetric = base->metric.dmetric_fn;
  const auto frame = base->vertical_frame_fn;
  const auto frame_jac = base->vertical_frame_jac_fn;

  // g_phi = G + (e^{2 phi} - 1) G Pv, with G Pv = W Gram^{-1} W^T, W = G V.
  auto vertical_block = [base_metric, frame](const ChartPoint& p) {
    const Mat g = base_metric(p);
    const Mat v = frame(p);
    const Mat w = g * v;
    const Mat gram = v.transpose() * w;
    return Mat(w * gram.ldlt().solve(w.transpose()));
  };

  FoliatedModel out = fm;
  out.totally_geodesic_claimed = false;
  auto info = std::make_shared<WarpInfo>();
  info->phi = phi;
  info->dphi = dphi;
  info->base = base;
  info->family = "custom";
  out.warp = info;

  out.metric.metric_fn = [base_metric, vertical_block,
                          phi](const ChartPoint& p) {
    const double f = std::exp(2.0 * phi(p)) - 1.0;
    return Mat(base_metric(p) + f * vertical_block(p));
  };

  if (base_dmetric && frame_jac) {
    out.metric.dmetric_fn = [base_metric, base_dmetric, frame, frame_jac, phi,
                             dphi](const ChartPoint& p) {
      const Mat g = base_metric(p);
      const Tensor3 dg = base_dmetric(p);
      const Mat v = frame(p);
      const Tensor3 dv = frame_jac(p);
      const Mat w = g * v;
      const Mat gram = v.transpose() * w;
      const Eigen::LDLT<Mat> gram_ldlt(gram);
      const Mat m = w * gram_ldlt.solve(w.transpose());
      const double e2p = std::exp(2.0 * phi(p));
      const double f = e2p - 1.0;
      const Vec dp = dphi(p);
      const int n = g.rows();
      Tensor3 out_d(n);
      for (int a = 0; a < n; ++a) {
        const Mat wa = dg[a] * v + g * dv[a];
        const Mat grama = dv[a].transpose() * w + v.transpose() * wa;
        const Mat ma = wa * gram_ldlt.solve(w.transpose()) +
                       w * gram_ldlt.solve(wa.transpose()) -
                       w * gram_ldlt.solve(grama * gram_ldlt.solve(w.transpose()));
        out_d[a] = dg[a] + 2.0 * e2p * dp(a) * m + f * ma;
      }
      return out_d;
    };
    const auto dm = out.metric.dmetric_fn;
    const auto mf = out.metric.metric_fn;
    out.metric.christoffel_fn = [dm, mf](const ChartPoint& p) {
      return christoffels_from(mf(p), dm(p));
    };
  } else {
    out.metric.dmetric_fn = nullptr;
    out.metric.christoffel_fn = nullptr;
  }
  return out;
}

FatnessForm fatness_form(const FoliatedModel& fm, const ChartPoint& p,
                         const TangentVector& xi) {
  OneillPoint ctx(fm, p);
  require_vertical(ctx, xi, "fatness_form");
  const double n = std::sqrt(xi.components.dot(ctx.metric() * xi.components));
  if (std::abs(n - 1.0) > 1e-6)
    throw ArgumentError("fatness_form: xi must be a unit vector");
  const Mat z = orthonormal_horizontal_frame(fm, p);
  const int m = z.cols();
  Mat omega(m, m);
  for (int i = 0; i < m; ++i) {
    const Mat ai = ctx.a_matrix(z.col(i));
    for (int j = 0; j < m; ++j) {
      omega(i, j) = xi.components.dot(ctx.metric() * (ai * z.col(j)));
    }
  }
  FatnessForm form;
  form.base = p;
  form.xi = xi;
  form.omega = omega;
  form.horizontal_frame = z;
  return form;
}

double fat_point_margin(const FoliatedModel& fm, const ChartPoint& p,
                        int num_xi_samples) {
  if (num_xi_samples < 1)
    throw ArgumentError("fat_point_margin: need at least one sample");
  const Mat f = orthonormal_vertical_frame(fm, p);
  const auto dirs = deterministic_directions(fm.leaf_dim, num_xi_samples);
  double margin = std::numeric_limits<double>::infinity();
  for (const Vec& d : dirs) {
    const TangentVector xi{p, f * d};
    const FatnessForm form = fatness_form(fm, p, xi);
    Eigen::JacobiSVD<Mat> svd(form.omega);
    margin = std::min(margin, svd.singularValues().minCoeff());
  }
  return margin;
}

TangentVector kernel_direction(const FoliatedModel& fm, const ChartPoint& p,
                               const TangentVector& xi) {
  const FatnessForm form = fatness_form(fm, p, xi);
  Eigen::JacobiSVD<Mat> svd(form.omega, Eigen::ComputeFullV);
  const Vec sv = svd.singularValues();
  const double smin = sv.minCoeff();
  const double smax = sv.maxCoeff();
  if (smin > 1e-6 * std::max(1.0, smax))
    throw NoKernelError("fatness form is numerically nonsingular");
  const Vec null_coeff = svd.matrixV().col(sv.size() - 1);
  Vec x = form.horizontal_frame * null_coeff;  // frame orthonormal: unit
  TangentVector out{p, x};
  const TangentVector residual = a_star(fm, out, xi);
  if (norm(fm.metric, residual) > 1e-6)
    throw NoKernelError("null direction fails the A* residual bound");
  return out;
}

TangentVector random_horizontal_unit(const FoliatedModel& fm,
                                     const ChartPoint& p, Rng& rng) {
  const Vec c = rng.unit_vec(fm.horizontal_dim());
  const Mat z = orthonormal_horizontal_frame(fm, p);
  return TangentVector{p, z * c};
}

TangentVector random_vertical_unit(const FoliatedModel& fm,
                                   const ChartPoint& p, Rng& rng) {
  const Vec c = rng.unit_vec(fm.leaf_dim);
  const Mat f = orthonormal_vertical_frame(fm, p);
  return TangentVector{p, f * c};
}

}  // namespace folilab
