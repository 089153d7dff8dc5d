#include "folilab/geometry.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace folilab {

namespace {

constexpr double kHuge = 1e30;

std::string point_str(const ChartPoint& p) {
  std::ostringstream os;
  os << "chart " << p.chart_id << " [";
  for (int i = 0; i < p.coords.size(); ++i) {
    if (i) os << ", ";
    os << p.coords(i);
  }
  os << "]";
  return os.str();
}

}  // namespace

// -- ChartDomain --------------------------------------------------------------

bool ChartDomain::contains(const Vec& u) const {
  for (int i = 0; i < u.size(); ++i) {
    if (!(u(i) > lo(i) && u(i) < hi(i))) return false;
  }
  if (ball) {
    const double r = u.segment(ball->start, ball->count).norm();
    if (!(r < ball->radius)) return false;
  }
  return true;
}

double ChartDomain::boundary_margin(const Vec& u) const {
  double m = kHuge;
  for (int i = 0; i < u.size(); ++i) {
    m = std::min(m, u(i) - lo(i));
    m = std::min(m, hi(i) - u(i));
  }
  if (ball) {
    const double r = u.segment(ball->start, ball->count).norm();
    m = std::min(m, ball->radius - r);
  }
  return m;
}

bool ChartDomain::in_core(const Vec& u) const {
  for (int i = 0; i < u.size(); ++i) {
    const double c = 0.5 * (lo(i) + hi(i));
    const double h = 0.5 * (hi(i) - lo(i)) * core_fraction;
    if (!(u(i) > c - h && u(i) < c + h)) return false;
  }
  if (ball) {
    const double r = u.segment(ball->start, ball->count).norm();
    if (!(r < ball->radius * core_fraction)) return false;
  }
  return true;
}

ChartDomain ChartDomain::box(const Vec& lo, const Vec& hi) {
  ChartDomain d;
  d.lo = lo;
  d.hi = hi;
  return d;
}

ChartDomain ChartDomain::cube(int dim, double half_width) {
  ChartDomain d;
  d.lo = Vec::Constant(dim, -half_width);
  d.hi = Vec::Constant(dim, half_width);
  return d;
}

ChartDomain ChartDomain::with_ball(int dim, int start, int count,
                                   double radius) {
  ChartDomain d = cube(dim, kHuge);
  d.ball = Ball{start, count, radius};
  return d;
}

// -- MetricModel ---------------------------------------------------------------

void MetricModel::require_in_domain(const ChartPoint& p) const {
  if (p.chart_id < 0 || p.chart_id >= static_cast<int>(charts.size()))
    throw DomainError("unknown chart id " + std::to_string(p.chart_id),
                      p.chart_id);
  if (p.coords.size() != dimension)
    throw ArgumentError("coordinate size mismatch at " + point_str(p));
  if (!charts[p.chart_id].contains(p.coords))
    throw DomainError("point outside domain of " + point_str(p), p.chart_id);
}

const ChartTransition* MetricModel::find_transition(int from, int to) const {
  for (const auto& t : transitions) {
    if (t.from == from && t.to == to) return &t;
  }
  return nullptr;
}

// -- pointwise tensors ----------------------------------------------------------

Mat metric_eval(const MetricModel& model, const ChartPoint& p) {
  model.require_in_domain(p);
  return model.metric_fn(p);
}

double fd_step_for(const MetricModel& model, const ChartPoint& p,
                   double requested) {
  const double margin = model.charts[p.chart_id].boundary_margin(p.coords);
  double h = requested;
  for (int attempt = 0; attempt < 3; ++attempt) {
    if (margin > 2.0 * h) return h;
    h *= 0.5;
  }
  if (margin > 2.0 * h) return h;
  throw DomainError("point too close to chart boundary for differencing at " +
                        point_str(p),
                    p.chart_id);
}

Mat christoffel_contract(const Tensor3& gamma, const Vec& X) {
  const int n = X.size();
  Mat m = Mat::Zero(n, n);
  for (int l = 0; l < n; ++l) {
    for (int i = 0; i < n; ++i) {
      if (X(i) == 0.0) continue;
      m.row(l) += X(i) * gamma[l].row(i);
    }
  }
  return m;
}

namespace {

Tensor3 dmetric_fd(const MetricModel& model, const ChartPoint& p,
                   double step) {
  const int n = model.dimension;
  const double h = fd_step_for(model, p, step);
  Tensor3 dg(n);
  ChartPoint q = p;
  for (int a = 0; a < n; ++a) {
    auto eval = [&](double off) {
      q.coords = p.coords;
      q.coords(a) += off;
      return model.metric_fn(q);
    };
    dg[a] = (-eval(2 * h) + 8.0 * eval(h) - 8.0 * eval(-h) + eval(-2 * h)) /
            (12.0 * h);
  }
  return dg;
}

}  // namespace

Tensor3 christoffels_from(const Mat& g, const Tensor3& dg) {
  const int n = g.rows();
  const Mat ginv = g.inverse();
  Tensor3 gamma(n, Mat::Zero(n, n));
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) {
          s += ginv(k, l) * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
        }
        gamma[k](i, j) = 0.5 * s;
        gamma[k](j, i) = gamma[k](i, j);
      }
    }
  }
  return gamma;
}

Tensor3 christoffels_fd(const MetricModel& model, const ChartPoint& p,
                        double step) {
  model.require_in_domain(p);
  return christoffels_from(model.metric_fn(p),
                                   dmetric_fd(model, p, step));
}

Tensor3 christoffels(const MetricModel& model, const ChartPoint& p) {
  model.require_in_domain(p);
  if (model.christoffel_fn) return model.christoffel_fn(p);
  if (model.dmetric_fn)
    return christoffels_from(model.metric_fn(p), model.dmetric_fn(p));
  return christoffels_from(model.metric_fn(p),
                                   dmetric_fd(model, p, model.fd_step));
}

TangentVector riemann(const MetricModel& model, const ChartPoint& p,
                      const TangentVector& X, const TangentVector& Y,
                      const TangentVector& Z) {
  model.require_in_domain(p);
  const int n = model.dimension;
  if (X.components.size() != n || Y.components.size() != n ||
      Z.components.size() != n)
    throw ArgumentError("riemann: component size mismatch");

  const Tensor3 gamma = christoffels(model, p);

  // dGamma[a][k](i,j) = d_a Gamma^k_{ij}, 4th-order central differences.
  const double h = fd_step_for(model, p, model.fd_step_gamma);
  std::vector<Tensor3> dgamma(n);
  ChartPoint q = p;
  for (int a = 0; a < n; ++a) {
    auto eval = [&](double off) {
      q.coords = p.coords;
      q.coords(a) += off;
      return christoffels(model, q);
    };
    const Tensor3 gp2 = eval(2 * h), gp1 = eval(h), gm1 = eval(-h),
                  gm2 = eval(-2 * h);
    dgamma[a].resize(n);
    for (int k = 0; k < n; ++k) {
      dgamma[a][k] =
          (-gp2[k] + 8.0 * gp1[k] - 8.0 * gm1[k] + gm2[k]) / (12.0 * h);
    }
  }

  // (R(X,Y)Z)^l = X^i Y^j Z^k [d_i G^l_jk - d_j G^l_ik
  //                            + G^l_im G^m_jk - G^l_jm G^m_ik]
  Vec out = Vec::Zero(n);
  const Vec& x = X.components;
  const Vec& y = Y.components;
  const Vec& z = Z.components;
  for (int l = 0; l < n; ++l) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      if (x(i) == 0.0 && y(i) == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        const double xy = x(i) * y(j);
        if (xy == 0.0 && x(j) * y(i) == 0.0) continue;
        for (int k = 0; k < n; ++k) {
          if (z(k) == 0.0) continue;
          double term = dgamma[i][l](j, k) - dgamma[j][l](i, k);
          for (int m = 0; m < n; ++m) {
            term += gamma[l](i, m) * gamma[m](j, k) -
                    gamma[l](j, m) * gamma[m](i, k);
          }
          acc += xy * z(k) * term;
        }
      }
    }
    out(l) = acc;
  }
  return TangentVector{p, out};
}

double inner(const MetricModel& model, const TangentVector& X,
             const TangentVector& Y) {
  const Mat g = metric_eval(model, X.base);
  return X.components.dot(g * Y.components);
}

double norm(const MetricModel& model, const TangentVector& X) {
  return std::sqrt(std::max(0.0, inner(model, X, X)));
}

double unreduced_sectional(const MetricModel& model, const TangentVector& X,
                           const TangentVector& Y) {
  if (X.base.chart_id != Y.base.chart_id ||
      (X.base.coords - Y.base.coords).norm() > 1e-12)
    throw ArgumentError("unreduced_sectional: mismatched base points");
  const TangentVector r = riemann(model, X.base, X, Y, Y);
  return inner(model, r, X);
}

// -- geodesics ------------------------------------------------------------------

namespace {

Vec geodesic_acceleration(const Tensor3& gamma, const Vec& v) {
  const int n = v.size();
  Vec acc = Vec::Zero(n);
  for (int k = 0; k < n; ++k) {
    acc(k) = -v.dot(gamma[k] * v);
  }
  return acc;
}

struct GeoState {
  ChartPoint p;
  Vec v;
};

/// One RK4 step of the geodesic equation inside a single chart.
GeoState rk4_geodesic_step(const MetricModel& model, const GeoState& s,
                           double h) {
  ChartPoint q = s.p;
  auto acc = [&](const Vec& u, const Vec& v) {
    q.coords = u;
    return geodesic_acceleration(christoffels(model, q), v);
  };
  const Vec& u0 = s.p.coords;
  const Vec& v0 = s.v;
  const Vec a1 = acc(u0, v0);
  const Vec a2 = acc(u0 + 0.5 * h * v0, v0 + 0.5 * h * a1);
  const Vec v2 = v0 + 0.5 * h * a1;
  const Vec a3 = acc(u0 + 0.5 * h * v2, v0 + 0.5 * h * a2);
  const Vec v3 = v0 + 0.5 * h * a2;
  const Vec a4 = acc(u0 + h * v3, v0 + h * a3);

  GeoState out;
  out.p.chart_id = s.p.chart_id;
  out.p.coords = u0 + (h / 6.0) * (v0 + 2.0 * v2 + 2.0 * v3 + (v0 + h * a3));
  out.v = v0 + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
  return out;
}

}  // namespace

GeodesicSegment integrate_geodesic(const MetricModel& model,
                                   const TangentVector& v0, double T,
                                   int steps) {
  if (steps < 16) throw ArgumentError("integrate_geodesic: steps must be >= 16");
  if (v0.components.norm() == 0.0)
    throw ArgumentError("integrate_geodesic: zero initial velocity");
  model.require_in_domain(v0.base);
  if (steps % 2 != 0) steps += 1;

  GeodesicSegment seg;
  seg.model_name = model.name;
  seg.step = T / steps;
  seg.samples.reserve(steps + 1);

  GeoState s{v0.base, v0.components};
  seg.samples.push_back({0.0, s.p, s.v});

  for (int i = 1; i <= steps; ++i) {
    const double t = seg.step * i;
    s = rk4_geodesic_step(model, s, seg.step);
    if (!model.charts[s.p.chart_id].contains(s.p.coords)) {
      throw IntegrationError("geodesic left chart domain before switching",
                             t, seg.samples.back().point,
                             seg.samples.back().velocity);
    }
    seg.samples.push_back({t, s.p, s.v});

    // Chart switching happens on even indices only, so transport steps never
    // straddle a representation change; the 10% domain margin makes the
    // one-step postponement safe.
    if (i % 2 == 0 && i < steps &&
        !model.charts[s.p.chart_id].in_core(s.p.coords)) {
      bool switched = false;
      for (const auto& tr : model.transitions) {
        if (tr.from != s.p.chart_id) continue;
        const Vec mapped = tr.map(s.p.coords);
        if (!model.charts[tr.to].in_core(mapped)) continue;
        SeamRecord seam;
        seam.index = i;
        seam.left_point = s.p;
        seam.left_velocity = s.v;
        const Mat jac = tr.jacobian(s.p.coords);
        s.p.chart_id = tr.to;
        s.p.coords = mapped;
        s.v = jac * seam.left_velocity;
        seg.samples.back().point = s.p;
        seg.samples.back().velocity = s.v;
        seg.seams.push_back(std::move(seam));
        switched = true;
        break;
      }
      if (!switched && model.charts[s.p.chart_id].boundary_margin(s.p.coords) <
                           4.0 * seg.step * s.v.norm()) {
        throw IntegrationError("no chart covers the next point", t,
                               seg.samples.back().point,
                               seg.samples.back().velocity);
      }
    }
  }
  return seg;
}

std::optional<std::pair<ChartPoint, Mat>> to_chart(const MetricModel& model,
                                                   const ChartPoint& p,
                                                   int target_chart) {
  if (p.chart_id == target_chart) {
    return std::make_pair(p, Mat::Identity(model.dimension, model.dimension));
  }
  const ChartTransition* tr = model.find_transition(p.chart_id, target_chart);
  if (!tr) return std::nullopt;
  const Vec mapped = tr->map(p.coords);
  if (!model.charts[target_chart].contains(mapped)) return std::nullopt;
  ChartPoint q;
  q.chart_id = target_chart;
  q.coords = mapped;
  return std::make_pair(q, tr->jacobian(p.coords));
}

double chart_distance(const MetricModel& model, const ChartPoint& p,
                      const ChartPoint& q) {
  if (p.chart_id == q.chart_id) return (p.coords - q.coords).norm();
  const auto mapped = to_chart(model, q, p.chart_id);
  if (!mapped) return std::numeric_limits<double>::infinity();
  return (p.coords - mapped->first.coords).norm();
}

}  // namespace folilab
