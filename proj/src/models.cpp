#include "folilab/models.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numeric>
#include <sstream>

namespace folilab {

namespace {

constexpr double kBig = 1e30;
constexpr double kChartRadius = 3.0;
constexpr double kChartCore = 2.7;  // 90 percent of the radius

// ---------------------------------------------------------------------------
// Quaternion helpers (coordinates (x0, x1, x2, x3) = w + x i + y j + z k).
// ---------------------------------------------------------------------------

Vec quat_mul(const Vec& a, const Vec& b) {
  Vec r(4);
  r(0) = a(0) * b(0) - a(1) * b(1) - a(2) * b(2) - a(3) * b(3);
  r(1) = a(0) * b(1) + a(1) * b(0) + a(2) * b(3) - a(3) * b(2);
  r(2) = a(0) * b(2) - a(1) * b(3) + a(2) * b(0) + a(3) * b(1);
  r(3) = a(0) * b(3) + a(1) * b(2) - a(2) * b(1) + a(3) * b(0);
  return r;
}

Vec quat_conj(const Vec& a) {
  Vec r(4);
  r << a(0), -a(1), -a(2), -a(3);
  return r;
}

Mat hopf_action_matrix() {
  Mat q(4, 4);
  q << 0, -1, 0, 0,
       1,  0, 0, 0,
       0,  0, 0, -1,
       0,  0, 1, 0;
  return q;
}

// ---------------------------------------------------------------------------
// Ambient chart machinery: charts described by an embedding E, its Jacobian
// and Hessian; the metric, its derivative and the vertical frame (with its
// derivative) all follow analytically.
// ---------------------------------------------------------------------------

struct AmbientChart {
  std::function<Vec(const Vec&)> embed;    // n -> m
  std::function<Mat(const Vec&)> jac;      // m x n
  std::function<Tensor3(const Vec&)> hess; // element a: d(jac)/d u_a
};

/// Ambient vertical generator: the affine field x -> Q x + b.
struct VerticalGen {
  Mat Q;
  Vec b;
};

struct AmbientModel {
  int dim = 0;
  int ambient_dim = 0;
  std::vector<AmbientChart> charts;
  std::vector<VerticalGen> verticals;
};

AmbientChart stereographic_s3_chart(double sign) {
  AmbientChart c;
  c.embed = [sign](const Vec& u) {
    const double d = 1.0 + u.squaredNorm();
    Vec x(4);
    x(0) = sign * (u.squaredNorm() - 1.0) / d;
    x.tail(3) = 2.0 * u / d;
    return x;
  };
  c.jac = [sign](const Vec& u) {
    const double d = 1.0 + u.squaredNorm();
    Mat j(4, 3);
    for (int a = 0; a < 3; ++a) {
      j(0, a) = sign * 4.0 * u(a) / (d * d);
      for (int i = 0; i < 3; ++i) {
        j(i + 1, a) = 2.0 * (i == a ? 1.0 : 0.0) / d -
                      4.0 * u(i) * u(a) / (d * d);
      }
    }
    return j;
  };
  c.hess = [sign](const Vec& u) {
    const double d = 1.0 + u.squaredNorm();
    const double d2 = d * d, d3 = d2 * d;
    Tensor3 h(3, Mat::Zero(4, 3));
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        h[a](0, b) = sign * (4.0 * (a == b ? 1.0 : 0.0) / d2 -
                             16.0 * u(a) * u(b) / d3);
        for (int i = 0; i < 3; ++i) {
          const double dia = (i == a) ? 1.0 : 0.0;
          const double dib = (i == b) ? 1.0 : 0.0;
          const double dab = (a == b) ? 1.0 : 0.0;
          h[a](i + 1, b) =
              -4.0 * (dia * u(b) + dib * u(a) + dab * u(i)) / d2 +
              16.0 * u(i) * u(a) * u(b) / d3;
        }
      }
    }
    return h;
  };
  return c;
}

AmbientChart flat_chart(int dim, double scale) {
  AmbientChart c;
  c.embed = [dim, scale](const Vec& u) { return Vec(scale * u.head(dim)); };
  c.jac = [dim, scale](const Vec&) {
    return Mat(scale * Mat::Identity(dim, dim));
  };
  c.hess = [dim](const Vec&) { return Tensor3(dim, Mat::Zero(dim, dim)); };
  return c;
}

/// Product of charts: coordinates and ambient blocks are concatenated.
AmbientChart product_chart(std::vector<AmbientChart> parts,
                           std::vector<int> dims, std::vector<int> amb_dims) {
  const int n = std::accumulate(dims.begin(), dims.end(), 0);
  const int m = std::accumulate(amb_dims.begin(), amb_dims.end(), 0);
  AmbientChart c;
  c.embed = [=](const Vec& u) {
    Vec x(m);
    int uo = 0, xo = 0;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      x.segment(xo, amb_dims[j]) = parts[j].embed(u.segment(uo, dims[j]));
      uo += dims[j];
      xo += amb_dims[j];
    }
    return x;
  };
  c.jac = [=](const Vec& u) {
    Mat jac = Mat::Zero(m, n);
    int uo = 0, xo = 0;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      jac.block(xo, uo, amb_dims[j], dims[j]) =
          parts[j].jac(u.segment(uo, dims[j]));
      uo += dims[j];
      xo += amb_dims[j];
    }
    return jac;
  };
  c.hess = [=](const Vec& u) {
    Tensor3 h(n, Mat::Zero(m, n));
    int uo = 0, xo = 0;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      const Tensor3 hj = parts[j].hess(u.segment(uo, dims[j]));
      for (int a = 0; a < dims[j]; ++a) {
        h[uo + a].block(xo, uo, amb_dims[j], dims[j]) = hj[a];
      }
      uo += dims[j];
      xo += amb_dims[j];
    }
    return h;
  };
  return c;
}

/// Installs metric, metric derivative, Christoffels and the vertical frame
/// (with analytic derivative) computed from the ambient data.
void install_ambient(FoliatedModel& fm, std::shared_ptr<const AmbientModel> am) {
  fm.metric.dimension = am->dim;
  fm.metric.metric_fn = [am](const ChartPoint& p) {
    const Mat j = am->charts[p.chart_id].jac(p.coords);
    return Mat(j.transpose() * j);
  };
  fm.metric.dmetric_fn = [am](const ChartPoint& p) {
    const Mat j = am->charts[p.chart_id].jac(p.coords);
    const Tensor3 h = am->charts[p.chart_id].hess(p.coords);
    Tensor3 dg(am->dim);
    for (int a = 0; a < am->dim; ++a) {
      dg[a] = h[a].transpose() * j + j.transpose() * h[a];
    }
    return dg;
  };
  const auto mf = fm.metric.metric_fn;
  const auto dmf = fm.metric.dmetric_fn;
  fm.metric.christoffel_fn = [mf, dmf](const ChartPoint& p) {
    return christoffels_from(mf(p), dmf(p));
  };
  fm.leaf_dim = static_cast<int>(am->verticals.size());
  fm.vertical_frame_fn = [am](const ChartPoint& p) {
    const AmbientChart& ch = am->charts[p.chart_id];
    const Vec e = ch.embed(p.coords);
    const Mat j = ch.jac(p.coords);
    const Mat g = j.transpose() * j;
    const Eigen::LDLT<Mat> ldlt(g);
    Mat frame(am->dim, am->verticals.size());
    for (std::size_t i = 0; i < am->verticals.size(); ++i) {
      const Vec w = am->verticals[i].Q * e + am->verticals[i].b;
      frame.col(i) = ldlt.solve(j.transpose() * w);
    }
    return frame;
  };
  fm.vertical_frame_jac_fn = [am](const ChartPoint& p) {
    const AmbientChart& ch = am->charts[p.chart_id];
    const Vec e = ch.embed(p.coords);
    const Mat j = ch.jac(p.coords);
    const Tensor3 h = ch.hess(p.coords);
    const Mat g = j.transpose() * j;
    const Eigen::LDLT<Mat> ldlt(g);
    const int n = am->dim;
    const int k = static_cast<int>(am->verticals.size());
    Mat frame(n, k);
    std::vector<Vec> w(k);
    for (int i = 0; i < k; ++i) {
      w[i] = am->verticals[i].Q * e + am->verticals[i].b;
      frame.col(i) = ldlt.solve(j.transpose() * w[i]);
    }
    Tensor3 out(n, Mat::Zero(n, k));
    for (int a = 0; a < n; ++a) {
      const Mat dg = h[a].transpose() * j + j.transpose() * h[a];
      for (int i = 0; i < k; ++i) {
        const Vec dw = am->verticals[i].Q * j.col(a);
        out[a].col(i) = ldlt.solve(-dg * frame.col(i) +
                                   h[a].transpose() * w[i] +
                                   j.transpose() * dw);
      }
    }
    return out;
  };
}

/// Inversion transition on the leading 3 coordinates, identity elsewhere.
ChartTransition s3_inversion(int from, int to, int dim) {
  ChartTransition t;
  t.from = from;
  t.to = to;
  t.map = [dim](const Vec& u) {
    Vec out = u;
    const double r2 = u.head(3).squaredNorm();
    out.head(3) = u.head(3) / r2;
    return out;
  };
  t.jacobian = [dim](const Vec& u) {
    Mat j = Mat::Identity(dim, dim);
    const double r2 = u.head(3).squaredNorm();
    const Vec uh = u.head(3) / std::sqrt(r2);
    j.topLeftCorner(3, 3) =
        (Mat::Identity(3, 3) - 2.0 * uh * uh.transpose()) / r2;
    return j;
  };
  return t;
}

ChartPoint hopf_chart_for(const Vec& x, int total_dim, const Vec& frozen) {
  // Prefer the chart in which the point has small coordinates.
  const int chart = (x(0) <= 0.0) ? 0 : 1;
  const double denom = (chart == 0) ? (1.0 - x(0)) : (1.0 + x(0));
  ChartPoint p;
  p.chart_id = chart;
  p.coords = Vec(total_dim);
  p.coords.head(3) = x.tail(3) / denom;
  if (total_dim > 3) p.coords.tail(total_dim - 3) = frozen;
  return p;
}

// ---------------------------------------------------------------------------
// Closed-loop shooting on the Hopf bundle.
//
// Base loops are m-fold latitude circles reached by a meridian from the base
// point of p; the horizontal lift of such a loop closes exactly when its
// fiber phase vanishes, which happens on a discrete set of latitudes. The
// phase is measured by integrating the lift and bisected in the latitude
// until the closure gap is below tolerance.
// ---------------------------------------------------------------------------

struct HopfLoopFamily {
  int winding = 2;
  double z_center = 0.0;  // analytic root used only to center the bracket
};

std::vector<HopfLoopFamily> hopf_loop_families() {
  std::vector<HopfLoopFamily> fams;
  for (int m = 2; m <= 8; ++m) {
    for (int nwrap = 1; nwrap < m; ++nwrap) {
      const double z = 1.0 - 2.0 * static_cast<double>(nwrap) / m;
      if (std::abs(z) > 0.82) continue;
      bool dup = false;
      for (const auto& f : fams) {
        if (f.winding == m && std::abs(f.z_center - z) < 1e-12) dup = true;
      }
      if (!dup) fams.push_back(HopfLoopFamily{m, z});
    }
  }
  return fams;
}

struct LiftSegment {
  std::function<Vec(double)> n;     // base point at parameter s in [0,1]
  std::function<Vec(double)> ndot;  // d n / d s
  int samples = 0;                  // even
};

/// Horizontal lift velocity in closed form: the horizontal space at q is
/// spanned by jq and kq, and dpi maps them to 2 \bar q k q and -2 \bar q j q
/// respectively, so the lift of ndot is read off by projection.
Vec lift_velocity(const Vec& q, const Vec& ndot) {
  Vec jhat = Vec::Zero(4), khat = Vec::Zero(4);
  jhat(2) = 1.0;
  khat(3) = 1.0;
  const Vec jq = quat_mul(jhat, q);
  const Vec kq = quat_mul(khat, q);
  const Vec qbar = quat_conj(q);
  const Vec ej = quat_mul(qbar, quat_mul(jhat, q));
  const Vec ek = quat_mul(qbar, quat_mul(khat, q));
  const double a = 0.5 * ndot.dot(ek.tail(3));
  const double b = -0.5 * ndot.dot(ej.tail(3));
  return a * jq + b * kq;
}

struct LiftRun {
  std::vector<Vec> points;      // ambient samples
  std::vector<Vec> velocities;  // dq/ds within each segment
  std::vector<int> junctions;   // sample indices where a new segment starts
  std::vector<Vec> junction_left_velocity;
  double phase = 0.0;           // fiber phase between endpoint and start
};

LiftRun integrate_lift(const Vec& q0, const std::vector<LiftSegment>& segs) {
  LiftRun run;
  Vec q = q0;
  run.points.push_back(q);
  run.velocities.push_back(Vec::Zero(4));  // fixed after the first stage
  bool first = true;
  for (const auto& seg : segs) {
    const double ds = 1.0 / seg.samples;
    if (!first) {
      run.junctions.push_back(static_cast<int>(run.points.size()) - 1);
      run.junction_left_velocity.push_back(run.velocities.back());
      run.velocities.back() = lift_velocity(q, seg.ndot(0.0));
    }
    for (int i = 0; i < seg.samples; ++i) {
      const double s = i * ds;
      const Vec k1 = lift_velocity(q, seg.ndot(s));
      const Vec k2 = lift_velocity(q + 0.5 * ds * k1, seg.ndot(s + 0.5 * ds));
      const Vec k3 = lift_velocity(q + 0.5 * ds * k2, seg.ndot(s + 0.5 * ds));
      const Vec k4 = lift_velocity(q + ds * k3, seg.ndot(s + ds));
      q += (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      q.normalize();
      run.points.push_back(q);
      run.velocities.push_back(lift_velocity(q, seg.ndot((i + 1) * ds)));
    }
    if (first) {
      run.velocities.front() = lift_velocity(q0, segs.front().ndot(0.0));
      first = false;
    }
  }
  // Fiber phase via the complex pairing (z1, z2) = (x0 + i x1, x2 + i x3).
  const Vec& e = run.points.back();
  const std::complex<double> z1s(q0(0), q0(1)), z2s(q0(2), q0(3));
  const std::complex<double> z1e(e(0), e(1)), z2e(e(2), e(3));
  run.phase = std::arg(z1e * std::conj(z1s) + z2e * std::conj(z2s));
  return run;
}

int even_samples(double len, double per_unit, int min_samples) {
  int n = static_cast<int>(std::ceil(std::max(len * per_unit,
                                              static_cast<double>(min_samples))));
  if (n % 2 != 0) ++n;
  return n;
}

std::vector<LiftSegment> latitude_loop_segments(const Vec& n0, int winding,
                                                double z) {
  const double a0 = std::acos(std::clamp(n0(2), -1.0, 1.0));
  const double sin0 = std::sqrt(std::max(0.0, 1.0 - n0(2) * n0(2)));
  const double b0 = (sin0 > 1e-12) ? std::atan2(n0(1), n0(0)) : 0.0;
  const double a1 = std::acos(std::clamp(z, -1.0, 1.0));
  const double da = a1 - a0;

  std::vector<LiftSegment> segs;
  auto meridian = [&](double from, double delta) {
    LiftSegment s;
    s.n = [=](double t) {
      const double a = from + t * delta;
      Vec n(3);
      n << std::sin(a) * std::cos(b0), std::sin(a) * std::sin(b0), std::cos(a);
      return n;
    };
    s.ndot = [=](double t) {
      const double a = from + t * delta;
      Vec n(3);
      n << delta * std::cos(a) * std::cos(b0),
          delta * std::cos(a) * std::sin(b0), -delta * std::sin(a);
      return n;
    };
    s.samples = even_samples(std::abs(delta), 256.0, 64);
    return s;
  };
  if (std::abs(da) > 1e-9) segs.push_back(meridian(a0, da));
  {
    LiftSegment lat;
    const double sweep = 2.0 * M_PI * winding;
    const double sina = std::sin(a1);
    lat.n = [=](double t) {
      const double b = b0 + t * sweep;
      Vec n(3);
      n << sina * std::cos(b), sina * std::sin(b), std::cos(a1);
      return n;
    };
    lat.ndot = [=](double t) {
      const double b = b0 + t * sweep;
      Vec n(3);
      n << -sweep * sina * std::sin(b), sweep * sina * std::cos(b), 0.0;
      return n;
    };
    lat.samples = even_samples(sweep, 160.0, 512);
    segs.push_back(lat);
  }
  if (std::abs(da) > 1e-9) segs.push_back(meridian(a1, -da));
  return segs;
}

/// Builds a HorizontalPath in chart coordinates from an ambient lift run,
/// freezing any extra (non-S^3) coordinates of the start point.
HorizontalPath lift_to_path(const FoliatedModel& fm, const ChartPoint& start,
                            const LiftRun& run) {
  const int dim = fm.dimension();
  const Vec frozen =
      (dim > 3) ? Vec(start.coords.tail(dim - 3)) : Vec(Vec::Zero(0));
  const int total = static_cast<int>(run.points.size());
  const double h = 1.0 / (total - 1);

  HorizontalPath path;
  path.model_name = fm.metric.name;
  path.step = h;
  path.samples.reserve(total);

  int chart = start.chart_id;
  std::size_t junction_cursor = 0;
  auto chart_coords_of = [&](int ch, const Vec& x) {
    const double denom = (ch == 0) ? (1.0 - x(0)) : (1.0 + x(0));
    Vec coords(dim);
    coords.head(3) = x.tail(3) / denom;
    if (dim > 3) coords.tail(dim - 3) = frozen;
    return coords;
  };
  static const AmbientChart kChart[2] = {stereographic_s3_chart(1.0),
                                         stereographic_s3_chart(-1.0)};
  auto chart_velocity_of = [&](int ch, const Vec& coords, const Vec& v_amb,
                               double scale) {
    const Mat j = kChart[ch].jac(coords.head(3));
    Vec vel = Vec::Zero(dim);
    vel.head(3) =
        scale * (j.transpose() * j).ldlt().solve(j.transpose() * v_amb);
    return vel;
  };

  // Per-sample time scale: each segment occupies (samples * h) of global
  // time while its own parameter runs over [0,1].
  std::vector<double> scale_at(total, 0.0);
  {
    int seg_start = 0;
    for (std::size_t jc = 0; jc <= run.junctions.size(); ++jc) {
      const int end = (jc < run.junctions.size()) ? run.junctions[jc]
                                                  : total - 1;
      const double seg_scale = 1.0 / ((end - seg_start) * h);
      for (int i = seg_start; i <= end; ++i) scale_at[i] = seg_scale;
      seg_start = end;
    }
  }

  for (int i = 0; i < total; ++i) {
    const Vec& x = run.points[i];
    const bool is_junction = junction_cursor < run.junctions.size() &&
                             run.junctions[junction_cursor] == i;
    Vec left_vel_amb;
    if (is_junction) {
      left_vel_amb = run.junction_left_velocity[junction_cursor];
      ++junction_cursor;
    }

    // Chart switch when the current chart coordinates leave the core; only
    // on even interior indices so transport steps stay whole.
    Vec coords = chart_coords_of(chart, x);
    bool switch_chart = false;
    if (i % 2 == 0 && i > 0 && i + 1 < total &&
        coords.head(3).norm() > kChartCore) {
      switch_chart = true;
    }

    if ((is_junction || switch_chart) && i > 0) {
      SeamRecord seam;
      seam.index = i;
      seam.left_point.chart_id = chart;
      seam.left_point.coords = coords;
      const Vec lv = is_junction ? left_vel_amb : run.velocities[i];
      // The previous segment's scale applies to the left view.
      const double left_scale =
          (i > 0) ? scale_at[i - 1] : scale_at[i];
      seam.left_velocity = chart_velocity_of(chart, coords, lv, left_scale);
      if (switch_chart) {
        chart = 1 - chart;
        coords = chart_coords_of(chart, x);
      }
      path.seams.push_back(std::move(seam));
    }

    GeodesicSample s;
    s.t = i * h;
    s.point.chart_id = chart;
    s.point.coords = coords;
    s.velocity = chart_velocity_of(chart, coords, run.velocities[i],
                                   scale_at[i]);
    path.samples.push_back(std::move(s));
  }

  path.closed = true;
  path.closure_gap =
      chart_distance(fm.metric, path.samples.front().point,
                     path.samples.back().point);
  // Horizontality drift measured against the model's own metric.
  double drift = 0.0;
  for (const auto& s : path.samples) {
    const Projectors pr = projectors(fm, s.point);
    const Mat g = fm.metric.metric_fn(s.point);
    const Vec vert = pr.Pv * s.velocity;
    const double tot = std::sqrt(std::max(s.velocity.dot(g * s.velocity), 0.0));
    if (tot > 0)
      drift = std::max(drift,
                       std::sqrt(std::max(vert.dot(g * vert), 0.0)) / tot);
  }
  path.max_horizontality_drift = drift;
  return path;
}

std::shared_ptr<HorizontalPath> shoot_hopf_loop(
    const std::shared_ptr<const FoliatedModel>& fm, const ChartPoint& p,
    int index) {
  static const std::vector<HopfLoopFamily> fams = hopf_loop_families();
  if (index < 0 || index >= static_cast<int>(fams.size())) return nullptr;
  const HopfLoopFamily& fam = fams[index];

  const Vec q0 = hopf_embed(p.chart_id, p.coords.head(3));
  const Vec n0 = hopf_base_point(q0);

  auto phase_at = [&](double z) {
    const LiftRun run =
        integrate_lift(q0, latitude_loop_segments(n0, fam.winding, z));
    return run.phase;
  };

  // Bracket the root of the measured phase around the family's latitude.
  double lo = fam.z_center - 0.04, hi = fam.z_center + 0.04;
  double flo = phase_at(lo), fhi = phase_at(hi);
  if (flo * fhi > 0.0) {
    lo = fam.z_center - 0.12;
    hi = fam.z_center + 0.12;
    flo = phase_at(lo);
    fhi = phase_at(hi);
    if (flo * fhi > 0.0) return nullptr;
  }
  double mid = 0.5 * (lo + hi), fmid = 0.0;
  for (int it = 0; it < 60; ++it) {
    mid = 0.5 * (lo + hi);
    fmid = phase_at(mid);
    if (std::abs(fmid) < 2e-7) break;
    if ((fmid > 0) == (flo > 0)) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
      fhi = fmid;
    }
  }
  const LiftRun run =
      integrate_lift(q0, latitude_loop_segments(n0, fam.winding, mid));
  auto path = std::make_shared<HorizontalPath>(lift_to_path(*fm, p, run));
  if (!(path->closure_gap <= 1e-6)) return nullptr;
  return path;
}

std::shared_ptr<HorizontalPath> torus_rectangle_loop(
    const std::shared_ptr<const FoliatedModel>& fm, const ChartPoint& p,
    int index) {
  const int k = fm->leaf_dim;
  const int hdim = fm->horizontal_dim();
  const double len = 0.4 + 0.1 * (index % 3);
  auto leg = [&](const ChartPoint& at, int coord, double sign) {
    Vec dir = Vec::Zero(fm->dimension());
    dir(coord) = sign;
    return horizontal_geodesic(*fm, TangentVector{at, dir}, len, 64);
  };
  HorizontalPath loop;
  if (hdim >= 2) {
    const int pairs = hdim * (hdim - 1) / 2;
    int which = index % pairs;
    int c1 = -1, c2 = -1;
    for (int i = 0; i < hdim && c1 < 0; ++i) {
      for (int j = i + 1; j < hdim; ++j) {
        if (which-- == 0) {
          c1 = k + i;
          c2 = k + j;
          break;
        }
      }
    }
    loop = leg(p, c1, 1.0);
    loop = concatenate(*fm, loop, leg(loop.back().point, c2, 1.0));
    loop = concatenate(*fm, loop, leg(loop.back().point, c1, -1.0));
    loop = concatenate(*fm, loop, leg(loop.back().point, c2, -1.0));
  } else {
    loop = leg(p, k, 1.0);
    loop = concatenate(*fm, loop, leg(loop.back().point, k, -1.0));
  }
  loop.closed = true;
  loop.closure_gap =
      chart_distance(fm->metric, loop.samples.front().point,
                     loop.samples.back().point);
  return std::make_shared<HorizontalPath>(std::move(loop));
}

// ---------------------------------------------------------------------------
// Model constructors.
// ---------------------------------------------------------------------------

void attach_closed_loops_hopf(FoliatedModel& fm) {
  auto snapshot = std::make_shared<const FoliatedModel>(fm);
  fm.closed_loop_fn = [snapshot](const ChartPoint& p, int index) {
    return shoot_hopf_loop(snapshot, p, index);
  };
}

void attach_closed_loops_torus(FoliatedModel& fm) {
  auto snapshot = std::make_shared<const FoliatedModel>(fm);
  fm.closed_loop_fn = [snapshot](const ChartPoint& p, int index) {
    if (index >= 64) return std::shared_ptr<HorizontalPath>();
    return torus_rectangle_loop(snapshot, p, index);
  };
}

FoliatedModel make_flat_torus(int n, int k) {
  FoliatedModel fm;
  fm.name = "flat_torus";
  fm.metric.name = "flat_torus";
  fm.metric.dimension = n;
  fm.metric.charts = {ChartDomain::cube(n, 8.0)};
  fm.metric.metric_fn = [n](const ChartPoint&) {
    return Mat(Mat::Identity(n, n));
  };
  fm.metric.dmetric_fn = [n](const ChartPoint&) {
    return Tensor3(n, Mat::Zero(n, n));
  };
  fm.metric.christoffel_fn = [n](const ChartPoint&) {
    return Tensor3(n, Mat::Zero(n, n));
  };
  fm.metric.sample_fn = [n](Rng& rng) {
    ChartPoint p;
    p.chart_id = 0;
    p.coords = Vec(n);
    for (int i = 0; i < n; ++i) p.coords(i) = rng.uniform();
    return p;
  };
  fm.leaf_dim = k;
  fm.vertical_frame_fn = [n, k](const ChartPoint&) {
    return Mat(Mat::Identity(n, n).leftCols(k));
  };
  fm.vertical_frame_jac_fn = [n, k](const ChartPoint&) {
    return Tensor3(n, Mat::Zero(n, k));
  };
  fm.totally_geodesic_claimed = true;
  attach_closed_loops_torus(fm);
  return fm;
}

FoliatedModel make_round_hopf() {
  FoliatedModel fm;
  fm.name = "hopf_s3";
  fm.metric.name = "hopf_s3";

  auto am = std::make_shared<AmbientModel>();
  am->dim = 3;
  am->ambient_dim = 4;
  am->charts = {stereographic_s3_chart(1.0), stereographic_s3_chart(-1.0)};
  am->verticals = {VerticalGen{hopf_action_matrix(), Vec::Zero(4)}};
  install_ambient(fm, am);

  fm.metric.charts = {ChartDomain::with_ball(3, 0, 3, kChartRadius),
                      ChartDomain::with_ball(3, 0, 3, kChartRadius)};
  fm.metric.transitions = {s3_inversion(0, 1, 3), s3_inversion(1, 0, 3)};
  fm.metric.sample_fn = [](Rng& rng) {
    const Vec x = rng.unit_vec(4);
    return hopf_chart_point(x);
  };
  fm.totally_geodesic_claimed = true;
  return fm;
}

FoliatedModel apply_constant_warp(FoliatedModel base, double log_scale,
                                  const std::string& name) {
  FoliatedModel out = warp_metric(
      base, [log_scale](const ChartPoint&) { return log_scale; },
      [dim = base.dimension()](const ChartPoint&) { return Vec(Vec::Zero(dim)); });
  auto wi = std::make_shared<WarpInfo>(*out.warp);
  wi->family = "constant";
  wi->amplitude = log_scale;
  out.warp = wi;
  out.totally_geodesic_claimed = true;  // constant warp rescales the leaves rigidly
  out.name = name;
  out.metric.name = name;
  return out;
}

FoliatedModel make_hopf_s3(double epsilon) {
  FoliatedModel fm = make_round_hopf();
  if (epsilon != 1.0) {
    fm = apply_constant_warp(std::move(fm), std::log(epsilon), "hopf_s3");
  }
  attach_closed_loops_hopf(fm);
  return fm;
}

FoliatedModel make_hopf_warped(double epsilon, int family, double lambda) {
  FoliatedModel base = make_hopf_s3(epsilon);
  FoliatedModel out;
  if (family == 0) {
    out = apply_constant_warp(std::move(base), lambda, "hopf_warped");
  } else {
    auto phi = [lambda](const ChartPoint& p) {
      return lambda * hopf_height(hopf_embed(p.chart_id, p.coords.head(3)));
    };
    auto dphi = [lambda](const ChartPoint& p) {
      const AmbientChart sc =
          stereographic_s3_chart(p.chart_id == 0 ? 1.0 : -1.0);
      const Vec x = sc.embed(p.coords.head(3));
      const Mat j = sc.jac(p.coords.head(3));
      Vec grad(4);
      grad << x(2), x(3), x(0), x(1);
      return Vec(lambda * 2.0 * (j.transpose() * grad));
    };
    out = warp_metric(base, phi, dphi);
    auto wi = std::make_shared<WarpInfo>(*out.warp);
    wi->family = "height";
    wi->amplitude = lambda;
    out.warp = wi;
    out.name = "hopf_warped";
    out.metric.name = "hopf_warped";
  }
  attach_closed_loops_hopf(out);
  return out;
}

FoliatedModel make_s3_x_s1(double epsilon, double radius) {
  FoliatedModel fm;
  fm.name = "s3_x_s1";
  fm.metric.name = "s3_x_s1";

  auto am = std::make_shared<AmbientModel>();
  am->dim = 4;
  am->ambient_dim = 5;
  am->charts = {
      product_chart({stereographic_s3_chart(1.0), flat_chart(1, radius)},
                    {3, 1}, {4, 1}),
      product_chart({stereographic_s3_chart(-1.0), flat_chart(1, radius)},
                    {3, 1}, {4, 1})};
  {
    Mat q = Mat::Zero(5, 5);
    q.topLeftCorner(4, 4) = hopf_action_matrix();
    am->verticals = {VerticalGen{q, Vec::Zero(5)}};
  }
  install_ambient(fm, am);

  ChartDomain dom = ChartDomain::with_ball(4, 0, 3, kChartRadius);
  dom.lo(3) = -64.0;
  dom.hi(3) = 64.0;
  fm.metric.charts = {dom, dom};
  fm.metric.transitions = {s3_inversion(0, 1, 4), s3_inversion(1, 0, 4)};
  fm.metric.sample_fn = [](Rng& rng) {
    const Vec x = rng.unit_vec(4);
    ChartPoint p = hopf_chart_point(x);
    Vec coords(4);
    coords.head(3) = p.coords;
    coords(3) = rng.uniform(0.0, 2.0 * M_PI);
    p.coords = coords;
    return p;
  };
  fm.totally_geodesic_claimed = true;
  if (epsilon != 1.0) {
    fm = apply_constant_warp(std::move(fm), std::log(epsilon), "s3_x_s1");
  }
  attach_closed_loops_hopf(fm);
  return fm;
}

FoliatedModel make_degenerate_product(double epsilon) {
  FoliatedModel fm;
  fm.name = "torus2_x_hopf";
  fm.metric.name = "torus2_x_hopf";

  auto am = std::make_shared<AmbientModel>();
  am->dim = 5;
  am->ambient_dim = 6;
  am->charts = {
      product_chart({flat_chart(2, 1.0), stereographic_s3_chart(1.0)},
                    {2, 3}, {2, 4}),
      product_chart({flat_chart(2, 1.0), stereographic_s3_chart(-1.0)},
                    {2, 3}, {2, 4})};
  {
    Mat q = Mat::Zero(6, 6);
    q.bottomRightCorner(4, 4) = hopf_action_matrix();
    Vec b0 = Vec::Zero(6);
    b0(0) = 1.0;
    am->verticals = {VerticalGen{Mat::Zero(6, 6), b0},
                     VerticalGen{q, Vec::Zero(6)}};
  }
  install_ambient(fm, am);

  ChartDomain dom = ChartDomain::with_ball(5, 2, 3, kChartRadius);
  dom.lo(0) = dom.lo(1) = -64.0;
  dom.hi(0) = dom.hi(1) = 64.0;
  fm.metric.charts = {dom, dom};
  {
    // Inversion acts on the trailing S^3 block here.
    ChartTransition t01, t10;
    auto mk = [](int from, int to) {
      ChartTransition t;
      t.from = from;
      t.to = to;
      t.map = [](const Vec& u) {
        Vec out = u;
        const double r2 = u.tail(3).squaredNorm();
        out.tail(3) = u.tail(3) / r2;
        return out;
      };
      t.jacobian = [](const Vec& u) {
        Mat j = Mat::Identity(5, 5);
        const double r2 = u.tail(3).squaredNorm();
        const Vec uh = u.tail(3) / std::sqrt(r2);
        j.bottomRightCorner(3, 3) =
            (Mat::Identity(3, 3) - 2.0 * uh * uh.transpose()) / r2;
        return j;
      };
      return t;
    };
    t01 = mk(0, 1);
    t10 = mk(1, 0);
    fm.metric.transitions = {t01, t10};
  }
  fm.metric.sample_fn = [](Rng& rng) {
    const Vec x = rng.unit_vec(4);
    ChartPoint s3 = hopf_chart_point(x);
    ChartPoint p;
    p.chart_id = s3.chart_id;
    p.coords = Vec(5);
    p.coords(0) = rng.uniform();
    p.coords(1) = rng.uniform();
    p.coords.tail(3) = s3.coords;
    return p;
  };
  fm.totally_geodesic_claimed = true;
  if (epsilon != 1.0) {
    fm = apply_constant_warp(std::move(fm), std::log(epsilon),
                             "torus2_x_hopf");
  }
  return fm;
}

void check_range(const std::string& model, const std::string& name,
                 double value, double lo, double hi) {
  if (!(value >= lo && value <= hi)) {
    std::ostringstream os;
    os << model << ": parameter " << name << " = " << value
       << " outside allowed range [" << lo << ", " << hi << "]";
    throw ValidationError(os.str());
  }
}

}  // namespace

double ModelSpec::param_or(const std::string& key, double fallback) const {
  const auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

const std::vector<ModelCatalogEntry>& model_catalog() {
  static const std::vector<ModelCatalogEntry> catalog = {
      {"flat_torus",
       "Flat torus with vertical = leading coordinate directions; every "
       "tensor vanishes (ground truth).",
       {{"n", 3, 2, 6, "manifold dimension"},
        {"k", 1, 1, 5, "leaf dimension (< n)"}}},
      {"hopf_s3",
       "Berger 3-sphere: unit quaternions in two stereographic charts, "
       "vertical = Hopf action field, fiber scaled by epsilon.",
       {{"epsilon", 1.0, 1e-6, 2.0, "fiber scaling (Berger parameter)"}}},
      {"hopf_warped",
       "Vertically warped Berger sphere; phi restricted to a closed catalog "
       "of basic functions.",
       {{"epsilon", 1.0, 1e-6, 2.0, "fiber scaling"},
        {"phi_family", 1, 0, 1, "0 = constant, 1 = height of the base point"},
        {"lambda", 0.3, -64.0, 64.0, "warp amplitude"}}},
      {"s3_x_s1",
       "Product of a (Berger) 3-sphere and a circle, vertical = Hopf fiber "
       "of the sphere factor: odd horizontal dimension.",
       {{"epsilon", 1.0, 1e-6, 2.0, "fiber scaling of the sphere factor"},
        {"circle_radius", 1.0, 1e-6, 64.0, "radius of the circle factor"}}},
  };
  return catalog;
}

FoliatedModel make_model(const ModelSpec& spec) {
  const ModelCatalogEntry* entry = nullptr;
  for (const auto& e : model_catalog()) {
    if (e.name == spec.name) entry = &e;
  }
  if (!entry)
    throw ValidationError("unknown model name '" + spec.name + "'");
  for (const auto& [key, value] : spec.params) {
    bool known = false;
    for (const auto& p : entry->params) {
      if (p.name == key) {
        check_range(spec.name, key, value, p.min_value, p.max_value);
        known = true;
      }
    }
    if (!known)
      throw ValidationError(spec.name + ": unknown parameter '" + key + "'");
  }

  if (spec.name == "flat_torus") {
    const int n = static_cast<int>(std::llround(spec.param_or("n", 3)));
    const int k = static_cast<int>(std::llround(spec.param_or("k", 1)));
    check_range(spec.name, "n", n, 2, 6);
    check_range(spec.name, "k", k, 1, n - 1);
    return make_flat_torus(n, k);
  }
  if (spec.name == "hopf_s3") {
    const double eps = spec.param_or("epsilon", 1.0);
    check_range(spec.name, "epsilon", eps, 1e-6, 2.0);
    if (!(eps > 0.0 && eps < 2.0))
      throw ValidationError("hopf_s3: epsilon must lie in (0, 2)");
    return make_hopf_s3(eps);
  }
  if (spec.name == "hopf_warped") {
    const double eps = spec.param_or("epsilon", 1.0);
    const int family =
        static_cast<int>(std::llround(spec.param_or("phi_family", 1)));
    const double lambda = spec.param_or("lambda", 0.3);
    if (!(eps > 0.0 && eps < 2.0))
      throw ValidationError("hopf_warped: epsilon must lie in (0, 2)");
    if (!std::isfinite(lambda))
      throw ValidationError("hopf_warped: lambda must be finite");
    if (family != 0 && family != 1)
      throw ValidationError("hopf_warped: phi_family must be 0 or 1");
    return make_hopf_warped(eps, family, lambda);
  }
  if (spec.name == "s3_x_s1") {
    const double eps = spec.param_or("epsilon", 1.0);
    const double radius = spec.param_or("circle_radius", 1.0);
    if (!(eps > 0.0 && eps < 2.0))
      throw ValidationError("s3_x_s1: epsilon must lie in (0, 2)");
    if (!(radius > 0.0))
      throw ValidationError("s3_x_s1: circle_radius must be positive");
    return make_s3_x_s1(eps, radius);
  }
  throw ValidationError("unknown model name '" + spec.name + "'");
}

FoliatedModel degenerate_product_model(double epsilon) {
  return make_degenerate_product(epsilon);
}

Vec hopf_embed(int chart_id, const Vec& u) {
  const double sign = (chart_id == 0) ? 1.0 : -1.0;
  const double d = 1.0 + u.squaredNorm();
  Vec x(4);
  x(0) = sign * (u.squaredNorm() - 1.0) / d;
  x.tail(3) = 2.0 * u / d;
  return x;
}

Mat hopf_embed_jacobian(int chart_id, const Vec& u) {
  return stereographic_s3_chart(chart_id == 0 ? 1.0 : -1.0).jac(u);
}

ChartPoint hopf_chart_point(const Vec& x) {
  return hopf_chart_for(x, 3, Vec::Zero(0));
}

Vec hopf_base_point(const Vec& x) {
  Vec n(3);
  n(0) = x(0) * x(0) + x(1) * x(1) - x(2) * x(2) - x(3) * x(3);
  n(1) = 2.0 * (x(1) * x(2) - x(0) * x(3));
  n(2) = 2.0 * (x(0) * x(2) + x(1) * x(3));
  return n;
}

Vec hopf_fiber_direction(const Vec& x) {
  Vec v(4);
  v << -x(1), x(0), -x(3), x(2);
  return v;
}

double hopf_height(const Vec& x) { return 2.0 * (x(0) * x(2) + x(1) * x(3)); }

}  // namespace folilab
