#include "folilab/holonomy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace folilab {

namespace {

constexpr double kTransportErrorTol = 1e-6;   // hard failure threshold
constexpr double kGeodesicDriftTol = 1e-5;    // model-consistency threshold
constexpr double kEndpointMatchTol = 1e-7;

std::string fnv_ref(const HorizontalPath& path) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  if (!path.samples.empty()) {
    for (int i = 0; i < path.samples.front().point.coords.size(); ++i)
      mix(path.samples.front().point.coords(i));
    for (int i = 0; i < path.samples.back().point.coords.size(); ++i)
      mix(path.samples.back().point.coords(i));
    mix(path.duration());
    mix(static_cast<double>(path.samples.size()));
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

double verticality_of(const Mat& g, const Mat& ph, const Vec& xi) {
  const double total = std::sqrt(std::max(xi.dot(g * xi), 0.0));
  if (total == 0.0) return 0.0;
  const Vec hor = ph * xi;
  return std::sqrt(std::max(hor.dot(g * hor), 0.0)) / total;
}

/// Horizontality drift of every sample; also returns the max.
double path_drift(const FoliatedModel& fm, const HorizontalPath& path) {
  double drift = 0.0;
  for (const auto& s : path.samples) {
    const Projectors pr = projectors(fm, s.point);
    const Mat g = fm.metric.metric_fn(s.point);
    const Vec vert = pr.Pv * s.velocity;
    const double total = std::sqrt(std::max(s.velocity.dot(g * s.velocity), 0.0));
    if (total == 0.0) continue;
    drift = std::max(drift,
                     std::sqrt(std::max(vert.dot(g * vert), 0.0)) / total);
  }
  return drift;
}

HorizontalPath path_from_segment(const FoliatedModel& fm,
                                 GeodesicSegment&& seg) {
  HorizontalPath p;
  p.model_name = seg.model_name;
  p.samples = std::move(seg.samples);
  p.seams = std::move(seg.seams);
  p.step = seg.step;
  p.max_horizontality_drift = path_drift(fm, p);
  return p;
}

}  // namespace

// -- path construction ---------------------------------------------------------

HorizontalPath horizontal_geodesic(const FoliatedModel& fm,
                                   const TangentVector& X, double T,
                                   int steps) {
  {
    const Projectors pr = projectors(fm, X.base);
    const Vec vert = pr.Pv * X.components;
    if (vert.norm() > 1e-10 * std::max(1.0, X.components.norm()))
      throw ArgumentError("horizontal_geodesic: initial vector not horizontal");
  }
  HorizontalPath p =
      path_from_segment(fm, integrate_geodesic(fm.metric, X, T, steps));
  if (p.max_horizontality_drift > kGeodesicDriftTol)
    throw ModelConsistencyError(
        "horizontality not preserved along geodesic (drift " +
        std::to_string(p.max_horizontality_drift) + "): broken model data");
  return p;
}

HorizontalPath random_horizontal_path(const FoliatedModel& fm,
                                      const ChartPoint& p, int num_segments,
                                      double seg_len, std::uint64_t seed,
                                      int steps_per_segment) {
  if (num_segments < 1)
    throw ArgumentError("random_horizontal_path: num_segments >= 1 required");
  Rng rng = Rng::derive(seed, 0x9a75ULL);
  HorizontalPath out;
  out.recipe_start = p;
  ChartPoint cur = p;
  for (int s = 0; s < num_segments; ++s) {
    const Vec coeffs = rng.unit_vec(fm.horizontal_dim());
    const Mat z = orthonormal_horizontal_frame(fm, cur);
    const TangentVector dir{cur, z * coeffs};
    HorizontalPath seg =
        horizontal_geodesic(fm, dir, seg_len, steps_per_segment);
    out = (s == 0) ? std::move(seg) : concatenate(fm, out, seg);
    out.recipe.push_back(PathLeg{coeffs, seg_len});
    cur = out.back().point;
  }
  out.recipe_start = p;
  return out;
}

HorizontalPath concatenate(const FoliatedModel& fm, const HorizontalPath& a,
                           const HorizontalPath& bin) {
  (void)fm;
  if (a.samples.empty()) return bin;
  if (bin.samples.empty()) return a;
  // Transport is parametrization independent, so a spacing mismatch is fixed
  // by linearly rescaling the second path's time (velocities scale inversely).
  HorizontalPath b = bin;
  if (std::abs(a.step - b.step) > 1e-12 * std::max(a.step, b.step)) {
    const double factor = b.step / a.step;  // dt_old / dt_new
    b.step = a.step;
    for (std::size_t i = 0; i < b.samples.size(); ++i) {
      b.samples[i].t = a.step * static_cast<double>(i);
      b.samples[i].velocity *= factor;
    }
    for (auto& seam : b.seams) seam.left_velocity *= factor;
  }
  if (a.back().point.chart_id != b.front().point.chart_id ||
      (a.back().point.coords - b.front().point.coords).norm() > 1e-9)
    throw ArgumentError("concatenate: paths do not meet");

  HorizontalPath out;
  out.model_name = a.model_name;
  out.step = a.step;
  out.samples = a.samples;
  out.seams = a.seams;
  const int junction = static_cast<int>(a.samples.size()) - 1;
  const double t0 = a.duration();

  // Velocity kink at the junction: keep a's arrival state as the left view.
  SeamRecord seam;
  seam.index = junction;
  seam.left_point = a.back().point;
  seam.left_velocity = a.back().velocity;
  out.seams.push_back(std::move(seam));
  out.samples.back().velocity = b.front().velocity;

  for (std::size_t i = 1; i < b.samples.size(); ++i) {
    GeodesicSample s = b.samples[i];
    s.t += t0;
    out.samples.push_back(std::move(s));
  }
  for (const auto& s : b.seams) {
    SeamRecord shifted = s;
    shifted.index += junction;
    out.seams.push_back(std::move(shifted));
  }
  out.max_horizontality_drift =
      std::max(a.max_horizontality_drift, b.max_horizontality_drift);
  out.recipe_start = a.recipe_start;
  out.recipe = a.recipe;
  out.recipe.insert(out.recipe.end(), b.recipe.begin(), b.recipe.end());
  return out;
}

HorizontalPath rebuild_path(const FoliatedModel& fm,
                            const HorizontalPath& path, double speed,
                            int steps_per_segment) {
  if (path.recipe.empty())
    throw ArgumentError("rebuild_path: path carries no generating recipe");
  if (speed <= 0.0) throw ArgumentError("rebuild_path: speed must be positive");
  HorizontalPath out;
  ChartPoint cur = path.recipe_start;
  bool first = true;
  for (const PathLeg& leg : path.recipe) {
    const Mat z = orthonormal_horizontal_frame(fm, cur);
    const TangentVector dir{cur, Vec(speed * (z * leg.direction_coeffs))};
    HorizontalPath seg = horizontal_geodesic(fm, dir, leg.length / speed,
                                             steps_per_segment);
    out = first ? std::move(seg) : concatenate(fm, out, seg);
    first = false;
    cur = out.back().point;
  }
  out.recipe_start = path.recipe_start;
  out.recipe = path.recipe;
  return out;
}

HorizontalPath reverse_path(const FoliatedModel& fm,
                            const HorizontalPath& path) {
  const int last = static_cast<int>(path.samples.size()) - 1;
  const double T = path.duration();
  HorizontalPath out;
  out.model_name = path.model_name;
  out.step = path.step;
  out.closed = path.closed;
  out.closure_gap = path.closure_gap;
  out.max_horizontality_drift = path.max_horizontality_drift;
  out.samples.resize(path.samples.size());
  for (int i = 0; i <= last; ++i) {
    const GeodesicSample& s = path.samples[last - i];
    out.samples[i] = GeodesicSample{T - s.t, s.point, Vec(-s.velocity)};
  }
  // A seam at index s (left view = pre-seam state) reverses into a seam at
  // last - s whose left view is the post-seam state with flipped velocity;
  // the stored sample switches to the pre-seam representation.
  for (const auto& seam : path.seams) {
    const int j = last - seam.index;
    SeamRecord r;
    r.index = j;
    r.left_point = path.samples[seam.index].point;
    r.left_velocity = -path.samples[seam.index].velocity;
    out.samples[j].point = seam.left_point;
    out.samples[j].velocity = -seam.left_velocity;
    out.seams.push_back(std::move(r));
  }
  std::sort(out.seams.begin(), out.seams.end(),
            [](const SeamRecord& x, const SeamRecord& y) {
              return x.index < y.index;
            });
  (void)fm;
  return out;
}

// -- TransportOperator -----------------------------------------------------------

TransportOperator::TransportOperator(const FoliatedModel& fm,
                                     const HorizontalPath& path)
    : fm_(&fm), path_(&path) {
  const int count = static_cast<int>(path.samples.size());
  if (count < 3 || count % 2 == 0)
    throw ArgumentError(
        "transport: path needs an odd sample count (even interval count)");

  nodes_.reserve(count);
  auto build_node = [&](const ChartPoint& pt, const Vec& vel) {
    OneillPoint ctx(fm, pt);
    const Mat z = orthonormal_horizontal_frame(fm, pt);
    const Mat f = orthonormal_vertical_frame(fm, pt);
    const Mat gam = christoffel_contract(ctx.gamma(), vel);
    const Mat astar = ctx.astar_matrix(vel, z);
    const Mat s = ctx.s_matrix(vel, f);
    Node n;
    n.rhs_holonomy = -(gam + astar + s);
    n.rhs_dual = -(gam + astar - s);
    n.rhs_parallel = -gam;
    n.g = ctx.metric();
    n.Pv = ctx.proj().Pv;
    return n;
  };
  for (const auto& s : path.samples)
    nodes_.push_back(build_node(s.point, s.velocity));

  for (const auto& seam : path.seams) {
    if (seam.index % 2 != 0)
      throw ArgumentError("transport: seam off the even sample grid");
    seam_index_.push_back(seam.index);
    seam_nodes_.push_back(build_node(seam.left_point, seam.left_velocity));
    const ChartPoint& stored = path.samples[seam.index].point;
    if (stored.chart_id != seam.left_point.chart_id) {
      const ChartTransition* tr =
          fm.metric.find_transition(seam.left_point.chart_id, stored.chart_id);
      if (!tr)
        throw ArgumentError("transport: seam without registered transition");
      seam_jacobians_.push_back(tr->jacobian(seam.left_point.coords));
    } else {
      seam_jacobians_.push_back(Mat::Identity(fm.dimension(), fm.dimension()));
    }
  }

  const int num_nodes = (count - 1) / 2 + 1;
  frames_.reserve(num_nodes);
  for (int j = 0; j < num_nodes; ++j) {
    frames_.push_back(orthonormal_vertical_frame(fm, path.samples[2 * j].point));
  }
}

const Mat& TransportOperator::pick_rhs(const Node& n, Kind k) const {
  switch (k) {
    case Kind::holonomy: return n.rhs_holonomy;
    case Kind::dual: return n.rhs_dual;
    default: return n.rhs_parallel;
  }
}

std::vector<Vec> TransportOperator::integrate(Kind kind, const Vec& xi0) const {
  const int steps = (static_cast<int>(path_->samples.size()) - 1) / 2;
  const double h = 2.0 * path_->step;
  std::vector<Vec> out;
  out.reserve(steps + 1);
  Vec xi = xi0;
  out.push_back(xi);
  std::size_t seam_cursor = 0;
  // Skip any seam exactly at the start (possible for paths beginning at a
  // junction after slicing); none are produced by the builders.
  while (seam_cursor < seam_index_.size() && seam_index_[seam_cursor] == 0)
    ++seam_cursor;
  for (int j = 0; j < steps; ++j) {
    const int i0 = 2 * j;
    const Node& n0 = nodes_[i0];
    const Node& n1 = nodes_[i0 + 1];
    const bool seam_here = seam_cursor < seam_index_.size() &&
                           seam_index_[seam_cursor] == i0 + 2;
    const Node& n2 = seam_here ? seam_nodes_[seam_cursor] : nodes_[i0 + 2];

    const Mat& r0 = pick_rhs(n0, kind);
    const Mat& r1 = pick_rhs(n1, kind);
    const Mat& r2 = pick_rhs(n2, kind);

    const Vec k1 = r0 * xi;
    const Vec k2 = r1 * (xi + 0.5 * h * k1);
    const Vec k3 = r1 * (xi + 0.5 * h * k2);
    const Vec k4 = r2 * (xi + h * k3);
    xi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    if (seam_here) {
      xi = seam_jacobians_[seam_cursor] * xi;
      ++seam_cursor;
    }
    out.push_back(xi);
  }
  return out;
}

std::vector<Mat> TransportOperator::transformation_series() const {
  const int k = fm_->leaf_dim;
  const Mat& f0 = frames_[0];
  std::vector<std::vector<Vec>> columns(k);
  for (int c = 0; c < k; ++c) {
    columns[c] = integrate(Kind::holonomy, f0.col(c));
  }
  std::vector<Mat> series;
  series.reserve(num_nodes());
  for (int j = 0; j < num_nodes(); ++j) {
    Mat m(k, k);
    const Mat& fj = frames_[j];
    const Mat& g = nodes_[2 * j].g;
    for (int c = 0; c < k; ++c) {
      m.col(c) = fj.transpose() * g * columns[c][j];
    }
    series.push_back(std::move(m));
  }
  return series;
}

double TransportOperator::verticality_drift(int node, const Vec& xi) const {
  const Node& n = nodes_[2 * node];
  return verticality_of(n.g, Mat(Mat::Identity(n.g.rows(), n.g.cols()) - n.Pv),
                        xi);
}

// -- transports -------------------------------------------------------------------

namespace {

TransportedField run_transport(const FoliatedModel& fm,
                               const HorizontalPath& path,
                               const TangentVector& start,
                               TransportOperator::Kind kind,
                               TransportedField::Kind tag) {
  if (start.base.chart_id != path.front().point.chart_id ||
      (start.base.coords - path.front().point.coords).norm() > 1e-9)
    throw ArgumentError("transport: initial vector not at path start");
  const TransportOperator op(fm, path);
  {
    const double v0 = op.verticality_drift(0, start.components);
    if (v0 > 1e-8)
      throw ArgumentError("transport: initial vector is not vertical");
  }
  const std::vector<Vec> values = op.integrate(kind, start.components);
  TransportedField field;
  field.kind = tag;
  field.path_ref = fnv_ref(path);
  field.samples.reserve(values.size());
  for (int j = 0; j < static_cast<int>(values.size()); ++j) {
    const double drift = (kind == TransportOperator::Kind::parallel)
                             ? 0.0
                             : op.verticality_drift(j, values[j]);
    if (drift > kTransportErrorTol)
      throw TransportError("transported field left the vertical bundle",
                           op.node_time(j));
    field.max_verticality_drift = std::max(field.max_verticality_drift, drift);
    field.samples.emplace_back(op.node_time(j),
                               TangentVector{op.node_point(j), values[j]});
  }
  return field;
}

}  // namespace

TransportedField transport_holonomy(const FoliatedModel& fm,
                                    const HorizontalPath& path,
                                    const TangentVector& xi0) {
  return run_transport(fm, path, xi0, TransportOperator::Kind::holonomy,
                       TransportedField::Kind::holonomy);
}

TransportedField transport_dual(const FoliatedModel& fm,
                                const HorizontalPath& path,
                                const TangentVector& nu0) {
  return run_transport(fm, path, nu0, TransportOperator::Kind::dual,
                       TransportedField::Kind::dual);
}

TransportedField transport_dual_via_frames(const FoliatedModel& fm,
                                           const HorizontalPath& path,
                                           const TangentVector& nu0) {
  const TransportOperator op(fm, path);
  const std::vector<Mat> series = op.transformation_series();
  const Vec b0 = op.frame_at(0).transpose() * op.metric_at(0) * nu0.components;
  TransportedField field;
  field.kind = TransportedField::Kind::dual;
  field.path_ref = fnv_ref(path);
  for (int j = 0; j < op.num_nodes(); ++j) {
    const Mat mt = series[j].transpose();
    const Vec bj = mt.partialPivLu().solve(b0);
    field.samples.emplace_back(
        op.node_time(j), TangentVector{op.node_point(j), op.frame_at(j) * bj});
  }
  return field;
}

// -- groupoid ---------------------------------------------------------------------

HolonomyTransformation holonomy_transformation(const FoliatedModel& fm,
                                               const HorizontalPath& path) {
  const TransportOperator op(fm, path);
  const std::vector<Mat> series = op.transformation_series();
  HolonomyTransformation h;
  h.source = path.front().point;
  h.target = path.back().point;
  h.matrix = series.back();
  h.source_frame = op.frame_at(0);
  h.target_frame = op.frame_at(op.num_nodes() - 1);
  h.source_dual = op.metric_at(0) * h.source_frame;
  h.target_dual = op.metric_at(op.num_nodes() - 1) * h.target_frame;
  h.path_ref = fnv_ref(path);
  return h;
}

HolonomyTransformation identity_transformation(const FoliatedModel& fm,
                                               const ChartPoint& p) {
  HolonomyTransformation h;
  h.source = h.target = p;
  h.matrix = Mat::Identity(fm.leaf_dim, fm.leaf_dim);
  h.source_frame = h.target_frame = orthonormal_vertical_frame(fm, p);
  h.source_dual = h.target_dual = fm.metric.metric_fn(p) * h.source_frame;
  h.path_ref = "identity";
  return h;
}

HolonomyTransformation compose(const FoliatedModel& fm,
                               const HolonomyTransformation& h2,
                               const HolonomyTransformation& h1) {
  double gap = chart_distance(fm.metric, h2.source, h1.target);
  if (!(gap <= kEndpointMatchTol))
    throw GroupoidError("compose: target of h1 does not meet source of h2");

  // Reconcile frames: express h1's target frame in h2's source chart, then
  // change basis through the metric pairing.
  Mat f1 = h1.target_frame;
  if (h1.target.chart_id != h2.source.chart_id) {
    const auto mapped = to_chart(fm.metric, h1.target, h2.source.chart_id);
    if (!mapped)
      throw GroupoidError("compose: endpoints live in unconnected charts");
    f1 = mapped->second * f1;
  }
  const Mat basis_change = h2.source_dual.transpose() * f1;  // ~ orthogonal

  HolonomyTransformation out;
  out.source = h1.source;
  out.target = h2.target;
  out.matrix = h2.matrix * basis_change * h1.matrix;
  out.source_frame = h1.source_frame;
  out.source_dual = h1.source_dual;
  out.target_frame = h2.target_frame;
  out.target_dual = h2.target_dual;
  out.path_ref = h1.path_ref + "*" + h2.path_ref;
  return out;
}

HolonomyTransformation invert(const FoliatedModel& fm,
                              const HolonomyTransformation& h) {
  (void)fm;
  Eigen::JacobiSVD<Mat> svd(h.matrix);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (smin <= 0.0 || smax / smin > 1e8)
    throw ConditioningError("invert: transformation matrix is ill-conditioned");
  HolonomyTransformation out;
  out.source = h.target;
  out.target = h.source;
  out.matrix = h.matrix.inverse();
  out.source_frame = h.target_frame;
  out.source_dual = h.target_dual;
  out.target_frame = h.source_frame;
  out.target_dual = h.source_dual;
  out.path_ref = h.path_ref + "^-1";
  return out;
}

namespace {

void require_at_source(const HolonomyTransformation& h,
                       const TangentVector& v, const char* op) {
  if (v.base.chart_id != h.source.chart_id ||
      (v.base.coords - h.source.coords).norm() > 1e-7)
    throw ArgumentError(std::string(op) +
                        ": vector is not based at the source point");
}

}  // namespace

TangentVector zeta(const HolonomyTransformation& h, const TangentVector& xi0) {
  require_at_source(h, xi0, "zeta");
  const Vec a = h.source_dual.transpose() * xi0.components;
  return TangentVector{h.target, h.target_frame * (h.matrix * a)};
}

TangentVector zeta_bar(const HolonomyTransformation& h,
                       const TangentVector& nu0) {
  require_at_source(h, nu0, "zeta_bar");
  const Vec a = h.source_dual.transpose() * nu0.components;
  const Vec b = h.matrix.transpose().partialPivLu().solve(a);
  return TangentVector{h.target, h.target_frame * b};
}

double rho(const HolonomyTransformation& h, const TangentVector& nu0) {
  require_at_source(h, nu0, "rho");
  Vec a = h.source_dual.transpose() * nu0.components;
  const double n = a.norm();
  if (n == 0.0) throw ArgumentError("rho: zero vector");
  a /= n;
  const Vec b = h.matrix.transpose().partialPivLu().solve(a);
  return b.squaredNorm();
}

// -- sampling-based estimates ------------------------------------------------------

double holonomy_bound_estimate(const FoliatedModel& fm, const ChartPoint& p,
                               int budget, int num_segments, double seg_len,
                               std::uint64_t seed) {
  if (budget < 1) throw ArgumentError("holonomy_bound_estimate: budget >= 1");
  std::vector<double> sigma(budget, 0.0);
  parallel_for(budget, [&](int i) {
    const HorizontalPath path = random_horizontal_path(
        fm, p, num_segments, seg_len, Rng::derive(seed, i).next_u64());
    const HolonomyTransformation h = holonomy_transformation(fm, path);
    Eigen::JacobiSVD<Mat> svd(h.matrix);
    sigma[i] = svd.singularValues().maxCoeff();
  });
  return *std::max_element(sigma.begin(), sigma.end());
}

namespace {

/// max over sampled unit horizontal X at nu's base of K(X, nu) - |A*_X nu|^2.
double vertizontal_margin(const FoliatedModel& fm, const TangentVector& nu,
                          int num_dirs) {
  const ChartPoint& q = nu.base;
  const Mat z = orthonormal_horizontal_frame(fm, q);
  const auto dirs = deterministic_directions(fm.horizontal_dim(), num_dirs);
  double worst = -std::numeric_limits<double>::infinity();
  for (const Vec& d : dirs) {
    const TangentVector x{q, z * d};
    const double k = unreduced_sectional(fm.metric, x, nu);
    const TangentVector as = a_star(fm, x, nu);
    const double margin = k - inner(fm.metric, as, as);
    worst = std::max(worst, margin);
  }
  return worst;
}

}  // namespace

ThmMaxResult thm_max_search(const FoliatedModel& fm, const ChartPoint& p,
                            const TangentVector& nu0, int budget,
                            std::uint64_t seed, const PathBudget& paths) {
  if (budget < 1) throw ArgumentError("thm_max_search: budget >= 1");

  const int restarts = std::max(1, budget / 2);
  std::vector<double> rho_val(restarts, 0.0);
  std::vector<HolonomyTransformation> hs(restarts);
  parallel_for(restarts, [&](int i) {
    const HorizontalPath path = random_horizontal_path(
        fm, p, paths.num_segments, paths.seg_len,
        Rng::derive(seed, 2 * i).next_u64(), paths.steps_per_segment);
    hs[i] = holonomy_transformation(fm, path);
    rho_val[i] = rho(hs[i], nu0);
  });
  int best = 0;
  for (int i = 1; i < restarts; ++i) {
    if (rho_val[i] > rho_val[best]) best = i;
  }

  ThmMaxResult result;
  result.best = hs[best];
  result.rho_best = rho_val[best];

  // Greedy phase: extend the incumbent by short random segments, keeping
  // only improvements; composition makes each trial cost one short path.
  const int greedy = budget - restarts;
  Rng grng = Rng::derive(seed, 0x93eedULL);
  int next_checkpoint = std::max(1, budget / 8);
  for (int step = 0; step < greedy; ++step) {
    const double len = paths.seg_len * grng.uniform(0.25, 1.0);
    const HorizontalPath ext =
        random_horizontal_path(fm, result.best.target, 1, len,
                               grng.next_u64(), paths.steps_per_segment);
    const HolonomyTransformation cand =
        compose(fm, holonomy_transformation(fm, ext), result.best);
    const double r = rho(cand, nu0);
    if (r > result.rho_best) {
      result.rho_best = r;
      result.best = cand;
    }
    const int used = restarts + step + 1;
    if (used >= next_checkpoint) {
      const TangentVector nu = zeta_bar(result.best, nu0);
      result.checkpoints.emplace_back(used, result.rho_best,
                                      vertizontal_margin(fm, nu, 32));
      next_checkpoint *= 2;
    }
  }

  result.nu = zeta_bar(result.best, nu0);
  result.worst_margin = vertizontal_margin(fm, result.nu, 64);
  result.checkpoints.emplace_back(budget, result.rho_best,
                                  result.worst_margin);
  return result;
}

// -- dual-leaf spans ----------------------------------------------------------------

SpanAccumulator::SpanAccumulator(ChartPoint base, int leaf_dim)
    : base_(std::move(base)), leaf_dim_(leaf_dim),
      vectors_(leaf_dim, 0) {}

void SpanAccumulator::add(const Vec& frame_coeffs) {
  if (frame_coeffs.size() != leaf_dim_)
    throw ArgumentError("SpanAccumulator: coefficient size mismatch");
  vectors_.conservativeResize(leaf_dim_, count_ + 1);
  vectors_.col(count_++) = frame_coeffs;
}

Vec SpanAccumulator::singular_values() const {
  if (count_ == 0) return Vec::Zero(0);
  Eigen::JacobiSVD<Mat> svd(vectors_);
  return svd.singularValues();
}

int SpanAccumulator::rank() const {
  const Vec sv = singular_values();
  if (sv.size() == 0) return 0;
  // Scale-free cutoff with an absolute floor so a numerically zero tensor
  // does not masquerade as rank one.
  const double cutoff = std::max(1e-8, 1e-8 * sv.maxCoeff());
  int r = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) ++r;
  }
  return r;
}

Mat SpanAccumulator::span_basis() const {
  if (count_ == 0) return Mat(leaf_dim_, 0);
  Eigen::JacobiSVD<Mat> svd(vectors_, Eigen::ComputeFullU);
  return svd.matrixU().leftCols(rank());
}

Mat SpanAccumulator::complement_basis() const {
  if (count_ == 0) return Mat::Identity(leaf_dim_, leaf_dim_);
  Eigen::JacobiSVD<Mat> svd(vectors_, Eigen::ComputeFullU);
  return svd.matrixU().rightCols(leaf_dim_ - rank());
}

SpanAccumulator dual_leaf_span(const FoliatedModel& fm,
                               const HorizontalPath& path, int num_times) {
  if (num_times < 2) throw ArgumentError("dual_leaf_span: num_times >= 2");
  const TransportOperator op(fm, path);
  const std::vector<Mat> series = op.transformation_series();
  SpanAccumulator span(path.front().point, fm.leaf_dim);
  const int nodes = op.num_nodes();
  for (int s = 0; s < num_times; ++s) {
    const int j = static_cast<int>(
        std::llround(static_cast<double>(s) * (nodes - 1) / (num_times - 1)));
    const ChartPoint& q = op.node_point(j);
    const Vec vel = path.samples[2 * j].velocity;
    OneillPoint ctx(fm, q);
    const Mat z = orthonormal_horizontal_frame(fm, q);
    const Mat az = ctx.a_matrix(ctx.proj().Ph * vel) * z;
    const Mat& fj = op.frame_at(j);
    const Eigen::PartialPivLU<Mat> lu(series[j]);
    for (int c = 0; c < az.cols(); ++c) {
      const Vec coeff = fj.transpose() * ctx.metric() * az.col(c);
      span.add(lu.solve(coeff));
    }
  }
  return span;
}

DualOrthogonalityResult dual_orthogonality_check(const FoliatedModel& fm,
                                                 const HorizontalPath& path,
                                                 const SpanAccumulator& span) {
  DualOrthogonalityResult out;
  if (span.rank() >= fm.leaf_dim) {
    out.applicable = false;
    return out;
  }
  out.applicable = true;

  const TransportOperator op(fm, path);
  const std::vector<Mat> series = op.transformation_series();
  const Mat complement = span.complement_basis();
  const Mat basis = span.span_basis();
  const Vec nu0 = op.frame_at(0) * complement.col(0);

  const std::vector<Vec> nu = op.integrate(TransportOperator::Kind::dual, nu0);
  for (int j = 0; j < op.num_nodes(); ++j) {
    const Vec coeff = op.frame_at(j).transpose() * op.metric_at(j) * nu[j];
    // Pairing with the holonomy-transported span basis.
    for (int c = 0; c < basis.cols(); ++c) {
      const Vec moved = series[j] * basis.col(c);
      const double r = std::abs(coeff.dot(moved)) /
                       std::max(1e-30, coeff.norm() * moved.norm());
      out.max_pairing_residual = std::max(out.max_pairing_residual, r);
    }
    // A* residual along the driving velocity.
    const TangentVector nu_j{op.node_point(j), nu[j]};
    const TangentVector vel{op.node_point(j), path.samples[2 * j].velocity};
    const TangentVector as = a_star(fm, vel, nu_j);
    out.max_astar_residual =
        std::max(out.max_astar_residual, norm(fm.metric, as));
  }
  return out;
}

InvariantAverageResult invariant_metric_average(const FoliatedModel& fm,
                                                const ChartPoint& p,
                                                int loop_budget,
                                                std::uint64_t seed) {
  (void)seed;  // loop generation is deterministic per (p, index)
  if (loop_budget < 1)
    throw ArgumentError("invariant_metric_average: budget >= 1");
  if (!fm.closed_loop_fn)
    throw SamplingError(
        "model provides no closed-loop generator for " + fm.name, 0);

  const int want = loop_budget;
  const int want_fresh = std::max(2, loop_budget / 2);
  std::vector<Mat> loops;
  int index = 0;
  while (static_cast<int>(loops.size()) < want + want_fresh) {
    const auto path = fm.closed_loop_fn(p, index++);
    if (!path) break;
    if (!(path->closure_gap <= 1e-6)) continue;
    loops.push_back(holonomy_transformation(fm, *path).matrix);
    if (index > 4 * (want + want_fresh) + 64) break;
  }
  if (static_cast<int>(loops.size()) < 2)
    throw SamplingError("insufficient closed loops found within budget",
                        static_cast<int>(loops.size()));

  const int used = std::min<int>(want, static_cast<int>(loops.size()) - 1);
  InvariantAverageResult result;
  result.Q = Mat::Zero(fm.leaf_dim, fm.leaf_dim);
  for (int i = 0; i < used; ++i) {
    result.Q += loops[i].transpose() * loops[i];
  }
  result.Q /= used;
  result.loops_used = used;
  for (std::size_t i = static_cast<std::size_t>(used); i < loops.size(); ++i) {
    const Mat& g = loops[i];
    result.invariance_residual =
        std::max(result.invariance_residual,
                 (g.transpose() * result.Q * g - result.Q).norm());
  }
  return result;
}

}  // namespace folilab
