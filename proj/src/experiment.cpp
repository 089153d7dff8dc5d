#include "folilab/experiment.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace folilab {

namespace {

// ---------------------------------------------------------------------------
// JSON emission. Reports must be byte-identical across runs with equal
// config, so floats are printed with a fixed 17-significant-digit format and
// key order is fixed by construction.
// ---------------------------------------------------------------------------

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

std::string value_to_json(const DetailValue& v) {
  if (std::holds_alternative<double>(v)) return fmt_double(std::get<double>(v));
  if (std::holds_alternative<std::int64_t>(v))
    return std::to_string(std::get<std::int64_t>(v));
  return "\"" + json_escape(std::get<std::string>(v)) + "\"";
}

std::string value_to_csv(const DetailValue& v) {
  if (std::holds_alternative<double>(v)) return fmt_double(std::get<double>(v));
  if (std::holds_alternative<std::int64_t>(v))
    return std::to_string(std::get<std::int64_t>(v));
  return std::get<std::string>(v);
}

struct KindName {
  ExperimentKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {ExperimentKind::validate_model, "validate_model"},
    {ExperimentKind::gray_oneill, "gray_oneill"},
    {ExperimentKind::warped_curvature, "warped_curvature"},
    {ExperimentKind::fatness_scan, "fatness_scan"},
    {ExperimentKind::theorem_a, "theorem_a"},
    {ExperimentKind::thm_max, "thm_max"},
    {ExperimentKind::holonomy_bound, "holonomy_bound"},
    {ExperimentKind::dual_leaf, "dual_leaf"},
    {ExperimentKind::closed_loop, "closed_loop"},
    {ExperimentKind::duality_suite, "duality_suite"},
};

}  // namespace

const char* to_string(ExperimentKind kind) {
  for (const auto& k : kKindNames) {
    if (k.kind == kind) return k.name;
  }
  return "unknown";
}

ExperimentKind experiment_kind_from(const std::string& name) {
  for (const auto& k : kKindNames) {
    if (name == k.name) return k.kind;
  }
  throw ConfigError("unrecognized experiment kind '" + name + "'");
}

DetailRecord& DetailRecord::add(const std::string& key, double v) {
  fields.emplace_back(key, DetailValue(v));
  return *this;
}
DetailRecord& DetailRecord::add(const std::string& key, std::int64_t v) {
  fields.emplace_back(key, DetailValue(v));
  return *this;
}
DetailRecord& DetailRecord::add(const std::string& key, const std::string& v) {
  fields.emplace_back(key, DetailValue(v));
  return *this;
}

ExperimentConfig parse_config_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  ExperimentConfig config;
  try {
    if (!j.contains("model") || !j["model"].is_object())
      throw ConfigError("config: missing \"model\" object");
    config.model.name = j["model"].value("name", std::string());
    if (config.model.name.empty())
      throw ConfigError("config: model.name is required");
    if (j["model"].contains("params")) {
      for (const auto& [key, value] : j["model"]["params"].items()) {
        if (!value.is_number())
          throw ConfigError("config: model parameter '" + key +
                            "' must be a number");
        config.model.params[key] = value.get<double>();
      }
    }
    if (!j.contains("experiment"))
      throw ConfigError("config: missing \"experiment\"");
    config.kind = experiment_kind_from(j["experiment"].get<std::string>());
    config.samples = j.value("samples", 50);
    config.seed = j.value("seed", std::uint64_t(1));
    config.tolerance = j.value("tolerance", 1e-6);
    config.output_path = j.value("output_path", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (config.samples < 1) throw ConfigError("config: samples must be >= 1");
  if (!(config.tolerance > 0.0))
    throw ConfigError("config: tolerance must be positive");
  return config;
}

std::string config_to_json(const ExperimentConfig& config) {
  std::string out = "{\"model\":{\"name\":\"" + json_escape(config.model.name) +
                    "\",\"params\":{";
  bool first = true;
  for (const auto& [key, value] : config.model.params) {
    if (!first) out += ",";
    first = false;
    out += "\"" + json_escape(key) + "\":" + fmt_double(value);
  }
  out += "}},\"experiment\":\"";
  out += to_string(config.kind);
  out += "\",\"samples\":" + std::to_string(config.samples);
  out += ",\"seed\":" + std::to_string(config.seed);
  out += ",\"tolerance\":" + fmt_double(config.tolerance);
  out += ",\"output_path\":\"" + json_escape(config.output_path) + "\"}";
  return out;
}

std::string report_to_json(const ExperimentReport& report,
                           bool include_timing) {
  std::string out = "{\"config\":" + config_to_json(report.config);
  out += ",\"timing_s\":" + fmt_double(include_timing ? report.timing_s : 0.0);
  out += ",\"num_samples\":" + std::to_string(report.num_samples);
  out += ",\"max_residual\":" + fmt_double(report.max_residual);
  out += ",\"margin\":" + fmt_double(report.margin);
  out += std::string(",\"pass\":") + (report.pass ? "true" : "false");
  out += ",\"details\":[";
  for (std::size_t i = 0; i < report.details.size(); ++i) {
    if (i) out += ",";
    out += "{";
    const auto& rec = report.details[i];
    for (std::size_t f = 0; f < rec.fields.size(); ++f) {
      if (f) out += ",";
      out += "\"" + json_escape(rec.fields[f].first) +
             "\":" + value_to_json(rec.fields[f].second);
    }
    out += "}";
  }
  out += "]}";
  return out;
}

namespace {

/// Fixed CSV schema per experiment kind (used verbatim for header-only files
/// when a run produced no detail rows).
const char* csv_header_for(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::validate_model:
      return "i,chart,metric_sym,metric_spd_violation,projector_idem,"
             "projector_selfadj,projector_trace_dev,chart_overlap";
    case ExperimentKind::gray_oneill:
      return "t,K_riemann,K_formula,residual";
    case ExperimentKind::warped_curvature:
      return "i,K,astar_sq,residual";
    case ExperimentKind::fatness_scan:
      return "i,margin";
    case ExperimentKind::theorem_a:
      return "i,astar_norm,K";
    case ExperimentKind::thm_max:
      return "budget,rho_best,worst_margin";
    case ExperimentKind::holonomy_bound:
      return "i,rho";
    case ExperimentKind::dual_leaf:
      return "i,rank,sigma_max,ortho_astar,ortho_pairing";
    case ExperimentKind::closed_loop:
      return "i,gap,h_dev";
    case ExperimentKind::duality_suite:
      return "i,pairing_drift,dual_route_diff,verticality_drift";
  }
  return "";
}

}  // namespace

std::string report_to_csv(const ExperimentReport& report) {
  std::string out;
  if (report.details.empty()) {
    out = csv_header_for(report.config.kind);
    out += "\n";
    return out;
  }
  const auto& head = report.details.front().fields;
  for (std::size_t f = 0; f < head.size(); ++f) {
    if (f) out += ",";
    out += head[f].first;
  }
  out += "\n";
  for (const auto& rec : report.details) {
    for (std::size_t f = 0; f < rec.fields.size(); ++f) {
      if (f) out += ",";
      out += value_to_csv(rec.fields[f].second);
    }
    out += "\n";
  }
  return out;
}

void emit_report(const ExperimentReport& report, const std::string& path,
                 bool include_timing) {
  if (path.empty()) throw ConfigError("emit_report: empty output path");
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open output file '" + path + "'");
    os << report_to_json(report, include_timing);
    if (!os) throw Error("failed writing output file '" + path + "'");
  }
  std::filesystem::path csv(path);
  csv.replace_extension(".csv");
  {
    std::ofstream os(csv, std::ios::binary);
    if (!os) throw Error("cannot open output file '" + csv.string() + "'");
    os << report_to_csv(report);
    if (!os) throw Error("failed writing output file '" + csv.string() + "'");
  }
}

std::string list_models_json() {
  std::string out = "{\"models\":[";
  bool first_model = true;
  for (const auto& entry : model_catalog()) {
    if (!first_model) out += ",";
    first_model = false;
    out += "{\"name\":\"" + json_escape(entry.name) + "\",\"description\":\"" +
           json_escape(entry.description) + "\",\"params\":[";
    bool first_param = true;
    for (const auto& p : entry.params) {
      if (!first_param) out += ",";
      first_param = false;
      out += "{\"name\":\"" + json_escape(p.name) +
             "\",\"default\":" + fmt_double(p.default_value) +
             ",\"min\":" + fmt_double(p.min_value) +
             ",\"max\":" + fmt_double(p.max_value) + ",\"doc\":\"" +
             json_escape(p.doc) + "\"}";
    }
    out += "]}";
  }
  out += "]}";
  return out;
}

// ---------------------------------------------------------------------------
// Experiment implementations.
// ---------------------------------------------------------------------------

namespace {

struct RunState {
  const ExperimentConfig& config;
  const FoliatedModel& fm;
  ExperimentReport& report;
};

double abs_max(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

void run_validate_model(RunState st) {
  const int n = st.fm.dimension();
  const int num = st.config.samples;
  std::vector<DetailRecord> rows(num);
  parallel_for(num, [&](int i) {
    Rng rng = Rng::derive(st.config.seed, i);
    const ChartPoint p = st.fm.metric.sample_fn(rng);
    const Mat g = metric_eval(st.fm.metric, p);
    const double sym = abs_max(g - g.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> eig(g);
    const double lam_min = eig.eigenvalues().minCoeff();
    const double spd = std::max(0.0, -lam_min);
    const Projectors pr = projectors(st.fm, p);
    const double idem = abs_max(pr.Pv * pr.Pv - pr.Pv);
    const double selfadj = abs_max(g * pr.Pv - (g * pr.Pv).transpose());
    const double trace_dev = std::abs(pr.Pv.trace() - st.fm.leaf_dim);
    // Chart-overlap compatibility: pull the metric back through every
    // transition applicable at p.
    double overlap = 0.0;
    for (const auto& tr : st.fm.metric.transitions) {
      if (tr.from != p.chart_id) continue;
      const auto mapped = to_chart(st.fm.metric, p, tr.to);
      if (!mapped) continue;
      const Mat j = mapped->second;
      const Mat pulled =
          j.transpose() * metric_eval(st.fm.metric, mapped->first) * j;
      overlap = std::max(overlap, abs_max(pulled - g));
    }
    rows[i]
        .add("i", std::int64_t(i))
        .add("chart", std::int64_t(p.chart_id))
        .add("metric_sym", sym)
        .add("metric_spd_violation", spd)
        .add("projector_idem", idem)
        .add("projector_selfadj", selfadj)
        .add("projector_trace_dev", trace_dev)
        .add("chart_overlap", overlap);
    (void)n;
  });
  double worst = 0.0;
  for (auto& r : rows) {
    for (const auto& [key, value] : r.fields) {
      if (std::holds_alternative<double>(value))
        worst = std::max(worst, std::get<double>(value));
    }
    st.report.details.push_back(std::move(r));
  }
  st.report.max_residual = worst;
  st.report.margin = 0.0;
  st.report.pass = worst <= st.config.tolerance;
}

struct CurvatureProbe {
  double t = 0.0;
  double k_riemann = 0.0;
  double k_formula = 0.0;
  double residual = 0.0;
};

/// Evaluates the vertizontal curvature identities along one horizontal
/// geodesic: the dual-field form (1/2 f'' - 3|S nu|^2 + |A* nu|^2) and the
/// holonomy-field form (-1/2 f'' + |S xi|^2 + |A* xi|^2), both against the
/// curvature tensor. f'' uses a 4th-order five-point stencil with spacing
/// near 0.023, which balances stencil truncation against transport error.
std::pair<CurvatureProbe, CurvatureProbe> curvature_identity_probe(
    const FoliatedModel& fm, const ChartPoint& p, Rng& rng) {
  const TangentVector dir = random_horizontal_unit(fm, p, rng);
  const HorizontalPath path = horizontal_geodesic(fm, dir, 1.0, 1024);
  const TangentVector nu0 = random_vertical_unit(fm, p, rng);

  const TransportedField dual = transport_dual(fm, path, nu0);
  const TransportedField hol = transport_holonomy(fm, path, nu0);

  const int nodes = static_cast<int>(dual.samples.size());
  const double dt = dual.samples[1].first - dual.samples[0].first;
  const int j = std::max(2, static_cast<int>(std::lround(0.0234 / dt)));
  const int mid = nodes / 2;

  auto squared_norm_at = [&](const TransportedField& f, int i) {
    const double nn = norm(fm.metric, f.samples[i].second);
    return nn * nn;
  };
  auto second_diff = [&](const TransportedField& f) {
    const double delta = j * dt;
    return (-squared_norm_at(f, mid + 2 * j) + 16 * squared_norm_at(f, mid + j) -
            30 * squared_norm_at(f, mid) + 16 * squared_norm_at(f, mid - j) -
            squared_norm_at(f, mid - 2 * j)) /
           (12.0 * delta * delta);
  };

  const TangentVector vel{path.samples[2 * mid].point,
                          path.samples[2 * mid].velocity};
  auto one = [&](const TransportedField& f, bool dual_form) {
    const TangentVector& field = f.samples[mid].second;
    const double k = unreduced_sectional(fm.metric, vel, field);
    const TangentVector s = s_tensor(fm, vel, field);
    const TangentVector as = a_star(fm, vel, field);
    const double s2 = inner(fm.metric, s, s);
    const double as2 = inner(fm.metric, as, as);
    const double fpp = second_diff(f);
    CurvatureProbe probe;
    probe.t = f.samples[mid].first;
    probe.k_riemann = k;
    probe.k_formula = dual_form ? 0.5 * fpp - 3.0 * s2 + as2
                                : -0.5 * fpp + s2 + as2;
    probe.residual = std::abs(probe.k_formula - k) / std::max(0.1, std::abs(k));
    return probe;
  };
  return {one(dual, true), one(hol, false)};
}

void run_gray_oneill(RunState st) {
  const int num = st.config.samples;
  std::vector<std::pair<CurvatureProbe, CurvatureProbe>> probes(num);
  parallel_for(num, [&](int i) {
    Rng rng = Rng::derive(st.config.seed, i);
    const ChartPoint p = st.fm.metric.sample_fn(rng);
    probes[i] = curvature_identity_probe(st.fm, p, rng);
  });
  double worst = 0.0;
  for (const auto& [dual, hol] : probes) {
    for (const CurvatureProbe* probe : {&dual, &hol}) {
      st.report.details.push_back(DetailRecord{}
                                      .add("t", probe->t)
                                      .add("K_riemann", probe->k_riemann)
                                      .add("K_formula", probe->k_formula)
                                      .add("residual", probe->residual));
      worst = std::max(worst, probe->residual);
    }
  }
  st.report.max_residual = worst;
  st.report.pass = worst <= st.config.tolerance;
}

void run_warped_curvature(RunState st) {
  const std::string family = st.fm.warp ? st.fm.warp->family : "constant";
  const int num = st.config.samples;
  double worst = 0.0;
  if (family != "height") {
    // Constant warp factor: K(xi, c') = |A*_c' xi|^2 pointwise.
    std::vector<DetailRecord> rows(num);
    std::vector<double> residuals(num, 0.0);
    parallel_for(num, [&](int i) {
      Rng rng = Rng::derive(st.config.seed, i);
      const ChartPoint p = st.fm.metric.sample_fn(rng);
      const TangentVector x = random_horizontal_unit(st.fm, p, rng);
      const TangentVector xi = random_vertical_unit(st.fm, p, rng);
      const double k = unreduced_sectional(st.fm.metric, x, xi);
      const TangentVector as = a_star(st.fm, x, xi);
      const double as2 = inner(st.fm.metric, as, as);
      residuals[i] = std::abs(k - as2);
      rows[i]
          .add("i", std::int64_t(i))
          .add("K", k)
          .add("astar_sq", as2)
          .add("residual", residuals[i]);
    });
    for (int i = 0; i < num; ++i) {
      worst = std::max(worst, residuals[i]);
      st.report.details.push_back(std::move(rows[i]));
    }
  } else {
    // Height family: test at the minimum point of phi, where the curvature
    // law has no S-term. The classical statement carries coefficient 1/2 on
    // |xi|_0^2 Hess phi; the coefficient the warp factor itself produces is
    // e^{2 phi(p)}, so both residuals are reported.
    const Vec q_min = [] {
      Vec q(4);
      q << 1.0 / std::sqrt(2.0), 0.0, -1.0 / std::sqrt(2.0), 0.0;
      return q;
    }();
    const ChartPoint p = hopf_chart_point(q_min);
    const double phi_min = st.fm.warp->phi(p);
    const Mat g0 = st.fm.warp->base->metric.metric_fn(p);
    std::vector<DetailRecord> rows(num);
    std::vector<double> residuals(num, 0.0);
    parallel_for(num, [&](int i) {
      Rng rng = Rng::derive(st.config.seed, i);
      const TangentVector x = random_horizontal_unit(st.fm, p, rng);
      const TangentVector xi = random_vertical_unit(st.fm, p, rng);
      const double k = unreduced_sectional(st.fm.metric, xi, x);
      const TangentVector as = a_star(st.fm, x, xi);
      const double as2 = inner(st.fm.metric, as, as);
      const double xi0_sq = xi.components.dot(g0 * xi.components);
      // Hess phi(x, x) by a central 4th-order stencil of phi along the
      // geodesic through (p, x); the geodesic is integrated so the stencil
      // offsets land exactly on sample indices.
      const double delta = 0.04;
      const int sub = 32;  // samples per delta
      const HorizontalPath fwd =
          horizontal_geodesic(st.fm, x, 2.0 * delta, 2 * sub);
      const TangentVector xneg{p, Vec(-x.components)};
      const HorizontalPath bwd =
          horizontal_geodesic(st.fm, xneg, 2.0 * delta, 2 * sub);
      auto phi_at = [&](const HorizontalPath& path, int steps_of_delta) {
        return st.fm.warp->phi(path.samples[sub * steps_of_delta].point);
      };
      const double hess =
          (-phi_at(fwd, 2) + 16 * phi_at(fwd, 1) -
           30 * st.fm.warp->phi(p) + 16 * phi_at(bwd, 1) - phi_at(bwd, 2)) /
          (12.0 * delta * delta);
      const double literal = std::abs(k + 0.5 * xi0_sq * hess - as2);
      const double consistent =
          std::abs(k + std::exp(2.0 * phi_min) * xi0_sq * hess - as2);
      residuals[i] = literal;
      rows[i]
          .add("i", std::int64_t(i))
          .add("K", k)
          .add("astar_sq", as2)
          .add("hess_phi", hess)
          .add("residual", literal)
          .add("residual_consistent", consistent);
    });
    for (int i = 0; i < num; ++i) {
      worst = std::max(worst, residuals[i]);
      st.report.details.push_back(std::move(rows[i]));
    }
  }
  st.report.max_residual = worst;
  st.report.pass = worst <= st.config.tolerance;
}

bool expect_fat(const std::string& model_name) {
  return model_name == "hopf_s3" || model_name == "hopf_warped";
}

void run_fatness_scan(RunState st) {
  const int num = st.config.samples;
  std::vector<double> margins(num, 0.0);
  parallel_for(num, [&](int i) {
    Rng rng = Rng::derive(st.config.seed, i);
    const ChartPoint p = st.fm.metric.sample_fn(rng);
    margins[i] = fat_point_margin(st.fm, p, 16);
  });
  double min_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < num; ++i) {
    min_margin = std::min(min_margin, margins[i]);
    st.report.details.push_back(
        DetailRecord{}.add("i", std::int64_t(i)).add("margin", margins[i]));
  }
  st.report.margin = min_margin;
  if (expect_fat(st.fm.name)) {
    st.report.max_residual = 0.0;
    st.report.pass = min_margin > st.config.tolerance;
  } else {
    st.report.max_residual = min_margin;
    st.report.pass = min_margin <= st.config.tolerance;
  }
}

void run_theorem_a(RunState st) {
  const int num = st.config.samples;
  std::vector<double> astar_norm(num, 0.0), curvature(num, 0.0);
  parallel_for(num, [&](int i) {
    Rng rng = Rng::derive(st.config.seed, i);
    const ChartPoint p = st.fm.metric.sample_fn(rng);
    const TangentVector xi = random_vertical_unit(st.fm, p, rng);
    try {
      const TangentVector x = kernel_direction(st.fm, p, xi);
      const TangentVector as = a_star(st.fm, x, xi);
      astar_norm[i] = norm(st.fm.metric, as);
      curvature[i] = unreduced_sectional(st.fm.metric, x, xi);
    } catch (const NoKernelError&) {
      astar_norm[i] = std::numeric_limits<double>::infinity();
      curvature[i] = std::numeric_limits<double>::infinity();
    }
  });
  double worst = 0.0;
  for (int i = 0; i < num; ++i) {
    worst = std::max(worst, std::max(astar_norm[i], std::max(curvature[i], 0.0)));
    st.report.details.push_back(DetailRecord{}
                                    .add("i", std::int64_t(i))
                                    .add("astar_norm", astar_norm[i])
                                    .add("K", curvature[i]));
  }
  st.report.max_residual = worst;
  st.report.pass = std::isfinite(worst) && worst <= st.config.tolerance;
}

void run_thm_max(RunState st) {
  Rng rng = Rng::derive(st.config.seed, 0xfeedULL);
  const ChartPoint p = st.fm.metric.sample_fn(rng);
  const TangentVector nu0{p, orthonormal_vertical_frame(st.fm, p).col(0)};
  const ThmMaxResult result =
      thm_max_search(st.fm, p, nu0, st.config.samples, st.config.seed);
  for (const auto& [used, rho_best, margin] : result.checkpoints) {
    st.report.details.push_back(DetailRecord{}
                                    .add("budget", std::int64_t(used))
                                    .add("rho_best", rho_best)
                                    .add("worst_margin", margin));
  }
  st.report.margin = result.worst_margin;
  st.report.max_residual = std::max(0.0, result.worst_margin);
  st.report.pass = result.worst_margin <= st.config.tolerance;
}

void run_holonomy_bound(RunState st) {
  Rng rng = Rng::derive(st.config.seed, 0xb0bULL);
  const ChartPoint p = st.fm.metric.sample_fn(rng);
  const double bound = holonomy_bound_estimate(st.fm, p, st.config.samples, 4,
                                               0.5, st.config.seed);
  // Lemma-style containment: every sampled rho lies in [L^-2, L^2] with
  // 1e-3 slack.
  const double lo = (1.0 / (bound * bound)) * (1.0 - 1e-3);
  const double hi = bound * bound * (1.0 + 1e-3);
  const int probes = std::min(64, st.config.samples);
  std::vector<double> rho_vals(probes, 0.0);
  parallel_for(probes, [&](int i) {
    Rng prng = Rng::derive(st.config.seed ^ 0x5a5a5a5aULL, i);
    const HorizontalPath path =
        random_horizontal_path(st.fm, p, 4, 0.5, prng.next_u64());
    const HolonomyTransformation h = holonomy_transformation(st.fm, path);
    Rng vrng = Rng::derive(st.config.seed ^ 0xa5a5a5a5ULL, i);
    const TangentVector nu0 = random_vertical_unit(st.fm, p, vrng);
    rho_vals[i] = rho(h, nu0);
  });
  double violation = 0.0;
  for (int i = 0; i < probes; ++i) {
    violation = std::max(violation,
                         std::max(lo - rho_vals[i], rho_vals[i] - hi));
    st.report.details.push_back(
        DetailRecord{}.add("i", std::int64_t(i)).add("rho", rho_vals[i]));
  }
  violation = std::max(violation, 0.0);
  st.report.margin = bound;
  st.report.max_residual = violation;
  st.report.pass = violation <= st.config.tolerance;
}

int expected_span_rank(const FoliatedModel& fm) {
  if (fm.name == "flat_torus") return 0;
  if (fm.name == "torus2_x_hopf") return 1;
  return fm.leaf_dim;
}

void run_dual_leaf(RunState st) {
  const int num = st.config.samples;
  const int expected = expected_span_rank(st.fm);
  struct Row {
    int rank = 0;
    double sigma_max = 0.0;
    double ortho_astar = -1.0;
    double ortho_pairing = -1.0;
  };
  std::vector<Row> rows(num);
  parallel_for(num, [&](int i) {
    Rng rng = Rng::derive(st.config.seed, i);
    const ChartPoint p = st.fm.metric.sample_fn(rng);
    const TangentVector x = random_horizontal_unit(st.fm, p, rng);
    const HorizontalPath path = horizontal_geodesic(st.fm, x, 1.5, 512);
    const SpanAccumulator span = dual_leaf_span(st.fm, path, 12);
    rows[i].rank = span.rank();
    const Vec sv = span.singular_values();
    rows[i].sigma_max = sv.size() ? sv.maxCoeff() : 0.0;
    const DualOrthogonalityResult ortho =
        dual_orthogonality_check(st.fm, path, span);
    if (ortho.applicable) {
      rows[i].ortho_astar = ortho.max_astar_residual;
      rows[i].ortho_pairing = ortho.max_pairing_residual;
    }
  });
  double margin = 0.0, worst = 0.0;
  for (int i = 0; i < num; ++i) {
    margin = std::max(margin, std::abs(double(rows[i].rank - expected)));
    worst = std::max(worst, std::max(rows[i].ortho_astar, 0.0));
    st.report.details.push_back(DetailRecord{}
                                    .add("i", std::int64_t(i))
                                    .add("rank", std::int64_t(rows[i].rank))
                                    .add("sigma_max", rows[i].sigma_max)
                                    .add("ortho_astar", rows[i].ortho_astar)
                                    .add("ortho_pairing", rows[i].ortho_pairing));
  }
  st.report.margin = margin;
  st.report.max_residual = worst;
  st.report.pass = margin <= std::max(st.config.tolerance, 0.5);
}

void run_closed_loop(RunState st) {
  if (!st.fm.closed_loop_fn)
    throw SamplingError("model '" + st.fm.name +
                            "' provides no closed-loop generator",
                        0);
  Rng rng = Rng::derive(st.config.seed, 0x100bULL);
  const ChartPoint p = st.fm.metric.sample_fn(rng);
  const Mat id = Mat::Identity(st.fm.leaf_dim, st.fm.leaf_dim);
  double worst = 0.0;
  int found = 0;
  for (int index = 0; found < st.config.samples; ++index) {
    const auto loop = st.fm.closed_loop_fn(p, index);
    if (!loop) break;
    if (!(loop->closure_gap <= 1e-6)) continue;
    const HolonomyTransformation h = holonomy_transformation(st.fm, *loop);
    const double dev = abs_max(h.matrix - id);
    worst = std::max(worst, dev);
    st.report.details.push_back(DetailRecord{}
                                    .add("i", std::int64_t(found))
                                    .add("gap", loop->closure_gap)
                                    .add("h_dev", dev));
    ++found;
  }
  if (found == 0)
    throw SamplingError("no closed loops with acceptable gap were found", 0);
  st.report.num_samples = found;
  st.report.max_residual = worst;
  st.report.pass = worst <= st.config.tolerance;
}

void run_duality_suite(RunState st) {
  const int num = st.config.samples;
  struct Row {
    double pairing_drift = 0.0;
    double route_diff = 0.0;
    double verticality_drift = 0.0;
  };
  std::vector<Row> rows(num);
  parallel_for(num, [&](int i) {
    Rng rng = Rng::derive(st.config.seed, i);
    const ChartPoint p = st.fm.metric.sample_fn(rng);
    const HorizontalPath path =
        random_horizontal_path(st.fm, p, 3, 0.5, rng.next_u64());
    const TangentVector xi0 = random_vertical_unit(st.fm, p, rng);
    const TangentVector nu0 = random_vertical_unit(st.fm, p, rng);
    const TransportedField xi = transport_holonomy(st.fm, path, xi0);
    const TransportedField nu = transport_dual(st.fm, path, nu0);
    const TransportedField nu2 = transport_dual_via_frames(st.fm, path, nu0);
    const double pairing0 = inner(st.fm.metric, xi0, nu0);
    Row row;
    for (std::size_t t = 0; t < xi.samples.size(); ++t) {
      const double pairing =
          inner(st.fm.metric, xi.samples[t].second, nu.samples[t].second);
      row.pairing_drift = std::max(row.pairing_drift,
                                   std::abs(pairing - pairing0));
      row.route_diff = std::max(
          row.route_diff, (nu.samples[t].second.components -
                           nu2.samples[t].second.components)
                              .norm());
    }
    row.verticality_drift =
        std::max(xi.max_verticality_drift, nu.max_verticality_drift);
    rows[i] = row;
  });
  double worst = 0.0;
  for (int i = 0; i < num; ++i) {
    worst = std::max(worst, std::max(rows[i].pairing_drift,
                                     std::max(rows[i].route_diff,
                                              rows[i].verticality_drift)));
    st.report.details.push_back(
        DetailRecord{}
            .add("i", std::int64_t(i))
            .add("pairing_drift", rows[i].pairing_drift)
            .add("dual_route_diff", rows[i].route_diff)
            .add("verticality_drift", rows[i].verticality_drift));
  }
  st.report.max_residual = worst;
  st.report.pass = worst <= st.config.tolerance;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const FoliatedModel fm = make_model(config.model);

  ExperimentReport report;
  report.config = config;
  report.num_samples = config.samples;

  RunState st{config, fm, report};
  switch (config.kind) {
    case ExperimentKind::validate_model: run_validate_model(st); break;
    case ExperimentKind::gray_oneill: run_gray_oneill(st); break;
    case ExperimentKind::warped_curvature: run_warped_curvature(st); break;
    case ExperimentKind::fatness_scan: run_fatness_scan(st); break;
    case ExperimentKind::theorem_a: run_theorem_a(st); break;
    case ExperimentKind::thm_max: run_thm_max(st); break;
    case ExperimentKind::holonomy_bound: run_holonomy_bound(st); break;
    case ExperimentKind::dual_leaf: run_dual_leaf(st); break;
    case ExperimentKind::closed_loop: run_closed_loop(st); break;
    case ExperimentKind::duality_suite: run_duality_suite(st); break;
  }

  report.timing_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

}  // namespace folilab
