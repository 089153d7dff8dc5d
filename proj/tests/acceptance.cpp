// Acceptance suite: runs every acceptance criterion at its stated budget and
// tolerance and prints one pass/fail line per criterion. Exit code is the
// number of failed criteria.

#include "folilab/experiment.hpp"

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

using namespace folilab;

namespace {

int g_failures = 0;

void run_criterion(int id, const std::string& title,
                   const std::function<std::pair<bool, std::string>()>& body) {
  const auto start = std::chrono::steady_clock::now();
  bool ok = false;
  std::string detail;
  try {
    std::tie(ok, detail) = body();
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("exception: ") + e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  if (!ok) ++g_failures;
  std::printf("[%s] criterion %2d: %s — %s (%.1fs)\n", ok ? "PASS" : "FAIL",
              id, title.c_str(), detail.c_str(), secs);
  std::fflush(stdout);
}

ExperimentReport run_kind(const ModelSpec& model, ExperimentKind kind,
                          int samples, std::uint64_t seed, double tol) {
  ExperimentConfig config;
  config.model = model;
  config.kind = kind;
  config.samples = samples;
  config.seed = seed;
  config.tolerance = tol;
  return run_experiment(config);
}

double detail_value(const DetailRecord& rec, const std::string& key) {
  for (const auto& [name, value] : rec.fields) {
    if (name != key) continue;
    if (std::holds_alternative<double>(value)) return std::get<double>(value);
    if (std::holds_alternative<std::int64_t>(value))
      return static_cast<double>(std::get<std::int64_t>(value));
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return std::string(buf);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const std::vector<ModelSpec>& all_models() {
  static const std::vector<ModelSpec> models = {
      {"flat_torus", {}},
      {"hopf_s3", {{"epsilon", 1.0}}},
      {"hopf_warped", {{"epsilon", 1.0}, {"phi_family", 1}, {"lambda", 0.3}}},
      {"s3_x_s1", {}},
  };
  return models;
}

// -- criteria -----------------------------------------------------------------

std::pair<bool, std::string> criterion_1() {
  double worst_overlap = 0.0, worst_idem = 0.0, worst_spd = 0.0;
  for (const auto& spec : all_models()) {
    const ExperimentReport report =
        run_kind(spec, ExperimentKind::validate_model, 200, 11, 1e-8);
    for (const auto& rec : report.details) {
      worst_spd = std::max(worst_spd, detail_value(rec, "metric_spd_violation"));
      worst_idem = std::max(worst_idem, detail_value(rec, "projector_idem"));
      worst_overlap = std::max(worst_overlap, detail_value(rec, "chart_overlap"));
    }
  }
  const bool ok =
      worst_spd == 0.0 && worst_idem <= 1e-10 && worst_overlap <= 1e-8;
  return {ok, "spd violation " + fmt(worst_spd) + ", projector idem " +
                  fmt(worst_idem) + " (tol 1e-10), overlap " +
                  fmt(worst_overlap) + " (tol 1e-8), 200 points x 4 models"};
}

std::pair<bool, std::string> criterion_2() {
  const FoliatedModel t = make_model({"flat_torus", {}});
  Rng rng(23);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const ChartPoint p = t.metric.sample_fn(rng);
    const TangentVector x = random_horizontal_unit(t, p, rng);
    const TangentVector y = random_horizontal_unit(t, p, rng);
    const TangentVector xi = random_vertical_unit(t, p, rng);
    worst = std::max(worst, norm(t.metric, a_tensor(t, x, y)));
    worst = std::max(worst, norm(t.metric, s_tensor(t, x, xi)));
    worst = std::max(worst,
                     riemann(t.metric, p, x, y, xi).components.norm());
  }
  const ChartPoint p0 = t.metric.sample_fn(rng);
  const double bound = holonomy_bound_estimate(t, p0, 200, 3, 0.5, 5);
  const double bound_dev = std::abs(bound - 1.0);
  const bool ok = worst <= 1e-10 && bound_dev <= 1e-9;
  return {ok, "tensor residual " + fmt(worst) + " (tol 1e-10), bound dev " +
                  fmt(bound_dev) + " (tol 1e-9)"};
}

std::pair<bool, std::string> criterion_3() {
  const std::vector<ModelSpec> specs = {
      {"hopf_s3", {{"epsilon", 1.0}}},
      {"hopf_s3", {{"epsilon", 0.8}}},
      {"s3_x_s1", {}},
  };
  double worst = 0.0;
  for (const auto& spec : specs) {
    const ExperimentReport report =
        run_kind(spec, ExperimentKind::gray_oneill, 100, 17, 1e-5);
    worst = std::max(worst, report.max_residual);
    if (!report.pass) return {false, "relative residual " + fmt(worst)};
  }
  return {worst <= 1e-5,
          "both identity forms, 100 geodesics x 3 models, relative residual " +
              fmt(worst) + " (tol 1e-5)"};
}

std::pair<bool, std::string> criterion_4() {
  const ExperimentReport constant = run_kind(
      {"hopf_warped", {{"epsilon", 1.0}, {"phi_family", 0}, {"lambda", -0.22}}},
      ExperimentKind::warped_curvature, 100, 19, 1e-5);
  const ExperimentReport height = run_kind(
      {"hopf_warped", {{"epsilon", 1.0}, {"phi_family", 1}, {"lambda", 0.3}}},
      ExperimentKind::warped_curvature, 100, 19, 1e-4);
  double consistent = 0.0;
  for (const auto& rec : height.details) {
    consistent = std::max(consistent, detail_value(rec, "residual_consistent"));
  }
  const bool ok = constant.pass && height.pass;
  return {ok, "constant-warp residual " + fmt(constant.max_residual) +
                  " (tol 1e-5); minimum-point residual with coefficient 1/2: " +
                  fmt(height.max_residual) + " (tol 1e-4), with warp-consistent "
                  "coefficient e^{2 phi}: " + fmt(consistent)};
}

std::pair<bool, std::string> criterion_5() {
  const FoliatedModel w = make_model(
      {"hopf_warped", {{"epsilon", 1.0}, {"phi_family", 1}, {"lambda", 0.3}}});
  const FoliatedModel& base = *w.warp->base;
  double law = 0.0, coincide = 0.0;
  for (int i = 0; i < 50; ++i) {
    Rng rng = Rng::derive(29, i);
    const ChartPoint p = w.metric.sample_fn(rng);
    const HorizontalPath path =
        random_horizontal_path(w, p, 2, 0.5, rng.next_u64());
    // the S law at sampled nodes of the path
    for (int node : {0, path.transport_steps() / 2, path.transport_steps()}) {
      const GeodesicSample& s = path.samples[2 * node];
      OneillPoint ctx(w, s.point);
      const Mat f = orthonormal_vertical_frame(w, s.point);
      const TangentVector xi{s.point, f.col(0)};
      const TangentVector eta{s.point, f.col(0)};
      const TangentVector sv = s_tensor(w, {s.point, s.velocity}, xi);
      const double lhs = inner(w.metric, sv, eta);
      const double rhs = -w.warp->dphi(s.point).dot(s.velocity) *
                         inner(w.metric, xi, eta);
      law = std::max(law, std::abs(lhs - rhs));
    }
    // holonomy fields of g_0 and g_phi coincide along the same path
    const TangentVector xi0 = random_vertical_unit(w, p, rng);
    const TransportedField warped = transport_holonomy(w, path, xi0);
    const TransportedField unwarped = transport_holonomy(base, path, xi0);
    for (std::size_t t = 0; t < warped.samples.size(); ++t) {
      coincide = std::max(coincide, (warped.samples[t].second.components -
                                     unwarped.samples[t].second.components)
                                        .norm());
    }
  }
  const bool ok = law <= 1e-6 && coincide <= 1e-7;
  return {ok, "S law residual " + fmt(law) + " (tol 1e-6), transport "
              "coincidence " + fmt(coincide) + " (tol 1e-7), 50 paths"};
}

std::pair<bool, std::string> criterion_6() {
  double pairing = 0.0, route = 0.0, vertical = 0.0;
  for (const auto& spec : all_models()) {
    const ExperimentReport report =
        run_kind(spec, ExperimentKind::duality_suite, 100, 31, 1e-7);
    for (const auto& rec : report.details) {
      pairing = std::max(pairing, detail_value(rec, "pairing_drift"));
      route = std::max(route, detail_value(rec, "dual_route_diff"));
      vertical = std::max(vertical, detail_value(rec, "verticality_drift"));
    }
  }
  const bool ok = pairing <= 1e-8 && route <= 1e-7 && vertical <= 1e-8;
  return {ok, "pairing drift " + fmt(pairing) + " (tol 1e-8), route diff " +
                  fmt(route) + " (tol 1e-7), verticality " + fmt(vertical) +
                  " (tol 1e-8), 100 paths x 4 models"};
}

std::pair<bool, std::string> criterion_7() {
  double worst = 0.0;
  for (const auto& spec : all_models()) {
    const FoliatedModel fm = make_model(spec);
    for (int i = 0; i < 50; ++i) {
      Rng rng = Rng::derive(37 + i, i);
      const ChartPoint p = fm.metric.sample_fn(rng);
      const HorizontalPath c1 =
          random_horizontal_path(fm, p, 2, 0.4, rng.next_u64());
      const HorizontalPath c2 = random_horizontal_path(
          fm, c1.back().point, 2, 0.4, rng.next_u64());
      const HolonomyTransformation h1 = holonomy_transformation(fm, c1);
      const HolonomyTransformation h2 = holonomy_transformation(fm, c2);
      const Mat id = Mat::Identity(fm.leaf_dim, fm.leaf_dim);

      const Mat cat =
          holonomy_transformation(fm, concatenate(fm, c1, c2)).matrix;
      worst = std::max(worst,
                       (cat - compose(fm, h2, h1).matrix).cwiseAbs().maxCoeff());
      worst = std::max(
          worst,
          (compose(fm, invert(fm, h1), h1).matrix - id).cwiseAbs().maxCoeff());
      worst = std::max(worst,
                       (holonomy_transformation(fm, reverse_path(fm, c1)).matrix -
                        invert(fm, h1).matrix)
                           .cwiseAbs()
                           .maxCoeff());
      if (i % 10 == 0) {
        const HorizontalPath repar = rebuild_path(fm, c1, 1.7, 96);
        worst = std::max(worst,
                         (holonomy_transformation(fm, repar).matrix - h1.matrix)
                             .cwiseAbs()
                             .maxCoeff());
      }
    }
  }
  return {worst <= 1e-7, "composition/inversion/concatenation/"
                         "reparametrization residual " +
                             fmt(worst) + " (tol 1e-7), 50 pairs x 4 models"};
}

std::pair<bool, std::string> criterion_8() {
  const ExperimentReport report =
      run_kind({"hopf_s3", {{"epsilon", 1.0}}}, ExperimentKind::closed_loop,
               10, 41, 1e-5);
  double gap = 0.0;
  for (const auto& rec : report.details)
    gap = std::max(gap, detail_value(rec, "gap"));
  const bool ok =
      report.pass && report.num_samples >= 10 && gap <= 1e-6;
  return {ok, std::to_string(report.num_samples) +
                  " loops, max closure gap " + fmt(gap) +
                  " (tol 1e-6), max |h - 1| " + fmt(report.max_residual) +
                  " (tol 1e-5)"};
}

std::pair<bool, std::string> criterion_9() {
  const ExperimentReport report = run_kind(
      {"s3_x_s1", {}}, ExperimentKind::theorem_a, 20, 43, 1e-6);
  double astar = 0.0, curvature = 0.0;
  for (const auto& rec : report.details) {
    astar = std::max(astar, detail_value(rec, "astar_norm"));
    curvature = std::max(curvature, detail_value(rec, "K"));
  }
  const bool ok = astar <= 1e-6 && curvature <= 1e-8;
  return {ok, "20 points: |A* X nu| " + fmt(astar) +
                  " (tol 1e-6), K of the found plane " + fmt(curvature) +
                  " (tol 1e-8)"};
}

std::pair<bool, std::string> criterion_10() {
  const ExperimentReport fat = run_kind(
      {"hopf_s3", {{"epsilon", 1.0}}}, ExperimentKind::fatness_scan, 50, 47,
      0.05);
  double unfat = 0.0;
  for (const ModelSpec& spec :
       std::initializer_list<ModelSpec>{{"s3_x_s1", {}}, {"flat_torus", {}}}) {
    const ExperimentReport report =
        run_kind(spec, ExperimentKind::fatness_scan, 50, 47, 1e-8);
    if (!report.pass) return {false, spec.name + " reported a fat point"};
    unfat = std::max(unfat, report.margin);
  }
  const bool ok = fat.pass && fat.margin > 0.05 && unfat <= 1e-8;
  return {ok, "hopf_s3 min margin " + fmt(fat.margin) +
              " (> 0.05), s3_x_s1/flat_torus max margin " + fmt(unfat) +
              " (tol 1e-8), 50 points each"};
}

std::pair<bool, std::string> criterion_11() {
  const ExperimentReport flat = run_kind(
      {"flat_torus", {}}, ExperimentKind::thm_max, 1000, 53, 1e-8);
  if (!flat.pass)
    return {false, "flat torus margin " + fmt(flat.margin) + " above 1e-8"};

  const ExperimentReport hopf = run_kind(
      {"hopf_s3", {{"epsilon", 1.0}}}, ExperimentKind::thm_max, 10000, 53,
      1e-4);
  if (!hopf.pass)
    return {false, "hopf_s3 margin " + fmt(hopf.margin) +
                       " above 1e-4 at budget 10^4"};

  // Medians over 5 seeds must not increase with the budget (tolerance slack).
  const ModelSpec warped{
      "hopf_warped", {{"epsilon", 1.0}, {"phi_family", 1}, {"lambda", 0.3}}};
  const FoliatedModel fm = make_model(warped);
  const std::vector<int> budgets = {250, 1000, 4000};
  std::vector<double> medians;
  for (int budget : budgets) {
    std::vector<double> margins;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng = Rng::derive(59, seed);
      const ChartPoint p = fm.metric.sample_fn(rng);
      const TangentVector nu0{p, orthonormal_vertical_frame(fm, p).col(0)};
      margins.push_back(
          thm_max_search(fm, p, nu0, budget, seed).worst_margin);
    }
    medians.push_back(median(margins));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < medians.size(); ++i) {
    if (medians[i] > medians[i - 1] + 1e-6) monotone = false;
  }
  return {monotone, "flat margin " + fmt(flat.margin) +
                        " (tol 1e-8), hopf margin " + fmt(hopf.margin) +
                        " (tol 1e-4, budget 1e4), warped medians " +
                        fmt(medians[0]) + " >= " + fmt(medians[1]) +
                        " >= " + fmt(medians[2])};
}

std::pair<bool, std::string> criterion_12() {
  std::string detail;
  for (const auto& [name, expected] :
       std::vector<std::pair<std::string, int>>{
           {"hopf_s3", 1}, {"s3_x_s1", 1}, {"flat_torus", 0}}) {
    const FoliatedModel fm = make_model({name, {}});
    for (int i = 0; i < 10; ++i) {
      Rng rng = Rng::derive(61, i);
      const ChartPoint p = fm.metric.sample_fn(rng);
      const TangentVector x = random_horizontal_unit(fm, p, rng);
      const HorizontalPath path = horizontal_geodesic(fm, x, 1.5, 512);
      const int rank = dual_leaf_span(fm, path, 12).rank();
      if (rank != expected)
        return {false, name + ": rank " + std::to_string(rank) +
                           " instead of " + std::to_string(expected)};
    }
  }
  // Lemma 6.2 on the degenerate product model.
  const FoliatedModel d = degenerate_product_model();
  double residual = 0.0;
  for (int i = 0; i < 5; ++i) {
    Rng rng = Rng::derive(67, i);
    const ChartPoint p = d.metric.sample_fn(rng);
    const TangentVector x = random_horizontal_unit(d, p, rng);
    const HorizontalPath path = horizontal_geodesic(d, x, 1.2, 512);
    const SpanAccumulator span = dual_leaf_span(d, path, 12);
    const DualOrthogonalityResult ortho =
        dual_orthogonality_check(d, path, span);
    if (!ortho.applicable)
      return {false, "degenerate product span unexpectedly full"};
    residual = std::max(
        residual, std::max(ortho.max_astar_residual, ortho.max_pairing_residual));
  }
  return {residual <= 1e-6,
          "ranks match on all models; orthogonality residual " + fmt(residual) +
              " (tol 1e-6)"};
}

std::pair<bool, std::string> criterion_13() {
  const ExperimentReport report = run_kind(
      {"hopf_s3", {{"epsilon", 1.0}}}, ExperimentKind::holonomy_bound, 1000,
      71, 1e-3);
  const double bound_dev = std::abs(report.margin - 1.0);
  const bool ok = bound_dev <= 1e-6 && report.pass;
  return {ok, "estimate dev " + fmt(bound_dev) +
                  " (tol 1e-6, budget 1e3), rho containment violation " +
                  fmt(report.max_residual) + " (slack 1e-3)"};
}

std::pair<bool, std::string> criterion_14() {
  // In-process: equal config implies byte-identical serialized reports.
  ExperimentConfig config;
  config.model = {"hopf_s3", {{"epsilon", 0.8}}};
  config.kind = ExperimentKind::duality_suite;
  config.samples = 10;
  config.seed = 73;
  config.tolerance = 1e-7;
  const std::string a = report_to_json(run_experiment(config), false);
  const std::string b = report_to_json(run_experiment(config), false);
  if (a != b) return {false, "in-process reports differ"};

  // End to end through the CLI binary: repeat the identical invocation
  // (equal config includes the output path, which is echoed in the report).
  const auto dir = std::filesystem::temp_directory_path() / "folilab_accept";
  std::filesystem::create_directories(dir);
  const std::string out = (dir / "repeat.json").string();
  auto run_cli = [&]() {
    const std::string cmd =
        std::string(FOLILAB_CLI_PATH) +
        " check duality_suite --model hopf_s3 --param epsilon=0.8"
        " --samples 5 --seed 3 --tol 1e-7 --no-timing --out " +
        out + " > /dev/null";
    return std::system(cmd.c_str());
  };
  auto slurp = [](const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  if (run_cli() != 0) return {false, "CLI run failed"};
  const std::string f1 = slurp(out);
  if (run_cli() != 0) return {false, "CLI run failed"};
  const std::string f2 = slurp(out);
  std::filesystem::remove_all(dir);
  if (f1.empty() || f1 != f2) return {false, "CLI reports differ"};
  return {true, "library and CLI reports byte-identical across repeats"};
}

}  // namespace

int main() {
  std::printf("folilab acceptance suite\n");
  run_criterion(1, "model validity (SPD, overlaps, projectors)", criterion_1);
  run_criterion(2, "flat-torus ground truth", criterion_2);
  run_criterion(3, "vertizontal curvature identities", criterion_3);
  run_criterion(4, "warped curvature law", criterion_4);
  run_criterion(5, "warped shape-operator law and transport coincidence",
                criterion_5);
  run_criterion(6, "duality suite", criterion_6);
  run_criterion(7, "groupoid laws", criterion_7);
  run_criterion(8, "closed-loop triviality on the principal bundle",
                criterion_8);
  run_criterion(9, "nonpositive plane on the odd-codimension product",
                criterion_9);
  run_criterion(10, "fat point margins", criterion_10);
  run_criterion(11, "rho-supremum search margins", criterion_11);
  run_criterion(12, "dual-leaf spans and orthogonality", criterion_12);
  run_criterion(13, "bounded holonomy estimates", criterion_13);
  run_criterion(14, "report determinism", criterion_14);
  if (g_failures == 0) {
    std::printf("all criteria passed\n");
  } else {
    std::printf("%d criteria failed\n", g_failures);
  }
  return g_failures;
}
