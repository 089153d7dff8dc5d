#include "folilab/models.hpp"

#include <doctest.h>

using namespace folilab;

TEST_CASE("make_model: parameter validation") {
  CHECK_THROWS_AS(make_model({"nonsense", {}}), ValidationError);
  CHECK_THROWS_AS(make_model({"hopf_s3", {{"epsilon", -1.0}}}), ValidationError);
  CHECK_THROWS_AS(make_model({"hopf_s3", {{"epsilon", 2.5}}}), ValidationError);
  CHECK_THROWS_AS(make_model({"hopf_s3", {{"bogus", 1.0}}}), ValidationError);
  CHECK_THROWS_AS(make_model({"flat_torus", {{"n", 9}}}), ValidationError);
  CHECK_THROWS_AS(make_model({"flat_torus", {{"n", 3}, {"k", 3}}}),
                  ValidationError);
  CHECK_THROWS_AS(make_model({"hopf_warped", {{"phi_family", 7}}}),
                  ValidationError);
  CHECK_THROWS_AS(make_model({"s3_x_s1", {{"circle_radius", -2.0}}}),
                  ValidationError);
  // error text names the violated range
  try {
    make_model({"hopf_s3", {{"epsilon", 2.5}}});
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("epsilon") != std::string::npos);
  }
}

TEST_CASE("model_catalog lists the four built-ins") {
  const auto& catalog = model_catalog();
  REQUIRE(catalog.size() == 4);
  CHECK(catalog[0].name == "flat_torus");
  CHECK(catalog[1].name == "hopf_s3");
  CHECK(catalog[2].name == "hopf_warped");
  CHECK(catalog[3].name == "s3_x_s1");
}

TEST_CASE("flat_torus: every tensor vanishes") {
  const FoliatedModel t = make_model({"flat_torus", {{"n", 4}, {"k", 2}}});
  CHECK(t.dimension() == 4);
  CHECK(t.leaf_dim == 2);
  Rng rng(61);
  const ChartPoint p = t.metric.sample_fn(rng);
  const TangentVector x = random_horizontal_unit(t, p, rng);
  const TangentVector y = random_horizontal_unit(t, p, rng);
  const TangentVector xi = random_vertical_unit(t, p, rng);
  CHECK(norm(t.metric, a_tensor(t, x, y)) <= 1e-12);
  CHECK(norm(t.metric, s_tensor(t, x, xi)) <= 1e-12);
  CHECK(std::abs(unreduced_sectional(t.metric, x, y)) <= 1e-12);
}

TEST_CASE("hopf_s3: round sphere symmetries") {
  const FoliatedModel h = make_model({"hopf_s3", {{"epsilon", 1.0}}});
  Rng rng(62);
  for (int i = 0; i < 20; ++i) {
    const ChartPoint p = h.metric.sample_fn(rng);
    const TangentVector x = random_horizontal_unit(h, p, rng);
    const TangentVector xi = random_vertical_unit(h, p, rng);
    CHECK(norm(h.metric, s_tensor(h, x, xi)) <= 1e-7);
    CHECK(unreduced_sectional(h.metric, x, xi) ==
          doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("hopf_warped: the height family is basic") {
  const FoliatedModel w =
      make_model({"hopf_warped", {{"phi_family", 1}, {"lambda", 0.3}}});
  REQUIRE(w.warp != nullptr);
  CHECK(w.warp->family == "height");
  Rng rng(63);
  for (int i = 0; i < 100; ++i) {
    const ChartPoint p = w.metric.sample_fn(rng);
    const Vec d = w.warp->dphi(p);
    const Mat frame = w.vertical_frame_fn(p);
    CHECK(std::abs(d.dot(frame.col(0))) <= 1e-9);
    // analytic differential matches finite differences of phi
    const double h = 1e-5;
    for (int a = 0; a < 3; ++a) {
      ChartPoint q1 = p, q2 = p;
      q1.coords(a) += h;
      q2.coords(a) -= h;
      const double fd = (w.warp->phi(q1) - w.warp->phi(q2)) / (2 * h);
      CHECK(std::abs(fd - d(a)) <= 1e-8);
    }
  }
}

TEST_CASE("hopf_warped: lambda = 0 reproduces hopf_s3 bit for bit") {
  const FoliatedModel base = make_model({"hopf_s3", {{"epsilon", 0.9}}});
  const FoliatedModel flat = make_model(
      {"hopf_warped", {{"epsilon", 0.9}, {"phi_family", 1}, {"lambda", 0.0}}});
  Rng rng(64);
  for (int i = 0; i < 10; ++i) {
    const ChartPoint p = base.metric.sample_fn(rng);
    const Mat a = metric_eval(base.metric, p);
    const Mat b = metric_eval(flat.metric, p);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("hopf helpers: embedding, charts and the bundle projection") {
  Rng rng(65);
  for (int i = 0; i < 20; ++i) {
    const Vec x = rng.unit_vec(4);
    const ChartPoint p = hopf_chart_point(x);
    CHECK(p.coords.norm() <= 1.0 + 1e-12);
    const Vec back = hopf_embed(p.chart_id, p.coords);
    CHECK((back - x).norm() <= 1e-12);
    // projection lands on the unit sphere and is fiber invariant
    const Vec n = hopf_base_point(x);
    CHECK(std::abs(n.norm() - 1.0) <= 1e-12);
    const Vec fiber = hopf_fiber_direction(x);
    CHECK(std::abs(fiber.dot(x)) <= 1e-12);
    const double theta = rng.uniform(0, 2 * M_PI);
    Vec rotated(4);
    rotated << std::cos(theta) * x(0) - std::sin(theta) * x(1),
        std::cos(theta) * x(1) + std::sin(theta) * x(0),
        std::cos(theta) * x(2) - std::sin(theta) * x(3),
        std::cos(theta) * x(3) + std::sin(theta) * x(2);
    CHECK((hopf_base_point(rotated) - n).norm() <= 1e-12);
    CHECK(std::abs(hopf_height(x) - n(2)) <= 1e-12);
  }
}

TEST_CASE("s3_x_s1: product structure") {
  const FoliatedModel m =
      make_model({"s3_x_s1", {{"epsilon", 1.0}, {"circle_radius", 2.0}}});
  CHECK(m.dimension() == 4);
  CHECK(m.leaf_dim == 1);
  Rng rng(66);
  const ChartPoint p = m.metric.sample_fn(rng);
  const Mat g = metric_eval(m.metric, p);
  CHECK(g(3, 3) == doctest::Approx(4.0));  // radius^2
  CHECK(g.row(3).head(3).norm() <= 1e-14);
  // the circle direction is flat against the fiber
  Vec circle = Vec::Zero(4);
  circle(3) = 0.5;
  const Mat f = orthonormal_vertical_frame(m, p);
  CHECK(std::abs(unreduced_sectional(m.metric, {p, circle}, {p, f.col(0)})) <=
        1e-8);
}

TEST_CASE("closed loops: shooting yields loops with trivial holonomy") {
  const FoliatedModel h = make_model({"hopf_s3", {{"epsilon", 0.9}}});
  Rng rng(67);
  const ChartPoint p = h.metric.sample_fn(rng);
  REQUIRE(h.closed_loop_fn != nullptr);
  int found = 0;
  for (int index = 0; index < 3; ++index) {
    const auto loop = h.closed_loop_fn(p, index);
    REQUIRE(loop != nullptr);
    CHECK(loop->closed);
    CHECK(loop->closure_gap <= 1e-6);
    CHECK(loop->max_horizontality_drift <= 1e-7);
    CHECK(chart_distance(h.metric, loop->front().point, p) <= 1e-12);
    const HolonomyTransformation ht = holonomy_transformation(h, *loop);
    CHECK(std::abs(ht.matrix(0, 0) - 1.0) <= 1e-6);
    // field-level form: the transported field returns to its initial data
    // (compared in the start chart when the loop ends in the other one)
    Rng vrng(index);
    const TangentVector xi0 = random_vertical_unit(h, p, vrng);
    const TransportedField xi = transport_holonomy(h, *loop, xi0);
    Vec end_components = xi.endpoint().components;
    if (xi.endpoint().base.chart_id != p.chart_id) {
      const auto mapped =
          to_chart(h.metric, xi.endpoint().base, p.chart_id);
      REQUIRE(mapped.has_value());
      end_components = mapped->second * end_components;
    }
    CHECK((end_components - xi0.components).norm() <= 1e-6);
    ++found;
  }
  CHECK(found == 3);
}

TEST_CASE("degenerate product: vertical splits into torus and fiber parts") {
  const FoliatedModel d = degenerate_product_model();
  CHECK(d.dimension() == 5);
  CHECK(d.leaf_dim == 2);
  Rng rng(68);
  const ChartPoint p = d.metric.sample_fn(rng);
  const Projectors pr = projectors(d, p);
  CHECK(std::abs(pr.Pv.trace() - 2.0) <= 1e-10);
  // torus circle direction is vertical, torus second direction horizontal
  Vec e0 = Vec::Zero(5), e1 = Vec::Zero(5);
  e0(0) = 1.0;
  e1(1) = 1.0;
  CHECK((pr.Pv * e0 - e0).norm() <= 1e-12);
  CHECK((pr.Ph * e1 - e1).norm() <= 1e-12);
}

TEST_CASE("every model passes the geometry validity sweep") {
  std::vector<FoliatedModel> models;
  for (const ModelSpec& spec : {ModelSpec{"flat_torus", {}},
                                ModelSpec{"hopf_s3", {{"epsilon", 0.8}}},
                                ModelSpec{"hopf_warped", {{"lambda", 0.3}}},
                                ModelSpec{"s3_x_s1", {}}}) {
    models.push_back(make_model(spec));
  }
  models.push_back(degenerate_product_model());
  for (const auto& fm : models) {
    Rng rng(69);
    for (int i = 0; i < 25; ++i) {
      const ChartPoint p = fm.metric.sample_fn(rng);
      const Mat g = metric_eval(fm.metric, p);
      CHECK((g - g.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
      Eigen::SelfAdjointEigenSolver<Mat> eig(g);
      CHECK(eig.eigenvalues().minCoeff() > 0.0);
      // transition compatibility wherever the point is visible twice
      for (const auto& tr : fm.metric.transitions) {
        if (tr.from != p.chart_id) continue;
        const auto mapped = to_chart(fm.metric, p, tr.to);
        if (!mapped) continue;
        const Mat pulled = mapped->second.transpose() *
                           metric_eval(fm.metric, mapped->first) *
                           mapped->second;
        CHECK((pulled - g).cwiseAbs().maxCoeff() <= 1e-8);
      }
    }
  }
}
