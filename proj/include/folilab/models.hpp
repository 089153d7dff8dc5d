#ifndef FOLILAB_MODELS_HPP
#define FOLILAB_MODELS_HPP

#include "folilab/holonomy.hpp"

#include <map>

namespace folilab {

/// Parameters of a built-in model; this object is exactly what deserializes
/// from the CLI configuration.
struct ModelSpec {
  std::string name;  // flat_torus | hopf_s3 | hopf_warped | s3_x_s1
  std::map<std::string, double> params;

  double param_or(const std::string& key, double fallback) const;
};

struct ModelParamInfo {
  std::string name;
  double default_value = 0.0;
  double min_value = 0.0;
  double max_value = 0.0;
  std::string doc;
};

struct ModelCatalogEntry {
  std::string name;
  std::string description;
  std::vector<ModelParamInfo> params;
};

const std::vector<ModelCatalogEntry>& model_catalog();

/// Constructs a built-in foliated geometry. Throws ValidationError listing
/// the violated range for bad parameters.
FoliatedModel make_model(const ModelSpec& spec);

/// T^2 x S^3 with vertical = torus circle + Hopf fiber (leaf_dim 2). The
/// A-tensor only ever produces fiber directions, so the accumulated span
/// stays a strict subspace; used by orthogonality diagnostics and tests.
/// Not part of the ModelSpec catalog.
FoliatedModel degenerate_product_model(double epsilon = 1.0);

// -- Hopf-chart helpers (shared by loop shooting, warp families and tests) --

/// Stereographic S^3 chart -> ambient unit quaternion in R^4.
Vec hopf_embed(int chart_id, const Vec& u);
/// Jacobian of the embedding (4 x 3).
Mat hopf_embed_jacobian(int chart_id, const Vec& u);
/// Ambient -> preferred chart (the one whose coordinates stay small).
ChartPoint hopf_chart_point(const Vec& x);
/// The bundle projection q -> \bar q i q as a unit vector in R^3.
Vec hopf_base_point(const Vec& x);
/// The Hopf action field i q.
Vec hopf_fiber_direction(const Vec& x);
/// Height of the base point (third base coordinate).
double hopf_height(const Vec& x);

}  // namespace folilab

#endif
