#ifndef FOLILAB_EXPERIMENT_HPP
#define FOLILAB_EXPERIMENT_HPP

#include "folilab/models.hpp"

#include <variant>

namespace folilab {

enum class ExperimentKind {
  validate_model,
  gray_oneill,
  warped_curvature,
  fatness_scan,
  theorem_a,
  thm_max,
  holonomy_bound,
  dual_leaf,
  closed_loop,
  duality_suite,
};

const char* to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from(const std::string& name);

struct ExperimentConfig {
  ModelSpec model;
  ExperimentKind kind = ExperimentKind::validate_model;
  int samples = 50;
  std::uint64_t seed = 1;
  double tolerance = 1e-6;
  std::string output_path;
};

using DetailValue = std::variant<double, std::int64_t, std::string>;

/// One per-sample record; field order is fixed per experiment kind and
/// becomes the CSV column order.
struct DetailRecord {
  std::vector<std::pair<std::string, DetailValue>> fields;
  DetailRecord& add(const std::string& key, double v);
  DetailRecord& add(const std::string& key, std::int64_t v);
  DetailRecord& add(const std::string& key, const std::string& v);
};

struct ExperimentReport {
  ExperimentConfig config;
  double timing_s = 0.0;
  int num_samples = 0;
  double max_residual = 0.0;
  double margin = 0.0;
  bool pass = false;
  std::vector<DetailRecord> details;
};

/// Parses an experiment configuration from JSON. Throws ConfigError on
/// malformed input or unrecognized values.
ExperimentConfig parse_config_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);

/// Runs the configured suite. Mathematical failures never throw: they land
/// in pass = false with residuals. Configuration and model errors propagate.
ExperimentReport run_experiment(const ExperimentConfig& config);

/// Report serialization: fixed top-level keys, 17-significant-digit floats,
/// byte-identical across runs with equal config (timing zeroed when
/// include_timing is false).
std::string report_to_json(const ExperimentReport& report, bool include_timing);
std::string report_to_csv(const ExperimentReport& report);

/// Writes the JSON document to `path` and a CSV sibling (same stem, ".csv").
void emit_report(const ExperimentReport& report, const std::string& path,
                 bool include_timing);

std::string list_models_json();

}  // namespace folilab

#endif
