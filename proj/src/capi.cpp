#include "folilab.h"

#include "folilab/experiment.hpp"

#include <json.hpp>

#include <cstdlib>
#include <cstring>

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

folilab_status fail(folilab_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

/// Runs fn, translating the library's exception taxonomy into status codes.
template <typename Fn>
folilab_status guarded(Fn&& fn) {
  using namespace folilab;
  try {
    fn();
    return FOLILAB_OK;
  } catch (const ConfigError& e) {
    return fail(FOLILAB_ERR_CONFIG, e.what());
  } catch (const ValidationError& e) {
    return fail(FOLILAB_ERR_CONFIG, e.what());
  } catch (const DomainError& e) {
    return fail(FOLILAB_ERR_DOMAIN, e.what());
  } catch (const ArgumentError& e) {
    return fail(FOLILAB_ERR_ARGUMENT, e.what());
  } catch (const DegeneracyError& e) {
    return fail(FOLILAB_ERR_NUMERIC, e.what());
  } catch (const ConditioningError& e) {
    return fail(FOLILAB_ERR_NUMERIC, e.what());
  } catch (const NoKernelError& e) {
    return fail(FOLILAB_ERR_NUMERIC, e.what());
  } catch (const SamplingError& e) {
    return fail(FOLILAB_ERR_SAMPLING, e.what());
  } catch (const TransportError& e) {
    return fail(FOLILAB_ERR_MODEL, e.what());
  } catch (const IntegrationError& e) {
    return fail(FOLILAB_ERR_MODEL, e.what());
  } catch (const ModelConsistencyError& e) {
    return fail(FOLILAB_ERR_MODEL, e.what());
  } catch (const GroupoidError& e) {
    return fail(FOLILAB_ERR_ARGUMENT, e.what());
  } catch (const Error& e) {
    return fail(FOLILAB_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(FOLILAB_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(FOLILAB_ERR_INTERNAL, "unknown error");
  }
}

folilab::ModelSpec parse_spec(const char* spec_json) {
  if (!spec_json) throw folilab::ConfigError("model spec JSON is null");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(spec_json);
  } catch (const nlohmann::json::exception& e) {
    throw folilab::ConfigError(std::string("model spec is not valid JSON: ") +
                               e.what());
  }
  folilab::ModelSpec spec;
  spec.name = j.value("name", std::string());
  if (spec.name.empty())
    throw folilab::ConfigError("model spec: name is required");
  if (j.contains("params")) {
    for (const auto& [key, value] : j["params"].items()) {
      if (!value.is_number())
        throw folilab::ConfigError("model spec: parameter '" + key +
                                   "' must be a number");
      spec.params[key] = value.get<double>();
    }
  }
  return spec;
}

}  // namespace

struct folilab_model {
  folilab::FoliatedModel fm;
  folilab::ModelSpec spec;
};

extern "C" {

const char* folilab_version(void) { return "folilab 1.0.0"; }

const char* folilab_last_error(void) { return g_last_error.c_str(); }

folilab_status folilab_list_models(char** json_out) {
  if (!json_out) return fail(FOLILAB_ERR_ARGUMENT, "json_out is null");
  return guarded([&] { *json_out = dup_string(folilab::list_models_json()); });
}

folilab_status folilab_model_create(const char* spec_json,
                                    folilab_model** out) {
  if (!out) return fail(FOLILAB_ERR_ARGUMENT, "out is null");
  *out = nullptr;
  return guarded([&] {
    auto spec = parse_spec(spec_json);
    auto* handle = new folilab_model{folilab::make_model(spec), spec};
    *out = handle;
  });
}

void folilab_model_destroy(folilab_model* model) { delete model; }

folilab_status folilab_model_info(const folilab_model* model,
                                  char** json_out) {
  if (!model) return fail(FOLILAB_ERR_ARGUMENT, "model is null");
  if (!json_out) return fail(FOLILAB_ERR_ARGUMENT, "json_out is null");
  return guarded([&] {
    const auto& fm = model->fm;
    std::string info = "{\"name\":\"" + fm.name + "\"";
    info += ",\"dimension\":" + std::to_string(fm.dimension());
    info += ",\"leaf_dim\":" + std::to_string(fm.leaf_dim);
    info += ",\"horizontal_dim\":" + std::to_string(fm.horizontal_dim());
    info += ",\"num_charts\":" + std::to_string(fm.metric.charts.size());
    info += std::string(",\"totally_geodesic\":") +
            (fm.totally_geodesic_claimed ? "true" : "false");
    info += "}";
    *json_out = dup_string(info);
  });
}

folilab_status folilab_run_experiment(const char* config_json,
                                      int include_timing,
                                      char** report_json_out) {
  if (!report_json_out)
    return fail(FOLILAB_ERR_ARGUMENT, "report_json_out is null");
  if (!config_json) return fail(FOLILAB_ERR_ARGUMENT, "config_json is null");
  return guarded([&] {
    const auto config = folilab::parse_config_json(config_json);
    const auto report = folilab::run_experiment(config);
    *report_json_out =
        dup_string(folilab::report_to_json(report, include_timing != 0));
  });
}

folilab_status folilab_run_experiment_to_file(const char* config_json,
                                              const char* path,
                                              int include_timing,
                                              int* pass_out) {
  if (!config_json) return fail(FOLILAB_ERR_ARGUMENT, "config_json is null");
  return guarded([&] {
    const auto config = folilab::parse_config_json(config_json);
    const std::string out_path =
        path ? std::string(path) : config.output_path;
    if (out_path.empty())
      throw folilab::ConfigError(
          "no output path given (neither argument nor config output_path)");
    const auto report = folilab::run_experiment(config);
    folilab::emit_report(report, out_path, include_timing != 0);
    if (pass_out) *pass_out = report.pass ? 1 : 0;
  });
}

void folilab_string_free(char* s) { std::free(s); }

}  // extern "C"
