// folilab command line: experiment runner over the shared library's C API.
//
// Exit codes: 0 when the experiment passed, 2 when it ran but failed its
// tolerance, 1 on configuration or I/O errors.

#include <folilab.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace {

int report_error(const char* context) {
  std::fprintf(stderr, "error: %s: %s\n", context, folilab_last_error());
  return 1;
}

/// Reads the emitted report back to print a one-line summary.
void print_summary(const std::string& path) {
  std::ifstream is(path);
  if (!is) return;
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    const auto j = nlohmann::json::parse(ss.str());
    std::printf("%s: %s  max_residual=%.3g  margin=%.3g  samples=%d  -> %s\n",
                j["config"]["experiment"].get<std::string>().c_str(),
                j["config"]["model"]["name"].get<std::string>().c_str(),
                j["max_residual"].get<double>(), j["margin"].get<double>(),
                j["num_samples"].get<int>(),
                j["pass"].get<bool>() ? "PASS" : "FAIL");
  } catch (...) {
    // Summary is best effort; the report file is the source of truth.
  }
}

int run_config(const std::string& config_json, const std::string& out_path,
               bool no_timing) {
  int pass = 0;
  const folilab_status rc = folilab_run_experiment_to_file(
      config_json.c_str(), out_path.empty() ? nullptr : out_path.c_str(),
      no_timing ? 0 : 1, &pass);
  if (rc != FOLILAB_OK) return report_error("run");
  std::string where = out_path;
  if (where.empty()) {
    try {
      where = nlohmann::json::parse(config_json)
                  .value("output_path", std::string());
    } catch (...) {
    }
  }
  if (!where.empty()) print_summary(where);
  return pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"folilab: numerical experiments on Riemannian foliations"};
  app.require_subcommand(1);

  auto* list_cmd =
      app.add_subcommand("list-models", "print the model catalog as JSON");

  std::string config_path;
  bool run_no_timing = false;
  auto* run_cmd =
      app.add_subcommand("run", "run an experiment from a JSON config file");
  run_cmd->add_option("config", config_path, "path to the config JSON")
      ->required();
  run_cmd->add_flag("--no-timing", run_no_timing,
                    "zero the timing field for reproducible diffs");

  std::string kind, model_name, out_path;
  std::vector<std::string> params;
  int samples = 50;
  std::uint64_t seed = 1;
  double tol = 1e-6;
  bool check_no_timing = false;
  auto* check_cmd = app.add_subcommand(
      "check", "synthesize a config for one experiment and run it");
  check_cmd->add_option("kind", kind, "experiment kind")->required();
  check_cmd->add_option("--model", model_name, "model name")->required();
  check_cmd
      ->add_option("--param", params,
                   "model parameter as name=value (repeatable)")
      ->take_all();
  check_cmd->add_option("--samples", samples, "sample or budget count");
  check_cmd->add_option("--seed", seed, "random seed");
  check_cmd->add_option("--tol", tol, "pass tolerance");
  check_cmd->add_option("--out", out_path, "report output path")->required();
  check_cmd->add_flag("--no-timing", check_no_timing,
                      "zero the timing field for reproducible diffs");

  CLI11_PARSE(app, argc, argv);

  if (list_cmd->parsed()) {
    char* json = nullptr;
    if (folilab_list_models(&json) != FOLILAB_OK)
      return report_error("list-models");
    std::printf("%s\n", json);
    folilab_string_free(json);
    return 0;
  }

  if (run_cmd->parsed()) {
    std::ifstream is(config_path);
    if (!is) {
      std::fprintf(stderr, "error: cannot read config file '%s'\n",
                   config_path.c_str());
      return 1;
    }
    std::stringstream ss;
    ss << is.rdbuf();
    return run_config(ss.str(), "", run_no_timing);
  }

  // check: build the config JSON from flags.
  nlohmann::json cfg;
  cfg["model"]["name"] = model_name;
  cfg["model"]["params"] = nlohmann::json::object();
  for (const auto& kv : params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --param expects name=value, got '%s'\n",
                   kv.c_str());
      return 1;
    }
    try {
      cfg["model"]["params"][kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    } catch (...) {
      std::fprintf(stderr, "error: --param value in '%s' is not a number\n",
                   kv.c_str());
      return 1;
    }
  }
  cfg["experiment"] = kind;
  cfg["samples"] = samples;
  cfg["seed"] = seed;
  cfg["tolerance"] = tol;
  cfg["output_path"] = out_path;
  return run_config(cfg.dump(), out_path, check_no_timing);
}
