#include <folilab.h>

#include <json.hpp>

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

std::string take(char* s) {
  REQUIRE(s != nullptr);
  std::string out(s);
  folilab_string_free(s);
  return out;
}

}  // namespace

TEST_CASE("capi: version and model catalog") {
  CHECK(std::string(folilab_version()).find("folilab") == 0);
  char* json = nullptr;
  REQUIRE(folilab_list_models(&json) == FOLILAB_OK);
  const auto parsed = nlohmann::json::parse(take(json));
  CHECK(parsed["models"].size() == 4);
}

TEST_CASE("capi: model lifecycle and info") {
  folilab_model* model = nullptr;
  REQUIRE(folilab_model_create(R"({"name":"s3_x_s1"})", &model) == FOLILAB_OK);
  REQUIRE(model != nullptr);
  char* info_json = nullptr;
  REQUIRE(folilab_model_info(model, &info_json) == FOLILAB_OK);
  const auto info = nlohmann::json::parse(take(info_json));
  CHECK(info["dimension"] == 4);
  CHECK(info["leaf_dim"] == 1);
  CHECK(info["horizontal_dim"] == 3);
  CHECK(info["num_charts"] == 2);
  folilab_model_destroy(model);
}

TEST_CASE("capi: error taxonomy and messages") {
  folilab_model* model = nullptr;
  CHECK(folilab_model_create("not json", &model) == FOLILAB_ERR_CONFIG);
  CHECK(model == nullptr);
  CHECK(std::string(folilab_last_error()).size() > 0);

  CHECK(folilab_model_create(R"({"name":"hopf_s3","params":{"epsilon":5}})",
                             &model) == FOLILAB_ERR_CONFIG);
  CHECK(std::string(folilab_last_error()).find("epsilon") !=
        std::string::npos);

  CHECK(folilab_model_create(nullptr, &model) == FOLILAB_ERR_CONFIG);
  CHECK(folilab_model_create(R"({"name":"hopf_s3"})", nullptr) ==
        FOLILAB_ERR_ARGUMENT);
  char* out = nullptr;
  CHECK(folilab_run_experiment(nullptr, 1, &out) == FOLILAB_ERR_ARGUMENT);
  CHECK(folilab_run_experiment("{}", 1, &out) == FOLILAB_ERR_CONFIG);
}

TEST_CASE("capi: run an experiment and read the report") {
  const char* config = R"({
    "model": {"name": "flat_torus"},
    "experiment": "validate_model",
    "samples": 10,
    "seed": 1,
    "tolerance": 1e-8
  })";
  char* report_json = nullptr;
  REQUIRE(folilab_run_experiment(config, 0, &report_json) == FOLILAB_OK);
  const auto report = nlohmann::json::parse(take(report_json));
  CHECK(report["pass"] == true);
  CHECK(report["timing_s"] == 0.0);
  CHECK(report["num_samples"] == 10);
  CHECK(report["details"].size() == 10);

  // byte-identical repeat
  char* again = nullptr;
  REQUIRE(folilab_run_experiment(config, 0, &again) == FOLILAB_OK);
  char* first = nullptr;
  REQUIRE(folilab_run_experiment(config, 0, &first) == FOLILAB_OK);
  CHECK(take(again) == take(first));
}

TEST_CASE("capi: run to file with pass flag") {
  const auto dir = std::filesystem::temp_directory_path() / "folilab_capi";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "report.json").string();
  const std::string config = std::string(R"({
    "model": {"name": "hopf_s3", "params": {"epsilon": 0.8}},
    "experiment": "fatness_scan",
    "samples": 5,
    "seed": 2,
    "tolerance": 0.05,
    "output_path": ")") + path + "\"}";

  int pass = -1;
  REQUIRE(folilab_run_experiment_to_file(config.c_str(), nullptr, 0, &pass) ==
          FOLILAB_OK);
  CHECK(pass == 1);
  CHECK(std::filesystem::exists(path));
  CHECK(std::filesystem::exists(dir / "report.csv"));

  // missing output path anywhere is a config error
  CHECK(folilab_run_experiment_to_file(
            R"({"model":{"name":"flat_torus"},"experiment":"fatness_scan"})",
            nullptr, 0, &pass) == FOLILAB_ERR_CONFIG);
  // unwritable paths surface as I/O failures
  CHECK(folilab_run_experiment_to_file(
            R"({"model":{"name":"flat_torus"},"experiment":"fatness_scan",
                "samples":2})",
            "/nonexistent_dir/report.json", 0, &pass) == FOLILAB_ERR_IO);
  std::filesystem::remove_all(dir);
}
