#pragma once
// Batch experiments behind the mv-ergo tool: JSON config in, CSV/JSON artifacts out.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mvlab/coefficients.hpp"
#include "mvlab/simulator.hpp"

namespace mvlab::lab {

using nlohmann::json;

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int error = 1;
inline constexpr int violated = 2;
inline constexpr int schema = 64;
inline constexpr int io = 74;
}  // namespace exit_code

/// Config rejected before any computation; what() starts with the offending field path.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& path, const std::string& msg) : Error(path + ": " + msg), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

const std::vector<std::string>& experiment_names();

struct ExperimentConfig {
  std::string experiment;
  std::string model_name;
  coeff::Params model_params;
  sim::SimConfig sim;
  std::optional<coeff::DissipativityConstants> constants;
  std::optional<coeff::KineticConstants> kinetic_constants;
  double kinetic_KI = 0.0;
  json init;    ///< normalized initial-law spec
  json params;  ///< experiment-specific options with defaults filled in
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  json source;  ///< config as read, echoed into the manifest
};

/// Validates a config document. `experiment` (from the subcommand) must agree with
/// the document's own "experiment" key when both are present.
ExperimentConfig parse_config(const json& doc, const std::string& experiment = {});
ExperimentConfig load_config(const std::filesystem::path& path, const std::string& experiment = {});

struct RunOutcome {
  int exit_code = exit_code::ok;
  json summary;
  std::vector<std::string> files;  ///< written artifacts, relative to the output dir
};

/// Runs the experiment and writes its artifacts plus manifest.json into `out_dir`.
RunOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Fixed-width table of builtin models and their parameters.
std::string list_models();

std::string version_string();

}  // namespace mvlab::lab
