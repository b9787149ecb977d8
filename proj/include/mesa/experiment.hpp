#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mesa/ar_data.hpp"
#include "mesa/theory.hpp"
#include "mesa/training.hpp"

namespace mesa::experiment {

inline constexpr int kSchemaVersion = 1;

struct ExperimentSpec {
  std::string name = "custom";
  std::string group;
  std::string distribution = "gaussian";  // gaussian | sparse | ones
  double scale = 1.0;                     // sigma for gaussian, c for sparse
  std::size_t d = 5;
  std::size_t T_tr = 100;
  std::size_t T_te = 100;
  std::size_t n_train = 10000;
  std::size_t n_test = 10000;
  training::InitSpec init = training::DiagonalInit{};
  double step_size = 0.001;
  std::size_t epochs = 200;
  bool mask_nondiagonal = false;
  std::uint64_t seed = 1;
  std::size_t log_every = 1;
  std::size_t batch_size = 0;
  unsigned threads = 1;
  std::string note;

  ar::InitialDistribution initial_distribution() const;
  training::TrainConfig train_config() const;
  /// Closed-form limit of ab for this spec, if the theory has one.
  std::optional<double> theory_ab() const;
  void validate() const;
};

ExperimentSpec spec_from_json(const nlohmann::json& j, const ExperimentSpec& base = {});
nlohmann::json spec_to_json(const ExperimentSpec& spec);
ExperimentSpec load_spec(const std::filesystem::path& path);

/// Bundled preset manifest. The path defaults to MESA_PRESETS env var, then
/// the copy from the source tree.
std::filesystem::path default_presets_path();
std::vector<ExperimentSpec> load_presets(const std::filesystem::path& path = default_presets_path());
ExperimentSpec find_preset(const std::string& name,
                           const std::filesystem::path& path = default_presets_path());
std::vector<ExperimentSpec> presets_in_group(const std::string& group,
                                             const std::filesystem::path& path = default_presets_path());

/// Training and test sets are drawn from disjoint seed streams of spec.seed,
/// so presets that only differ in init or step share their data.
std::vector<ar::ARSequence> make_train_set(const ExperimentSpec& spec);
std::vector<ar::ARSequence> make_test_set(const ExperimentSpec& spec);

struct GenerateResult {
  std::filesystem::path train_file, test_file, manifest;
};
GenerateResult cmd_generate(const ExperimentSpec& spec, const std::filesystem::path& out);

struct TrainResult {
  training::TrainTrajectory trajectory;
  training::PredictionMetrics metrics;
  std::optional<double> theory_ab;
  double ratio_prediction = 0.0;  // only for gaussian data
};
/// Uses train.jsonl / test.jsonl from `out` when present, otherwise generates them.
TrainResult cmd_train(const ExperimentSpec& spec, const std::filesystem::path& out);
/// Same as cmd_train without touching the filesystem.
TrainResult run_training(const ExperimentSpec& spec);

struct FlowSummary {
  double a0 = 0.0, b0 = 0.0;
  theory::FlowResult result;
};
std::vector<FlowSummary> cmd_flow(const ExperimentSpec& spec,
                                  const std::vector<std::pair<double, double>>& inits,
                                  const std::filesystem::path& out);

struct VerifyOptions {
  bool inject_gradient_bug = false;  // negative control for the finite-difference check
  std::uint64_t seed = 1;
  unsigned threads = 1;
};
struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};
struct VerifyReport {
  std::vector<CheckResult> checks;
  bool passed() const;
  nlohmann::json to_json() const;
};
VerifyReport cmd_verify(const VerifyOptions& opts);

/// Trains every spec and writes one summary row each to sweep.csv.
void cmd_sweep(const std::vector<ExperimentSpec>& specs, const std::filesystem::path& out);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace mesa::experiment
