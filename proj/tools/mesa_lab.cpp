// mesa-lab: dataset generation, training, flow integration and checks.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mesa/experiment.hpp"
#include "mesa/parallel.hpp"

namespace fs = std::filesystem;
using namespace mesa;

namespace {

struct Common {
  std::string preset;
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, Common& c, bool spec_flags = true) {
  if (spec_flags) {
    cmd->add_option("--preset", c.preset, "Named preset from the bundled manifest");
    cmd->add_option("--config", c.config, "JSON experiment spec (overrides the preset)")
        ->check(CLI::ExistingFile);
  }
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--threads", c.threads, "Worker threads");
}

experiment::ExperimentSpec resolve(const Common& c) {
  experiment::ExperimentSpec spec;
  if (!c.preset.empty()) spec = experiment::find_preset(c.preset);
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    spec = experiment::spec_from_json(nlohmann::json::parse(in), spec);
  }
  if (c.seed) spec.seed = *c.seed;
  if (c.threads) spec.threads = *c.threads;
  spec.validate();
  return spec;
}

std::pair<double, double> parse_pair(const std::string& s) {
  std::istringstream in(s);
  double a = 0.0, b = 0.0;
  char comma = 0;
  if (!(in >> a >> comma >> b) || comma != ',')
    throw CLI::ValidationError("--init", "expected a0,b0 but got '" + s + "'");
  return {a, b};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear-attention mesa-optimization lab"};
  app.require_subcommand(1);

  Common gen, tr, fl, ve, sw;
  auto* generate = app.add_subcommand("generate", "Write train/test JSONL datasets and a manifest");
  add_common(generate, gen);

  auto* train = app.add_subcommand("train", "Run gradient descent and write trajectory, metrics and params");
  add_common(train, tr);

  std::vector<std::string> flow_inits;
  auto* flow = app.add_subcommand("flow", "Integrate the (a, b) gradient flow");
  add_common(flow, fl);
  flow->add_option("--init", flow_inits, "Initial a0,b0 (repeatable; default 0.1,0.1 0.5,1.5 2,2)");

  std::string fault;
  auto* verify = app.add_subcommand("verify", "Run the numerical self-checks; nonzero exit on failure");
  add_common(verify, ve, false);
  verify->add_option("--inject-fault", fault, "Negative control: 'gradient' corrupts the analytic gradient")
      ->check(CLI::IsMember({"gradient"}));

  std::string group;
  std::vector<std::string> sweep_presets;
  auto* sweep = app.add_subcommand("sweep", "Train a preset group and write sweep.csv");
  add_common(sweep, sw, false);
  sweep->add_option("--group", group, "Preset group (e.g. desk, full-gaussian)");
  sweep->add_option("--preset", sweep_presets, "Preset names (repeatable)");

  auto* list = app.add_subcommand("presets", "List bundled presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      const auto spec = resolve(gen);
      const auto r = experiment::cmd_generate(spec, gen.out);
      std::cout << "wrote " << r.train_file.string() << ", " << r.test_file.string() << '\n';
    } else if (train->parsed()) {
      const auto spec = resolve(tr);
      const auto r = experiment::cmd_train(spec, tr.out);
      const auto& f = r.trajectory.final();
      std::cout << spec.name << ": epoch " << f.epoch << " a=" << f.diag_a << " b=" << f.diag_b
                << " ab=" << f.ab;
      if (r.theory_ab) std::cout << " (theory " << *r.theory_ab << ")";
      std::cout << " ratio=" << r.metrics.ratio_mean << " mse=" << r.metrics.mse_mean << '\n';
    } else if (flow->parsed()) {
      const auto spec = resolve(fl);
      std::vector<std::pair<double, double>> inits;
      for (const auto& s : flow_inits) inits.push_back(parse_pair(s));
      if (inits.empty()) inits = {{0.1, 0.1}, {0.5, 1.5}, {2.0, 2.0}};
      bool all = true;
      for (const auto& s : experiment::cmd_flow(spec, inits, fl.out)) {
        const auto& f = s.result.final();
        std::cout << "(" << s.a0 << "," << s.b0 << ") -> a=" << f.a << " b=" << f.b
                  << " ab=" << f.ab() << " steps=" << s.result.steps
                  << (s.result.converged ? "" : s.result.stationary ? " STATIONARY" : " NOT CONVERGED")
                  << '\n';
        all = all && s.result.converged;
      }
      return all ? 0 : 3;
    } else if (verify->parsed()) {
      experiment::VerifyOptions o;
      o.inject_gradient_bug = fault == "gradient";
      if (ve.seed) o.seed = *ve.seed;
      o.threads = ve.threads.value_or(default_threads());
      const auto report = experiment::cmd_verify(o);
      fs::create_directories(ve.out);
      experiment::write_json(fs::path(ve.out) / "verify.json", report.to_json());
      for (const auto& c : report.checks)
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  measured=" << c.measured
                  << "  threshold=" << c.threshold << '\n';
      return report.passed() ? 0 : 1;
    } else if (sweep->parsed()) {
      std::vector<experiment::ExperimentSpec> specs;
      if (!group.empty()) specs = experiment::presets_in_group(group);
      for (const auto& n : sweep_presets) specs.push_back(experiment::find_preset(n));
      if (specs.empty()) throw std::invalid_argument("sweep needs --group or --preset");
      for (auto& s : specs) {
        if (sw.seed) s.seed = *sw.seed;
        if (sw.threads) s.threads = *sw.threads;
      }
      experiment::cmd_sweep(specs, sw.out);
      std::cout << "wrote " << (fs::path(sw.out) / "sweep.csv").string() << '\n';
    } else if (list->parsed()) {
      for (const auto& s : experiment::load_presets())
        std::cout << s.name << "  [" << s.group << "]  " << s.distribution << " " << s.scale
                  << " d=" << s.d << " T=" << s.T_tr << " n=" << s.n_train << " "
                  << training::describe(s.init) << " step=" << s.step_size
                  << " epochs=" << s.epochs << (s.mask_nondiagonal ? " masked" : "") << '\n';
    }
  } catch (const training::TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
