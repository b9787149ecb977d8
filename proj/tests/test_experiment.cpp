#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mesa/experiment.hpp"

using namespace mesa;
using namespace mesa::experiment;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("mesa_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentSpec tiny() {
  ExperimentSpec s;
  s.name = "tiny";
  s.distribution = "sparse";
  s.scale = 1.0;
  s.d = 3;
  s.T_tr = 8;
  s.T_te = 8;
  s.n_train = 40;
  s.n_test = 20;
  s.step_size = 0.01;
  s.epochs = 5;
  return s;
}

int run(const std::string& args) {
  const std::string cmd = std::string(MESA_LAB_EXE) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("bundled presets") {
  const auto all = load_presets();
  CHECK(all.size() >= 30);
  const auto fig = find_preset("fig1-gaussian-0.5");
  CHECK(fig.distribution == "gaussian");
  CHECK(fig.scale == 0.5);
  CHECK(fig.d == 5);
  CHECK(fig.T_tr == 100);
  CHECK(fig.n_train == 10000);
  CHECK(fig.epochs == 200);
  CHECK(fig.step_size == 0.001);
  CHECK(std::get<training::DiagonalInit>(fig.init).a0 == 0.1);

  CHECK(presets_in_group("full-gaussian").size() == 9);
  CHECK(presets_in_group("full-sparse").size() == 9);
  CHECK(presets_in_group("full-ones").size() == 2);
  CHECK(presets_in_group("full-gaussian-init").size() == 9);
  CHECK(find_preset("small-context-gaussian-1").T_tr == 5);
  CHECK(find_preset("ones-masked").mask_nondiagonal);
  CHECK(find_preset("example-sparse-0.5").step_size == 0.03);
  CHECK_THROWS_AS(find_preset("no-such-preset"), std::invalid_argument);

  for (const auto& s : presets_in_group("desk")) {
    CHECK(s.T_tr == 20);
    CHECK(s.n_train == 2000);
    CHECK(s.epochs <= 500);
  }
}

TEST_CASE("spec JSON") {
  const auto s = tiny();
  const auto back = spec_from_json(spec_to_json(s));
  CHECK(spec_to_json(back) == spec_to_json(s));
  auto bad = spec_to_json(s);
  bad["colour"] = "red";
  CHECK_THROWS_AS(spec_from_json(bad), std::invalid_argument);
  bad = spec_to_json(s);
  bad["distribution"] = "cauchy";
  CHECK_THROWS_AS(spec_from_json(bad), std::invalid_argument);

  CHECK(tiny().theory_ab().value() == doctest::Approx(1.0));
  auto ones = tiny();
  ones.distribution = "ones";
  CHECK_FALSE(ones.theory_ab().has_value());
  ones.mask_nondiagonal = true;
  CHECK(ones.theory_ab().value() == doctest::Approx(theory::fixed_point_ab_ones(3, 8)));
}

TEST_CASE("generate is byte-reproducible") {
  const auto a = scratch("gen_a"), b = scratch("gen_b");
  cmd_generate(tiny(), a);
  cmd_generate(tiny(), b);
  for (const char* f : {"train.jsonl", "test.jsonl", "manifest.json"})
    CHECK(slurp(a / f) == slurp(b / f));
  const auto m = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(m.at("schema_version") == kSchemaVersion);
  CHECK(m.at("train").at("count") == 40);
  CHECK(ar::read_dataset((a / "train.jsonl").string()).size() == 40);

  auto one = tiny();
  one.n_train = 1;
  one.n_test = 1;
  const auto c = scratch("gen_one");
  cmd_generate(one, c);
  CHECK(ar::read_dataset((c / "train.jsonl").string()).size() == 1);
}

TEST_CASE("train writes every artifact") {
  const auto out = scratch("train");
  const auto r = cmd_train(tiny(), out);
  CHECK(r.trajectory.snapshots.size() == 6);
  for (const char* f : {"trajectory.csv", "metrics.csv", "result.json", "final_params.json",
                        "train.jsonl", "test.jsonl"})
    CHECK(fs::exists(out / f));
  CHECK(slurp(out / "trajectory.csv").rfind("epoch,train_loss,test_loss,a,b,ab\n", 0) == 0);
  const auto res = nlohmann::json::parse(slurp(out / "result.json"));
  CHECK(res.at("schema_version") == kSchemaVersion);
  const auto par = nlohmann::json::parse(slurp(out / "final_params.json"));
  CHECK(par.at("schema_version") == kSchemaVersion);
  CHECK(par.at("W_KQ").size() == 6);
  CHECK(par.at("W_PV").size() == 3);

  // rerun against the stored datasets gives identical output
  const auto first = slurp(out / "trajectory.csv");
  cmd_train(tiny(), out);
  CHECK(slurp(out / "trajectory.csv") == first);

  auto other = tiny();
  other.n_train = 41;
  CHECK_THROWS(cmd_train(other, out));
}

TEST_CASE("flow command") {
  auto s = tiny();
  s.distribution = "gaussian";
  const auto out = scratch("flow");
  const auto rows = cmd_flow(s, {{0.1, 0.1}, {0.5, 1.5}, {2.0, 2.0}, {0.0, 0.0}}, out);
  REQUIRE(rows.size() == 4);
  const double target = *s.theory_ab();
  std::vector<double> as;
  for (int i = 0; i < 3; ++i) {
    CHECK(rows[i].result.converged);
    CHECK(std::abs(rows[i].result.final().ab() - target) < 1e-6);
    as.push_back(rows[i].result.final().a);
  }
  CHECK(std::abs(as[0] - as[1]) > 0.1);
  CHECK(rows[3].result.stationary);
  const auto j = nlohmann::json::parse(slurp(out / "flow.json"));
  CHECK(j.at("schema_version") == kSchemaVersion);
  CHECK(slurp(out / "flow_0.csv").rfind("tau,a,b,ab,surrogate_loss\n", 0) == 0);
}

TEST_CASE("verify report") {
  const auto ok = cmd_verify({});
  CHECK(ok.passed());
  VerifyOptions bug;
  bug.inject_gradient_bug = true;
  const auto bad = cmd_verify(bug);
  CHECK_FALSE(bad.passed());
  CHECK_FALSE(bad.checks.front().passed);
  CHECK(ok.to_json().at("schema_version") == kSchemaVersion);
}

TEST_CASE("command line") {
  const auto dir = scratch("cli");
  const auto cfg = dir / "tiny.json";
  {
    std::ofstream f(cfg);
    f << spec_to_json(tiny()).dump();
  }
  const std::string c = "--config " + cfg.string();
  CHECK(run("generate " + c + " --out " + (dir / "g").string()) == 0);
  CHECK(run("train " + c + " --out " + (dir / "t").string() + " --seed 3 --threads 2") == 0);
  CHECK(fs::exists(dir / "t" / "trajectory.csv"));
  CHECK(run("flow " + c + " --out " + (dir / "f").string()) == 0);
  CHECK(run("flow " + c + " --init 0,0 --out " + (dir / "f0").string()) != 0);
  CHECK(run("verify --out " + (dir / "v").string()) == 0);
  CHECK(fs::exists(dir / "v" / "verify.json"));
  CHECK(run("verify --inject-fault gradient --out " + (dir / "v2").string()) == 1);
  CHECK(run("train --preset no-such-thing --out " + (dir / "x").string()) != 0);
  CHECK(run("presets") == 0);

  auto diverge = spec_to_json(tiny());
  diverge["step_size"] = 50.0;
  diverge["distribution"] = "gaussian";
  {
    std::ofstream f(dir / "div.json");
    f << diverge.dump();
  }
  CHECK(run("train --config " + (dir / "div.json").string() + " --out " + (dir / "d").string()) == 4);

  // sweep over two explicit presets is too slow at desk scale; use the tiny spec
  std::vector<ExperimentSpec> specs{tiny()};
  specs.push_back(tiny());
  specs.back().name = "tiny-b";
  specs.back().init = training::DiagonalInit{0.5, 1.5};
  cmd_sweep(specs, dir / "s");
  const auto sweep = slurp(dir / "s" / "sweep.csv");
  CHECK(sweep.find("tiny-b") != std::string::npos);
  CHECK(sweep.find(",ok\n") != std::string::npos);
}
