#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "magnls/run.hpp"

using namespace magnls;
namespace fs = std::filesystem;

namespace {

const fs::path kExamples = MAGNLS_EXAMPLES;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("magnls_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Runs the executable; stderr (the event stream) goes to err.
int cli(const std::string& args, const fs::path& err) {
  const std::string cmd = std::string("\"") + MAGNLS_EXE + "\" " + args + " 2> \"" + err.string() + "\" > /dev/null";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string example(const std::string& name) { return (kExamples / name).string(); }

const std::string kSmallSolve = " --set grid.M=33 --set grid.L=4";

}  // namespace

TEST(Cli, SolveWritesResultTraceAndFields) {
  const fs::path out = scratch("solve");
  ASSERT_EQ(cli("solve --config " + example("solve.json") + kSmallSolve + " --out " + out.string(), out.string() + ".err"),
            kExitOk);
  ASSERT_TRUE(fs::exists(out / "result.json"));
  ASSERT_TRUE(fs::exists(out / "trace.csv"));
  EXPECT_TRUE(fs::exists(out / "minimizer.field"));
  EXPECT_TRUE(fs::exists(out / "solution.field"));
  const json r = json::parse(slurp(out / "result.json"));
  EXPECT_EQ(r.at("mode"), "solve");
  EXPECT_EQ(r.at("exit_code"), 0);
  EXPECT_EQ(r.at("ground_state").at("status"), "converged");
  EXPECT_EQ(r.at("config").at("grid").at("M"), 33);
  EXPECT_GT(r.at("ground_state").at("kappa").get<double>(), 0.0);
  const std::string events = slurp(out.string() + ".err");
  EXPECT_NE(events.find("\"event\":\"finished\""), std::string::npos);
}

TEST(Cli, ResultIsDeterministic) {
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  const std::string base = "solve --config " + example("solve_magnetic.json") + " --set grid.M=33 --set grid.L=4";
  ASSERT_EQ(cli(base + " --out " + a.string(), a.string() + ".err"), kExitOk);
  ASSERT_EQ(cli(base + " --out " + b.string(), b.string() + ".err"), kExitOk);
  EXPECT_EQ(slurp(a / "result.json"), slurp(b / "result.json"));
  EXPECT_EQ(slurp(a / "trace.csv"), slurp(b / "trace.csv"));
}

TEST(Cli, ExponentOutsideRangeIsRejected) {
  const fs::path out = scratch("p2");
  EXPECT_EQ(cli("solve --config " + example("solve.json") + kSmallSolve + " --set solver.p=2 --out " + out.string(),
                out.string() + ".err"),
            kExitInvalid);
  EXPECT_NE(slurp(out.string() + ".err").find("validation_failed"), std::string::npos);
  EXPECT_FALSE(fs::exists(out / "result.json"));
}

TEST(Cli, CriticalCouplingsAreValidated) {
  const fs::path out = scratch("crit_bad");
  EXPECT_EQ(cli("critical --config " + example("critical.json") +
                    " --set critical.lambda_ab=0.6 --set critical.mu=0.3 --out " + out.string(),
                out.string() + ".err"),
            kExitInvalid);
  EXPECT_NE(slurp(out.string() + ".err").find("lambda_ab^2 <= mu < 1/4"), std::string::npos);
}

TEST(Cli, ModeMismatchAndBadInvocations) {
  const fs::path out = scratch("bad");
  const std::string err = out.string() + ".err";
  EXPECT_EQ(cli("penalty --config " + example("solve.json") + " --out " + out.string(), err), kExitInvalid);
  EXPECT_NE(slurp(err).find("does not match subcommand"), std::string::npos);
  EXPECT_EQ(cli("solve --config /nonexistent/solve.json", err), kExitInvalid);
  EXPECT_EQ(cli("frobnicate --config " + example("solve.json"), err), kExitInvalid);
  EXPECT_EQ(cli("solve --config " + example("solve.json") + " --set solver.tolerence=1e-3", err), kExitInvalid);
  EXPECT_EQ(cli("solve --config " + example("solve.json") + " --set grid.M=0", err), kExitInvalid);
}

TEST(Cli, IterationCapGivesNonConvergence) {
  const fs::path out = scratch("cap");
  EXPECT_EQ(cli("solve --config " + example("solve.json") + kSmallSolve + " --set solver.max_iterations=3 --out " +
                    out.string(),
                out.string() + ".err"),
            kExitNotConverged);
  const json r = json::parse(slurp(out / "result.json"));
  EXPECT_EQ(r.at("exit_code"), kExitNotConverged);
  EXPECT_NE(r.at("ground_state").at("status"), "converged");
}

TEST(Cli, GaugeCheckSmall) {
  const fs::path out = scratch("gauge");
  ASSERT_EQ(cli("gauge-check --config " + example("gauge_check.json") +
                    " --set grid.M=33 --set grid.L=4 --set gauge_check.fields=4 --set gauge_check.shifts=3"
                    " --set gauge_check.lattice_step=0.25 --out " +
                    out.string(),
                out.string() + ".err"),
            kExitOk);
  const json r = json::parse(slurp(out / "result.json"));
  EXPECT_TRUE(r.at("exact_invariants_hold").get<bool>());
  EXPECT_LE(r.at("report").at("covariance_defect").get<double>(), 1e-12);
  EXPECT_EQ(r.at("report").at("diamagnetic_violations"), 0);
}

TEST(Cli, SynthThenExtractRecoversFrames) {
  const fs::path seq = scratch("synth");
  const fs::path ext = scratch("extract");
  ASSERT_EQ(cli("profiles --config " + example("profiles_synth.json") + " --set profiles.noise=0 --out " + seq.string(),
                seq.string() + ".err"),
            kExitOk);
  ASSERT_TRUE(fs::exists(seq / "manifest.json"));
  ASSERT_TRUE(fs::exists(seq / "seq_003.field"));
  const json synth = json::parse(slurp(seq / "result.json"));
  ASSERT_EQ(cli("profiles --config " + example("profiles_synth.json") +
                    " --set profiles.action=extract --set profiles.input=" + seq.string() + " --out " +
                    ext.string(),
                ext.string() + ".err"),
            kExitOk);
  const json r = json::parse(slurp(ext / "result.json"));
  ASSERT_EQ(r.at("frames").size(), 2u);
  for (const json& planted : synth.at("planted_frames")) {
    bool found = false;
    for (const json& f : r.at("frames")) found = found || f.at("shifts") == planted.at("shifts");
    EXPECT_TRUE(found) << planted.dump();
  }
  EXPECT_TRUE(fs::exists(ext / "profile_000.field"));
}

TEST(Cli, ExtractWithoutInputIsRejected) {
  const fs::path out = scratch("extract_bad");
  EXPECT_EQ(cli("profiles --config " + example("profiles_synth.json") + " --set profiles.action=extract --out " +
                    out.string(),
                out.string() + ".err"),
            kExitInvalid);
}

TEST(Run, InProcessOverridesAndOutputs) {
  const fs::path out = scratch("inproc");
  json cfg = load_config_json(kExamples / "solve.json");
  std::ostringstream events;
  ASSERT_EQ(run(cfg, {"grid.M=25", "grid.L=3", "solver.p=4", "output.dump_fields=false"}, out, &events), kExitOk);
  const json r = json::parse(slurp(out / "result.json"));
  EXPECT_EQ(r.at("config").at("solver").at("p"), 4);
  EXPECT_EQ(r.at("ground_state").at("p"), 4.0);
  EXPECT_FALSE(fs::exists(out / "minimizer.field"));
  EXPECT_NE(events.str().find("solve_start"), std::string::npos);
}

TEST(Run, PenaltyControlSmall) {
  const fs::path out = scratch("penalty");
  json cfg = load_config_json(kExamples / "penalty_control.json");
  ASSERT_EQ(run(cfg, {"grid.M=33", "grid.L=4", "penalty.count=4", "penalty.rays=[[1,0],[1,1]]"}, out, nullptr),
            kExitOk);
  const json r = json::parse(slurp(out / "result.json"));
  EXPECT_TRUE(r.at("report").at("equality_everywhere").get<bool>());
  EXPECT_FALSE(r.at("report").at("penalty_holds").get<bool>());
}

TEST(Run, DyadicVerifyReportsBrezisLieb) {
  const fs::path out = scratch("dyadic");
  json cfg = load_config_json(kExamples / "profiles_dyadic.json");
  ASSERT_EQ(run(cfg, {}, out, nullptr), kExitOk);
  const json r = json::parse(slurp(out / "result.json"));
  EXPECT_LT(r.at("brezis_lieb").at("mass_defect").get<double>(), 0.02);
  EXPECT_EQ(r.at("critical_norm_invariance").size(), 2u);
}

TEST(Run, ExampleConfigsParse) {
  for (const fs::directory_entry& e : fs::directory_iterator(kExamples)) {
    const json cfg = load_config_json(e.path());
    EXPECT_NO_THROW({
      RunConfig c = parse_config(cfg);
      (void)c;
    }) << e.path();
  }
}
