#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "cmfplan/config.hpp"
#include "cmfplan/io.hpp"
#include "cmfplan/phantom.hpp"
#include "cmfplan/planner.hpp"

namespace fs = std::filesystem;
using namespace cmf;

namespace {

const fs::path& work() {
  static const fs::path dir = [] {
    auto p = fs::temp_directory_path() / "cmfplan_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    write_text(p / "tiny.json",
               R"({"preset": "desk", "phantom": {"points_per_segment": 16, "cranium_points": 16,)"
               R"( "facial_points": 80}, "train": {"epochs": 3}, "fs_epochs": -1})");
    write_text(p / "zero.json", R"({"preset": "desk", "phantom": {"points_per_segment": 16,)"
                                R"( "cranium_points": 16, "facial_points": 80},)"
                                R"( "train": {"epochs": 0}, "fs_epochs": -1})");
    return p;
  }();
  return dir;
}

int cli(const std::string& args) {
  const std::string cmd =
      "cd '" + work().string() + "' && '" CMFPLAN_CLI "' " + args + " > last.log 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::size_t count_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// Trained once, shared by the tests below.
void ensure_models() {
  static const bool done = [] {
    EXPECT_EQ(cli("gen-data --config tiny.json --train 3 --test 5 --out d --seed 4"), 0);
    EXPECT_EQ(cli("train --role bp --data d --config tiny.json --out bp.json"), 0);
    EXPECT_EQ(cli("train --role fs --data d --config tiny.json --out fs.json"), 0);
    EXPECT_EQ(cli("train --role baseline --data d --config tiny.json --out base.json"), 0);
    return true;
  }();
  (void)done;
}

}  // namespace

TEST(Cli, UsageAndHelp) {
  EXPECT_EQ(cli(""), 1);
  EXPECT_EQ(cli("frobnicate"), 1);
  EXPECT_EQ(cli("train --role nope --data d --out x.json"), 1);
  EXPECT_EQ(cli("--help"), 0);
  EXPECT_EQ(cli("plan --help"), 0);
  const auto help = read_text(work() / "last.log");
  for (const char* flag : {"--case", "--bp", "--fs", "--n", "--seed", "--out", "--audit", "--jobs"})
    EXPECT_NE(help.find(flag), std::string::npos) << flag;
}

TEST(Cli, GenDataIsDeterministicAndValid) {
  ASSERT_EQ(cli("gen-data --config tiny.json --train 1 --test 0 --out g1 --seed 9"), 0);
  EXPECT_EQ(count_files(work() / "g1" / "train"), 1u);
  EXPECT_EQ(count_files(work() / "g1" / "test"), 0u);
  ASSERT_EQ(cli("gen-data --config tiny.json --train 2 --test 1 --out g2 --seed 9"), 0);
  ASSERT_EQ(cli("gen-data --config tiny.json --train 2 --test 1 --out g3 --seed 9 --jobs 2"), 0);
  for (const char* f : {"train/case_00000.json", "train/case_00001.json", "test/case_00000.json"})
    EXPECT_EQ(read_text(work() / "g2" / f), read_text(work() / "g3" / f)) << f;
  EXPECT_EQ(read_text(work() / "g1/train/case_00000.json"),
            read_text(work() / "g2/train/case_00000.json"));
  EXPECT_EQ(cli("validate g2"), 0);
  EXPECT_NE(read_text(work() / "last.log").find("4 files, 0 errors"), std::string::npos);

  write_text(work() / "bad.json", R"({"phantom": {"sigma": -2}})");
  EXPECT_EQ(cli("gen-data --config bad.json --train 1 --test 0 --out g4"), 2);
}

TEST(Cli, ValidateRejectsTamperedCase) {
  ASSERT_EQ(cli("gen-data --config tiny.json --train 1 --test 0 --out v --seed 2"), 0);
  Json j = read_json(work() / "v/train/case_00000.json");
  j["planning"]["desired_face"]["points"][0][0] = j["planning"]["desired_face"]["points"][0][0].get<double>() + 0.5;
  write_json(work() / "tampered.json", j);
  EXPECT_EQ(cli("validate tampered.json"), 2);
  EXPECT_EQ(cli("validate missing.json"), 2);
}

TEST(Cli, TrainWritesCheckpointAndLossHistory) {
  ensure_models();
  EXPECT_EQ(count_lines(read_text(work() / "bp.loss.csv")), 1u + 3u);
  EXPECT_EQ(cli("validate bp.json fs.json base.json"), 0);
  ASSERT_EQ(cli("train --role bp --data d --config zero.json --out bp0.json"), 0);
  EXPECT_EQ(count_lines(read_text(work() / "bp0.loss.csv")), 1u);
  const auto cfg = acmt_from_checkpoint(read_json(work() / "bp.json")).config;
  EXPECT_EQ(acmt_from_checkpoint(read_json(work() / "bp0.json")),
            make_acmt(cfg, Direction::FaceToBone, 1));
  ASSERT_EQ(cli("train --role bp --data d --config tiny.json --out bp_again.json --jobs 2"), 0);
  EXPECT_EQ(read_text(work() / "bp.json"), read_text(work() / "bp_again.json"));
  EXPECT_EQ(cli("train --role bp --data nowhere --config tiny.json --out x.json"), 2);
}

TEST(Cli, PlanAuditAndDeterminism) {
  ensure_models();
  const std::string base = "plan --config tiny.json --case d/test/case_00000.json --bp bp.json ";
  ASSERT_EQ(cli(base + "--fs fs.json --n 4 --seed 3 --out p1.json --audit a1.json"), 0);
  ASSERT_EQ(cli(base + "--fs fs.json --n 4 --seed 3 --out p2.json --audit a2.json --jobs 2"), 0);
  EXPECT_EQ(read_text(work() / "p1.json"), read_text(work() / "p2.json"));
  EXPECT_EQ(read_text(work() / "a1.json"), read_text(work() / "a2.json"));
  const Json audit = read_json(work() / "a1.json");
  ASSERT_EQ(audit.at("candidates").size(), 4u);
  std::size_t flagged = 0;
  for (const auto& c : audit.at("candidates")) flagged += c.at("winner").get<bool>();
  EXPECT_EQ(flagged, 1u);
  EXPECT_TRUE(audit.at("candidates")[audit.at("winner").get<std::size_t>()].at("winner").get<bool>());

  ASSERT_EQ(cli(base + "--fs fs.json --n 1 --out single.json"), 0);
  const auto c = phantom_case_from_json(read_json(work() / "d/test/case_00000.json"));
  const auto bp = acmt_from_checkpoint(read_json(work() / "bp.json"));
  EXPECT_EQ(plan_from_json(read_json(work() / "single.json")), plan_case(bp, c.planning));

  EXPECT_EQ(cli(base + "--fs bp.json --out x.json"), 4);
  EXPECT_EQ(cli("plan --config tiny.json --case d/test/case_00000.json --bp base.json --out x.json"), 4);
  EXPECT_EQ(cli("plan --preset default --case d/test/case_00000.json --bp bp.json --out x.json"), 4);
  EXPECT_EQ(cli("plan --case d/test/case_00000.json --bp bp.json --out x.json"), 0);
}

TEST(Cli, SimulateIdentityWithOracleKeepsFace) {
  ensure_models();
  ASSERT_EQ(cli("simulate --config tiny.json --case d/test/case_00001.json --fs oracle "
                "--plan identity --out face.ply --csv face.csv"),
            0);
  const auto c = phantom_case_from_json(read_json(work() / "d/test/case_00001.json"));
  const auto out = read_mesh(work() / "face.ply");
  const auto& pre = c.planning.face_mesh;
  ASSERT_EQ(out.vertices.size(), pre.vertices.size());
  EXPECT_EQ(out.triangles, pre.triangles);
  for (std::size_t i = 0; i < pre.vertices.size(); ++i)
    EXPECT_LE((out.vertices[i] - pre.vertices[i]).norm(), 1e-12);
  EXPECT_EQ(count_lines(read_text(work() / "face.csv")), 1u + c.planning.pre_face.size());
}

TEST(Cli, EvaluateWritesReportAndRejectsEmptyData) {
  ensure_models();
  const std::string cmd =
      "evaluate --config tiny.json --data d --bp bp.json --fs fs.json --baseline base.json ";
  ASSERT_EQ(cli(cmd + "--out r1.json --csv r1.csv --table r1.txt"), 0);
  ASSERT_EQ(cli(cmd + "--out r2.json --jobs 2"), 0);
  EXPECT_EQ(read_text(work() / "r1.json"), read_text(work() / "r2.json"));
  const auto r = eval_report_from_json(read_json(work() / "r1.json"));
  EXPECT_EQ(r.methods.size(), 4u);
  EXPECT_EQ(r.case_seeds.size(), 5u);
  EXPECT_NE(read_text(work() / "r1.txt").find("Entire Bone"), std::string::npos);
  EXPECT_EQ(cli("validate r1.json"), 0);

  fs::create_directories(work() / "empty" / "test");
  EXPECT_EQ(cli("evaluate --config tiny.json --data empty"), 2);
  EXPECT_NE(read_text(work() / "last.log").find("no test cases"), std::string::npos);
}

TEST(Cli, GradcheckAndConfigDump) {
  EXPECT_EQ(cli("gradcheck"), 0);
  ASSERT_EQ(cli("config --dump"), 0);
  const Json dumped = Json::parse(read_text(work() / "last.log"));
  EXPECT_EQ(dumped.at("train").at("epochs").get<int>(), 500);
  EXPECT_EQ(dumped.at("train").at("batch_size").get<int>(), 4);
  EXPECT_EQ(dumped.at("search").at("candidates").get<int>(), 10);
  ASSERT_EQ(cli("config --dump --preset desk"), 0);
  const Json desk = Json::parse(read_text(work() / "last.log"));
  EXPECT_EQ(desk.at("phantom").at("facial_points").get<int>(), 256);
  EXPECT_EQ(canonical(to_json(config_from_json(desk))), canonical(desk));
}
