#include <gtest/gtest.h>

#include <filesystem>

#include "cmfplan/config.hpp"
#include "cmfplan/errors.hpp"
#include "cmfplan/io.hpp"
#include "test_util.hpp"

using namespace cmf;

namespace {
std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / "cmfplan_test_io";
  std::filesystem::create_directories(p);
  return p;
}
}  // namespace

TEST(Json, PhantomCaseRoundTripIsExact) {
  const auto c = generate_case(tutil::tiny_spec(), 21);
  const std::string text = canonical(to_json(c));
  const auto back = phantom_case_from_json(Json::parse(text));
  EXPECT_EQ(back, c);
  EXPECT_EQ(canonical(to_json(back)), text);
}

TEST(Json, PlanIsRowMajorHomogeneous) {
  BonyPlan p;
  p.set(SegmentLabel::LF, RigidTransform(Mat3::Identity(), Vec3(1, 2, 3)));
  const Json j = to_json(p);
  EXPECT_EQ(j.at("LF").at(0).at(3).get<double>(), 1.0);
  EXPECT_EQ(j.at("LF").at(2).at(3).get<double>(), 3.0);
  EXPECT_EQ(j.at("LF").at(3), Json({0.0, 0.0, 0.0, 1.0}));
  EXPECT_EQ(plan_from_json(j), p);
  Json bad = j;
  bad["LF"][0][0] = 2.0;
  EXPECT_THROW(plan_from_json(bad), InvalidArgument);
  Json cran = j;
  cran["CRANIUM"] = j.at("LF");
  EXPECT_THROW(plan_from_json(cran), InvalidArgument);
}

TEST(Json, EvalReportRoundTrip) {
  EvalReport r;
  MethodReport m;
  m.name = "bp";
  SegmentErrors e;
  e.per_segment[SegmentLabel::LF] = 0.1;
  e.entire = 0.1;
  e.per_point = {0.1, 0.2};
  m.cases = {e};
  m.facial = {0.3};
  r.methods = {m};
  PairwiseTest t{"a", "b", std::nullopt, "undefined"};
  r.tests = {t};
  r.case_seeds = {7};
  r.config_snapshot = Json{{"x", 1}}.dump();
  const auto text = canonical(to_json(r));
  const auto back = eval_report_from_json(Json::parse(text));
  EXPECT_EQ(back, r);
  EXPECT_EQ(canonical(to_json(back)), text);
}

TEST(Checkpoint, RoundTripAndMismatch) {
  const auto m = make_acmt(desk_scale_config(), Direction::BoneToFace, 4);
  const auto text = canonical(checkpoint_json(m));
  const auto back = acmt_from_checkpoint(Json::parse(text));
  EXPECT_EQ(back, m);
  EXPECT_EQ(canonical(checkpoint_json(back)), text);

  auto other = desk_scale_config();
  other.projection_dim = 128;
  EXPECT_THROW(acmt_from_checkpoint(Json::parse(text), &other), CheckpointMismatch);
  Json j = Json::parse(text);
  j["tensors"][0]["rows"] = 1;
  EXPECT_THROW(acmt_from_checkpoint(j), CheckpointMismatch);
  Json k = Json::parse(text);
  k["tensors"].erase(k["tensors"].size() - 1);
  EXPECT_THROW(acmt_from_checkpoint(k), CheckpointMismatch);
  EXPECT_THROW(defnet_from_checkpoint(Json::parse(text)), CheckpointMismatch);
  EXPECT_THROW(acmt_from_checkpoint(Json{{"a", 1}}), CheckpointMismatch);

  const auto d = make_defnet(desk_defnet_config(), 5);
  EXPECT_EQ(defnet_from_checkpoint(checkpoint_json(d)), d);
  EXPECT_EQ(checkpoint_kind(checkpoint_json(d)), "defnet");
}

TEST(Mesh, PlyRoundTripIsExact) {
  const auto c = generate_case(tutil::tiny_spec(), 22);
  const auto& mesh = c.planning.face_mesh;
  const auto text = to_ply(mesh);
  const auto back = mesh_from_ply(text);
  EXPECT_EQ(back, mesh);
  EXPECT_EQ(to_ply(back), text);
  const auto path = temp_dir() / "face.ply";
  write_text(path, text);
  EXPECT_EQ(read_mesh(path), mesh);
  EXPECT_THROW(mesh_from_ply("not a mesh"), InvalidArgument);
  EXPECT_THROW(read_mesh(temp_dir() / "face.stl"), InvalidArgument);
}

TEST(Mesh, ObjImportTriangulatesPolygons) {
  const std::string obj =
      "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\nf -4 -3 -2\n";
  const auto m = mesh_from_obj(obj);
  ASSERT_EQ(m.vertices.size(), 4u);
  ASSERT_EQ(m.triangles.size(), 3u);
  EXPECT_EQ(m.triangles[1], (std::array<std::uint32_t, 3>{0, 2, 3}));
  EXPECT_EQ(m.triangles[2], (std::array<std::uint32_t, 3>{0, 1, 2}));
  EXPECT_THROW(mesh_from_obj("v 0 0 0\nf 1 2 3\n"), InvalidArgument);
}

TEST(Config, DefaultsPartialOverlayAndUnknownKeys) {
  const auto d = default_config();
  EXPECT_EQ(d.train.epochs, 500);
  EXPECT_EQ(d.train.batch_size, 4u);
  EXPECT_EQ(d.train.adam.lr, 1e-3);
  EXPECT_EQ(d.search.candidates, 10u);
  EXPECT_EQ(d.phantom.points_per_segment, 1024u);
  EXPECT_EQ(d.phantom.facial_points, 4096u);

  const auto text = canonical(to_json(d));
  EXPECT_EQ(canonical(to_json(config_from_json(Json::parse(text)))), text);

  const auto partial = config_from_json(Json{{"train", {{"epochs", 3}}}});
  EXPECT_EQ(partial.train.epochs, 3);
  EXPECT_EQ(partial.train.batch_size, 4u);
  EXPECT_THROW(config_from_json(Json{{"train", {{"epoch", 3}}}}), InvalidArgument);
  EXPECT_THROW(config_from_json(Json{{"phantom", {{"sigma", -1.0}}}}), InvalidArgument);

  const auto path = temp_dir() / "cfg.json";
  write_json(path, Json{{"preset", "desk"}, {"train", {{"epochs", 2}}}});
  const auto desk = load_config(path);
  EXPECT_EQ(desk.phantom.facial_points, 256u);
  EXPECT_EQ(desk.bp.tower.width_divisor, 8.0);
  EXPECT_EQ(desk.train.epochs, 2);
  EXPECT_EQ(fs_train_hyper(desk).epochs, 120);
  EXPECT_EQ(fs_train_hyper(d).epochs, 500);
  EXPECT_THROW(preset("huge"), InvalidArgument);
}

TEST(Files, MissingFileIsInvalidArgument) {
  EXPECT_THROW(read_json(temp_dir() / "nope.json"), InvalidArgument);
  write_text(temp_dir() / "broken.json", "{");
  EXPECT_THROW(read_json(temp_dir() / "broken.json"), InvalidArgument);
}
