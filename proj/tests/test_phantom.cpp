#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "cmfplan/errors.hpp"
#include "cmfplan/io.hpp"
#include "cmfplan/phantom.hpp"
#include "cmfplan/simulator.hpp"
#include "test_util.hpp"

using namespace cmf;

TEST(TissueOracle, ZeroAndUniformMovement) {
  std::mt19937_64 rng(1);
  const PointSet bone(tutil::random_cloud(30, rng));
  const PointSet face(tutil::random_cloud(20, rng, 80.0));
  const auto zero = tissue_oracle(bone, bone, face, 15.0);
  for (const auto& v : zero.vectors) EXPECT_EQ(v, Vec3::Zero());

  const Vec3 t(1.5, -2.0, 0.25);
  std::vector<Vec3> moved;
  for (const auto& p : bone.coords()) moved.push_back(p + t);
  const auto uni = tissue_oracle(bone, PointSet(moved), face, 40.0);
  for (const auto& v : uni.vectors) EXPECT_LT((v - t).norm(), 1e-12);
  EXPECT_THROW(tissue_oracle(bone, bone, face, 0.0), InvalidArgument);
}

TEST(TissueOracle, MatchesNaiveDoubleLoop) {
  const auto c = generate_case(tutil::tiny_spec(), 3);
  const auto& bone = c.planning.pre_bone.points();
  const auto post = c.post_bone();
  const auto f = tissue_oracle(bone, post, c.planning.pre_face, 15.0);
  for (std::size_t i = 0; i < c.planning.pre_face.size(); ++i) {
    double ws = 0;
    Vec3 acc = Vec3::Zero();
    for (std::size_t j = 0; j < bone.size(); ++j) {
      const double w = std::exp(-(c.planning.pre_face[i] - bone[j]).squaredNorm() / 225.0);
      ws += w;
      acc += w * (post[j] - bone[j]);
    }
    EXPECT_LT((f.vectors[i] - acc / ws).norm(), 1e-12);
  }
}

TEST(TissueOracle, TranslationEquivariantAndBounded) {
  const auto c = generate_case(tutil::tiny_spec(), 4);
  const auto& bone = c.planning.pre_bone.points();
  const auto post = c.post_bone();
  const auto f = tissue_oracle(bone, post, c.planning.pre_face, 15.0);
  // shift by an exactly representable offset so coordinate differences are unchanged
  const Vec3 t(64.0, -32.0, 128.0);
  auto shift = [&](const PointSet& p) {
    std::vector<Vec3> o;
    for (const auto& x : p.coords()) o.push_back(x + t);
    return PointSet(o);
  };
  const auto g = tissue_oracle(shift(bone), shift(post), shift(c.planning.pre_face), 15.0);
  double max_bone = 0;
  for (std::size_t j = 0; j < bone.size(); ++j) max_bone = std::max(max_bone, (post[j] - bone[j]).norm());
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_LT((f.vectors[i] - g.vectors[i]).norm(), 1e-12);
    EXPECT_LE(f.vectors[i].norm(), max_bone + 1e-12);
  }
}

TEST(Phantom, DeterministicPerSeed) {
  const auto spec = tutil::tiny_spec();
  const auto a = generate_case(spec, 42);
  const auto b = generate_case(spec, 42);
  EXPECT_EQ(a, b);
  EXPECT_EQ(canonical(to_json(a)), canonical(to_json(b)));
  EXPECT_NE(generate_case(spec, 43).planning.pre_bone, a.planning.pre_bone);
}

TEST(Phantom, SelfConsistentAndValid) {
  const auto spec = tutil::tiny_spec();
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto c = generate_case(spec, s);
    const auto& pc = c.planning;
    const auto expect =
        tissue_oracle(pc.pre_bone.points(), c.post_bone(), pc.pre_face, spec.sigma).displaced();
    EXPECT_EQ(pc.desired_face, expect);
    // re-validating the bone reruns the non-coplanarity checks
    EXPECT_NO_THROW(SegmentedBone(pc.pre_bone.points(), pc.pre_bone.labels()));
    EXPECT_EQ(pc.pre_bone.size(), 4 * spec.points_per_segment + spec.cranium_points);
    EXPECT_EQ(pc.pre_face.size(), spec.facial_points);
    for (std::size_t i = 0; i < pc.pre_face.size(); ++i)
      EXPECT_EQ(pc.pre_face[i], pc.face_mesh.vertices[pc.face_sample_indices[i]]);
    for (const auto& [seg, t] : c.gt_plan.transforms()) {
      const double angle = std::acos(std::clamp((t.rotation().trace() - 1.0) / 2.0, -1.0, 1.0));
      EXPECT_LE(angle, spec.max_rotation_deg * M_PI / 180.0 + 1e-12);
      std::vector<Vec3> pts;
      for (auto i : pc.pre_bone.indices_of(seg)) pts.push_back(pc.pre_bone.points()[i]);
      const Vec3 ctr = centroid(pts);
      EXPECT_LE((t.apply(ctr) - ctr).norm(), spec.max_translation + 1e-9);
    }
  }
}

TEST(Phantom, IdentityDrawKeepsFace) {
  auto spec = tutil::tiny_spec();
  spec.max_rotation_deg = 0;
  spec.max_translation = 0;
  const auto c = generate_case(spec, 7);
  EXPECT_EQ(c.planning.desired_face, c.planning.pre_face);
}

TEST(Phantom, SpecValidation) {
  auto s = tutil::tiny_spec();
  s.sigma = 0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = tutil::tiny_spec();
  s.points_per_segment = 3;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = tutil::tiny_spec();
  s.max_translation = -1;
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(Dataset, SizesSeedsAndAugmentation) {
  auto spec = tutil::tiny_spec();
  const auto plain = build_dataset(spec, 5, 2, false);
  EXPECT_EQ(plain.bp_train.size(), 5u);
  EXPECT_EQ(plain.fs_train.size(), 5u);
  EXPECT_EQ(plain.test_cases.size(), 2u);
  std::set<std::uint64_t> train_seeds, test_seeds;
  for (const auto& c : plain.train_cases) train_seeds.insert(c.seed);
  for (const auto& c : plain.test_cases) test_seeds.insert(c.seed);
  for (auto s : test_seeds) EXPECT_EQ(train_seeds.count(s), 0u);
  EXPECT_NE(case_seed(0, Split::Train, 3), case_seed(0, Split::Test, 3));
  EXPECT_THROW(build_dataset(spec, 0, 1, false), InvalidArgument);

  spec.augment_copies = 2;
  const auto aug = build_dataset(spec, 3, 0, true);
  ASSERT_EQ(aug.bp_train.size(), 9u);
  bool saw_flip = false;
  for (std::size_t k = 0; k < aug.train_views.size(); ++k) {
    const auto& [ci, p] = aug.train_views[k];
    saw_flip |= p.flip;
    const auto base = bp_sample(aug.train_cases[ci]);
    const auto& s = aug.bp_train[k];
    for (std::size_t i = 0; i < base.target_movement.size(); ++i)
      EXPECT_NEAR(s.target_movement[i].norm(), base.target_movement[i].norm(), 1e-12);
    for (std::size_t i = 0; i < base.source_points.size(); ++i)
      EXPECT_EQ(s.source_points[i], p.apply(base.source_points[i]));
  }
  EXPECT_TRUE(saw_flip);
}

TEST(Dataset, BpAndFsRolesSwap) {
  const auto c = generate_case(tutil::tiny_spec(), 5);
  const auto bp = bp_sample(c);
  const auto fs = fs_sample(c);
  EXPECT_EQ(bp.source_points, c.planning.pre_face.coords());
  EXPECT_EQ(bp.target_points, c.planning.pre_bone.points().coords());
  EXPECT_EQ(fs.source_points, bp.target_points);
  EXPECT_EQ(fs.target_movement, bp.source_movement);
  const auto post = c.post_bone();
  for (std::size_t i = 0; i < post.size(); ++i)
    EXPECT_EQ(bp.target_movement[i], post[i] - c.planning.pre_bone.points()[i]);
}
