#include <gtest/gtest.h>

#include <numbers>
#include <set>

#include "cmfplan/errors.hpp"
#include "cmfplan/geom.hpp"
#include "test_util.hpp"

using namespace cmf;

namespace {

std::vector<Vec3> transformed(const RigidTransform& t, const std::vector<Vec3>& pts) {
  std::vector<Vec3> out;
  for (const auto& p : pts) out.push_back(t.apply(p));
  return out;
}

}  // namespace

TEST(PointSet, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(PointSet(std::vector<Vec3>{}), InvalidArgument);
  EXPECT_THROW(PointSet({Vec3(0, 0, std::nan(""))}), InvalidArgument);
  EXPECT_THROW(PointSet({Vec3::Zero()}, {Vec3(0, 0, 2)}), InvalidArgument);
  EXPECT_THROW(PointSet({Vec3::Zero()}, {}), InvalidArgument);
  PointSet p({Vec3(1, 2, 3)}, {Vec3(0, 0, 1)});
  EXPECT_TRUE(p.has_normals());
  EXPECT_FALSE(p.without_normals().has_normals());
  EXPECT_THROW(p.without_normals().normals(), StateError);
}

TEST(PointSet, SubsetKeepsOrder) {
  PointSet p({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)});
  const std::vector<std::size_t> idx{2, 0};
  const auto s = p.subset(idx);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0], Vec3(2, 0, 0));
  EXPECT_EQ(s[1], Vec3(0, 0, 0));
}

TEST(Segments, NamesRoundTripAndMirror) {
  for (auto s : {SegmentLabel::LF, SegmentLabel::DI, SegmentLabel::RP, SegmentLabel::LP,
                 SegmentLabel::CRANIUM})
    EXPECT_EQ(segment_from_string(to_string(s)), s);
  EXPECT_THROW(segment_from_string("XX"), InvalidArgument);
  EXPECT_EQ(mirrored(SegmentLabel::RP), SegmentLabel::LP);
  EXPECT_EQ(mirrored(SegmentLabel::LP), SegmentLabel::RP);
  EXPECT_EQ(mirrored(SegmentLabel::LF), SegmentLabel::LF);
}

TEST(SegmentedBone, RejectsCoplanarOrSmallSegments) {
  std::vector<Vec3> planar{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0)};
  EXPECT_THROW(SegmentedBone(PointSet(planar), std::vector<SegmentLabel>(4, SegmentLabel::LF)),
               InvalidArgument);
  std::vector<Vec3> three{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  EXPECT_THROW(SegmentedBone(PointSet(three), std::vector<SegmentLabel>(3, SegmentLabel::DI)),
               InvalidArgument);
  // the cranium is never checked for shape
  EXPECT_NO_THROW(
      SegmentedBone(PointSet(three), std::vector<SegmentLabel>(3, SegmentLabel::CRANIUM)));
  std::vector<Vec3> tet{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  SegmentedBone b(PointSet(tet), std::vector<SegmentLabel>(4, SegmentLabel::RP));
  EXPECT_EQ(b.movable_present(), std::vector<SegmentLabel>{SegmentLabel::RP});
  EXPECT_EQ(b.indices_of(SegmentLabel::RP).size(), 4u);
  EXPECT_THROW(SegmentedBone(PointSet(tet), std::vector<SegmentLabel>(3, SegmentLabel::RP)),
               InvalidArgument);
}

TEST(RigidTransform, ValidatesAndComposes) {
  Mat3 scaled = Mat3::Identity() * 1.1;
  EXPECT_THROW(RigidTransform(scaled, Vec3::Zero()), InvalidArgument);
  Mat3 reflect = Mat3::Identity();
  reflect(0, 0) = -1;
  EXPECT_THROW(RigidTransform(reflect, Vec3::Zero()), InvalidArgument);

  std::mt19937_64 rng(3);
  const auto a = tutil::random_transform(rng);
  const auto b = tutil::random_transform(rng);
  const Vec3 p(1, -2, 5);
  EXPECT_LT(((a * b).apply(p) - a.apply(b.apply(p))).norm(), 1e-12);
  EXPECT_LT((a.inverse().apply(a.apply(p)) - p).norm(), 1e-12);
  const auto h = RigidTransform::from_homogeneous(a.homogeneous());
  EXPECT_EQ(h, a);
  Mat4 bad = a.homogeneous();
  bad(3, 0) = 1e-3;
  EXPECT_THROW(RigidTransform::from_homogeneous(bad), InvalidArgument);
}

TEST(BonyPlan, RejectsCraniumAndMissingSegments) {
  BonyPlan p;
  EXPECT_THROW(p.set(SegmentLabel::CRANIUM, RigidTransform::identity()), InvalidArgument);
  EXPECT_THROW(p.at(SegmentLabel::LF), InvalidArgument);
  const auto id = BonyPlan::identity(kMovableSegments);
  EXPECT_EQ(id.size(), 4u);
  EXPECT_EQ(id.at(SegmentLabel::LP), RigidTransform::identity());
}

TEST(FarthestPointSample, MatchesNaiveGreedy) {
  std::mt19937_64 rng(11);
  const auto pts = tutil::random_cloud(300, rng);
  const auto idx = farthest_point_sample(pts, 40, 7);
  // naive oracle: recompute the min distance to the chosen set from scratch
  std::vector<std::size_t> ref{7};
  while (ref.size() < 40) {
    double best = -1;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double d = 1e300;
      for (auto j : ref) d = std::min(d, (pts[i] - pts[j]).squaredNorm());
      if (d > best) {
        best = d;
        arg = i;
      }
    }
    ref.push_back(arg);
  }
  EXPECT_EQ(idx, ref);
}

TEST(FarthestPointSample, DistinctEvenWithDuplicates) {
  std::vector<Vec3> pts(10, Vec3(1, 1, 1));
  pts.push_back(Vec3(5, 5, 5));
  const auto idx = farthest_point_sample(pts, 11, 0);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 11u);
  EXPECT_EQ(idx[1], 10u);
  EXPECT_THROW(farthest_point_sample(pts, 12, 0), InvalidArgument);
  EXPECT_THROW(farthest_point_sample(pts, 2, 11), InvalidArgument);
}

TEST(FitRigid, RecoversNoiselessTransform) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto src = tutil::random_cloud(30, rng);
    const auto t = tutil::random_transform(rng);
    const auto fit = fit_rigid(src, transformed(t, src));
    EXPECT_LT((fit.rotation() - t.rotation()).norm(), 1e-9);
    EXPECT_LT((fit.translation() - t.translation()).norm(), 1e-9);
  }
}

TEST(FitRigid, ResidualMatchesNaiveAndBeatsPerturbations) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> noise(0.0, 0.5);
  const auto src = tutil::random_cloud(50, rng);
  auto dst = transformed(tutil::random_transform(rng), src);
  for (auto& p : dst) p += Vec3(noise(rng), noise(rng), noise(rng));
  const auto fit = fit_rigid(src, dst);
  double naive = 0;
  for (std::size_t i = 0; i < src.size(); ++i)
    naive += (fit.rotation() * src[i] + fit.translation() - dst[i]).squaredNorm();
  naive /= static_cast<double>(src.size());
  EXPECT_NEAR(alignment_error(fit, src, dst), naive, 1e-12);
  // local optimality: small rotations about the optimum never improve it
  for (int k = 0; k < 50; ++k) {
    const Mat3 dr = axis_angle(Vec3(noise(rng), noise(rng), noise(rng)), 1e-3);
    const Mat3 r = dr * fit.rotation();
    const Vec3 t = centroid(dst) - r * centroid(src);
    EXPECT_GE(alignment_error(RigidTransform(r, t), src, dst), alignment_error(fit, src, dst));
  }
}

TEST(FitRigid, PlanarReflectionIsCorrected) {
  // a planar set and its mirror image: the unconstrained optimum is a reflection
  std::vector<Vec3> src{Vec3(0, 0, 0), Vec3(10, 0, 0), Vec3(0, 5, 0), Vec3(3, 7, 0)};
  std::vector<Vec3> dst;
  for (const auto& p : src) dst.push_back(Vec3(-p.x(), p.y(), p.z()));
  const auto fit = fit_rigid(src, dst);
  EXPECT_NEAR(fit.rotation().determinant(), 1.0, 1e-10);
  EXPECT_LT((fit.rotation().transpose() * fit.rotation() - Mat3::Identity()).norm(), 1e-10);
}

TEST(FitRigid, DegenerateInputs) {
  std::vector<Vec3> same(5, Vec3(1, 2, 3));
  EXPECT_THROW(fit_rigid(same, same), DegenerateGeometry);
  std::vector<Vec3> line{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(5, 0, 0)};
  EXPECT_THROW(fit_rigid(line, line), DegenerateGeometry);
  std::vector<Vec3> two{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  EXPECT_THROW(fit_rigid(two, two), DegenerateGeometry);
  std::vector<Vec3> three{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  EXPECT_THROW(fit_rigid(three, line), InvalidArgument);
}

TEST(ApplyTransform, RotatesNormals) {
  const Mat3 r = axis_angle(Vec3(0, 0, 1), std::numbers::pi / 2);
  PointSet p({Vec3(1, 0, 0)}, {Vec3(1, 0, 0)});
  const auto q = apply_transform(RigidTransform(r, Vec3(0, 0, 5)), p);
  EXPECT_LT((q[0] - Vec3(0, 1, 5)).norm(), 1e-12);
  EXPECT_LT((q.normals()[0] - Vec3(0, 1, 0)).norm(), 1e-12);
}

TEST(AlignmentError, IdentityOnSameSetIsZero) {
  std::mt19937_64 rng(1);
  const auto pts = tutil::random_cloud(10, rng);
  EXPECT_EQ(alignment_error(RigidTransform::identity(), pts, pts), 0.0);
}
