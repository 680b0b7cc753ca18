#include "cmfplan/geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "cmfplan/errors.hpp"
#include "cmfplan/kernels.hpp"

namespace cmf {

namespace {

constexpr double kNormalTol = 1e-6;
constexpr double kRotationTol = 1e-10;

void require_finite(const std::vector<Vec3>& v, const char* what) {
  for (const auto& p : v)
    if (!p.allFinite()) throw InvalidArgument(std::string(what) + " must be finite");
}

// Singular values of the centered coordinates, descending.
Vec3 spread(std::span<const Vec3> pts) {
  const Vec3 c = centroid(pts);
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  return Eigen::JacobiSVD<Mat3>(cov).singularValues();
}

}  // namespace

// --- PointSet ---------------------------------------------------------------

PointSet::PointSet(std::vector<Vec3> coords) : coords_(std::move(coords)) {
  if (coords_.empty()) throw InvalidArgument("PointSet needs at least one point");
  require_finite(coords_, "coordinates");
}

PointSet::PointSet(std::vector<Vec3> coords, std::vector<Vec3> normals)
    : PointSet(std::move(coords)) {
  if (normals.size() != coords_.size())
    throw InvalidArgument("normals length must match coordinates");
  require_finite(normals, "normals");
  for (const auto& n : normals)
    if (std::abs(n.norm() - 1.0) > kNormalTol) throw InvalidArgument("normals must be unit length");
  normals_ = std::move(normals);
}

const std::vector<Vec3>& PointSet::normals() const {
  if (!normals_) throw StateError("PointSet has no normals");
  return *normals_;
}

PointSet PointSet::subset(std::span<const std::size_t> indices) const {
  std::vector<Vec3> c;
  c.reserve(indices.size());
  for (auto i : indices) c.push_back(coords_.at(i));
  if (!normals_) return PointSet(std::move(c));
  std::vector<Vec3> n;
  n.reserve(indices.size());
  for (auto i : indices) n.push_back((*normals_)[i]);
  return PointSet(std::move(c), std::move(n));
}

// --- labels -----------------------------------------------------------------

std::string_view to_string(SegmentLabel s) {
  switch (s) {
    case SegmentLabel::LF: return "LF";
    case SegmentLabel::DI: return "DI";
    case SegmentLabel::RP: return "RP";
    case SegmentLabel::LP: return "LP";
    case SegmentLabel::CRANIUM: return "CRANIUM";
  }
  return "?";
}

SegmentLabel segment_from_string(std::string_view name) {
  for (auto s : {SegmentLabel::LF, SegmentLabel::DI, SegmentLabel::RP, SegmentLabel::LP,
                 SegmentLabel::CRANIUM})
    if (to_string(s) == name) return s;
  throw InvalidArgument("unknown segment label '" + std::string(name) + "'");
}

SegmentLabel mirrored(SegmentLabel s) {
  if (s == SegmentLabel::RP) return SegmentLabel::LP;
  if (s == SegmentLabel::LP) return SegmentLabel::RP;
  return s;
}

// --- SegmentedBone ----------------------------------------------------------

SegmentedBone::SegmentedBone(PointSet points, std::vector<SegmentLabel> labels)
    : points_(std::move(points)), labels_(std::move(labels)) {
  if (labels_.size() != points_.size())
    throw InvalidArgument("label count must match point count");
  for (auto s : kMovableSegments) {
    const auto idx = indices_of(s);
    if (idx.empty()) continue;
    if (idx.size() < 4)
      throw InvalidArgument("segment " + std::string(to_string(s)) + " has fewer than 4 points");
    std::vector<Vec3> pts;
    pts.reserve(idx.size());
    for (auto i : idx) pts.push_back(points_[i]);
    const Vec3 sv = spread(pts);
    if (!(sv(2) > 1e-12 * sv(0)))
      throw InvalidArgument("segment " + std::string(to_string(s)) + " is coplanar");
  }
}

std::vector<std::size_t> SegmentedBone::indices_of(SegmentLabel s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == s) out.push_back(i);
  return out;
}

std::vector<SegmentLabel> SegmentedBone::movable_present() const {
  std::vector<SegmentLabel> out;
  for (auto s : kMovableSegments)
    if (std::find(labels_.begin(), labels_.end(), s) != labels_.end()) out.push_back(s);
  return out;
}

// --- RigidTransform ---------------------------------------------------------

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation_.allFinite() || !translation_.allFinite())
    throw InvalidArgument("rigid transform must be finite");
  const double ortho = (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > kRotationTol) throw InvalidArgument("rotation is not orthonormal");
  if (std::abs(rotation_.determinant() - 1.0) > kRotationTol)
    throw InvalidArgument("rotation determinant must be +1");
}

RigidTransform RigidTransform::from_homogeneous(const Mat4& m) {
  if (m.row(3) != Eigen::RowVector4d(0, 0, 0, 1))
    throw InvalidArgument("homogeneous matrix must end in [0 0 0 1]");
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return {rt, -(rt * translation_)};
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  return {rotation_ * other.rotation_, rotation_ * other.translation_ + translation_};
}

Mat4 RigidTransform::homogeneous() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

// --- BonyPlan ---------------------------------------------------------------

BonyPlan::BonyPlan(std::map<SegmentLabel, RigidTransform> transforms)
    : transforms_(std::move(transforms)) {
  if (transforms_.count(SegmentLabel::CRANIUM))
    throw InvalidArgument("the cranium is fixed and never carries a transform");
}

BonyPlan BonyPlan::identity(std::span<const SegmentLabel> segments) {
  BonyPlan plan;
  for (auto s : segments) plan.set(s, RigidTransform::identity());
  return plan;
}

void BonyPlan::set(SegmentLabel s, const RigidTransform& t) {
  if (s == SegmentLabel::CRANIUM)
    throw InvalidArgument("the cranium is fixed and never carries a transform");
  transforms_.insert_or_assign(s, t);
}

const RigidTransform& BonyPlan::at(SegmentLabel s) const {
  auto it = transforms_.find(s);
  if (it == transforms_.end())
    throw InvalidArgument("plan has no transform for segment " + std::string(to_string(s)));
  return it->second;
}

// --- operations -------------------------------------------------------------

std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t k,
                                               std::size_t seed_index) {
  if (points.empty()) throw InvalidArgument("farthest_point_sample: empty point set");
  if (k == 0 || k > points.size())
    throw InvalidArgument("farthest_point_sample: k must be in [1, N]");
  if (seed_index >= points.size())
    throw InvalidArgument("farthest_point_sample: seed index out of range");
  std::vector<double> min_d(points.size(), std::numeric_limits<double>::infinity());
  std::vector<std::size_t> out;
  out.reserve(k);
  out.push_back(seed_index);
  // Chosen points are parked at -1 so duplicates of them can still be picked
  // but they themselves never are.
  min_d[seed_index] = -1.0;
  while (out.size() < k) {
    out.push_back(kernels::parallel::fps_step(points, out.back(), min_d));
    min_d[out.back()] = -1.0;
  }
  return out;
}

std::vector<std::size_t> farthest_point_sample(const PointSet& points, std::size_t k,
                                               std::size_t seed_index) {
  return farthest_point_sample(std::span<const Vec3>(points.coords()), k, seed_index);
}

Vec3 centroid(std::span<const Vec3> points) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : points) c += p;
  return c / static_cast<double>(points.size());
}

RigidTransform fit_rigid(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) throw InvalidArgument("fit_rigid: length mismatch");
  if (src.size() < 3)
    throw DegenerateGeometry("fit_rigid: fewer than 3 correspondences cannot fix a rotation");
  const Vec3 cs = centroid(src);
  const Vec3 cd = centroid(dst);
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  // Rank <= 1: rotation about the remaining axis is undetermined.
  if (!(sv(0) > 0.0) || !(sv(1) > 1e-12 * sv(0)))
    throw DegenerateGeometry("fit_rigid: collinear or zero-spread correspondences");

  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = v * d * u.transpose();
  return {r, cd - r * cs};
}

RigidTransform fit_rigid(const PointSet& src, const PointSet& dst) {
  return fit_rigid(std::span<const Vec3>(src.coords()), std::span<const Vec3>(dst.coords()));
}

PointSet apply_transform(const RigidTransform& t, const PointSet& points) {
  std::vector<Vec3> c;
  c.reserve(points.size());
  for (const auto& p : points.coords()) c.push_back(t.apply(p));
  if (!points.has_normals()) return PointSet(std::move(c));
  std::vector<Vec3> n;
  n.reserve(points.size());
  for (const auto& q : points.normals()) n.push_back((t.rotation() * q).normalized());
  return PointSet(std::move(c), std::move(n));
}

double alignment_error(const RigidTransform& t, std::span<const Vec3> src,
                       std::span<const Vec3> dst) {
  if (src.size() != dst.size()) throw InvalidArgument("alignment_error: length mismatch");
  if (src.empty()) throw InvalidArgument("alignment_error: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) s += (t.apply(src[i]) - dst[i]).squaredNorm();
  return s / static_cast<double>(src.size());
}

double alignment_error(const RigidTransform& t, const PointSet& src, const PointSet& dst) {
  return alignment_error(t, std::span<const Vec3>(src.coords()),
                         std::span<const Vec3>(dst.coords()));
}

Mat3 axis_angle(const Vec3& axis, double angle_rad) {
  if (axis.norm() == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

}  // namespace cmf
