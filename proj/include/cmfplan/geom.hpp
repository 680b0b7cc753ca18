#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace cmf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// N x 3 coordinates in millimeters with optional unit normals.
class PointSet {
 public:
  explicit PointSet(std::vector<Vec3> coords);
  PointSet(std::vector<Vec3> coords, std::vector<Vec3> normals);

  std::size_t size() const noexcept { return coords_.size(); }
  const std::vector<Vec3>& coords() const noexcept { return coords_; }
  const Vec3& operator[](std::size_t i) const { return coords_[i]; }
  bool has_normals() const noexcept { return normals_.has_value(); }
  const std::vector<Vec3>& normals() const;

  PointSet subset(std::span<const std::size_t> indices) const;
  PointSet without_normals() const { return PointSet(coords_); }

  friend bool operator==(const PointSet&, const PointSet&) = default;

 private:
  std::vector<Vec3> coords_;
  std::optional<std::vector<Vec3>> normals_;
};

enum class SegmentLabel { LF, DI, RP, LP, CRANIUM };

inline constexpr std::array<SegmentLabel, 4> kMovableSegments = {
    SegmentLabel::LF, SegmentLabel::DI, SegmentLabel::RP, SegmentLabel::LP};

std::string_view to_string(SegmentLabel s);
SegmentLabel segment_from_string(std::string_view name);

/// Mirror counterpart under a sagittal flip (RP <-> LP); others map to themselves.
SegmentLabel mirrored(SegmentLabel s);

/// Bony point set with one segment label per point. Every movable segment
/// that is present has at least 4 non-coplanar points.
class SegmentedBone {
 public:
  SegmentedBone(PointSet points, std::vector<SegmentLabel> labels);

  const PointSet& points() const noexcept { return points_; }
  const std::vector<SegmentLabel>& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return points_.size(); }

  /// Indices of points carrying label `s`, ascending.
  std::vector<std::size_t> indices_of(SegmentLabel s) const;
  /// Movable segments with at least one point, in kMovableSegments order.
  std::vector<SegmentLabel> movable_present() const;

  friend bool operator==(const SegmentedBone&, const SegmentedBone&) = default;

 private:
  PointSet points_;
  std::vector<SegmentLabel> labels_;
};

/// Proper rigid motion x -> R x + t (t in mm).
class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  /// Throws InvalidArgument unless R^T R = I and det R = +1 within 1e-10.
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_homogeneous(const Mat4& m);

  const Mat3& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  RigidTransform inverse() const;
  /// (this * other)(x) = this(other(x)).
  RigidTransform operator*(const RigidTransform& other) const;
  Mat4 homogeneous() const;

  friend bool operator==(const RigidTransform&, const RigidTransform&) = default;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

/// Per-movable-segment rigid transforms. Never holds a CRANIUM entry.
class BonyPlan {
 public:
  BonyPlan() = default;
  explicit BonyPlan(std::map<SegmentLabel, RigidTransform> transforms);

  static BonyPlan identity(std::span<const SegmentLabel> segments);

  void set(SegmentLabel s, const RigidTransform& t);
  bool contains(SegmentLabel s) const { return transforms_.count(s) != 0; }
  const RigidTransform& at(SegmentLabel s) const;
  const std::map<SegmentLabel, RigidTransform>& transforms() const noexcept {
    return transforms_;
  }
  std::size_t size() const noexcept { return transforms_.size(); }

  friend bool operator==(const BonyPlan&, const BonyPlan&) = default;

 private:
  std::map<SegmentLabel, RigidTransform> transforms_;
};

/// Greedy farthest-point sampling. The first index is `seed_index`; each
/// following index maximizes the minimum distance to those already chosen,
/// ties going to the lowest index.
std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t k,
                                               std::size_t seed_index);
std::vector<std::size_t> farthest_point_sample(const PointSet& points, std::size_t k,
                                               std::size_t seed_index = 0);

/// Least-squares rigid alignment of index-corresponded sets (Kabsch with
/// determinant correction). Throws DegenerateGeometry on rank <= 1 input.
RigidTransform fit_rigid(std::span<const Vec3> src, std::span<const Vec3> dst);
RigidTransform fit_rigid(const PointSet& src, const PointSet& dst);

PointSet apply_transform(const RigidTransform& t, const PointSet& points);

/// Mean squared residual (1/N) sum |R src_i + T - dst_i|^2, in mm^2.
double alignment_error(const RigidTransform& t, std::span<const Vec3> src,
                       std::span<const Vec3> dst);
double alignment_error(const RigidTransform& t, const PointSet& src, const PointSet& dst);

/// Rodrigues rotation about a (not necessarily unit) axis.
Mat3 axis_angle(const Vec3& axis, double angle_rad);

Vec3 centroid(std::span<const Vec3> points);

}  // namespace cmf
