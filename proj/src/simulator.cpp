#include "cmfplan/simulator.hpp"

#include <string>

#include "cmfplan/errors.hpp"
#include "cmfplan/kernels.hpp"

namespace cmf {

namespace {
constexpr double kInterpEps = 1e-9;

std::vector<Vec3> bone_displacement(const SegmentedBone& bone, const BonyPlan& plan) {
  const PointSet post = apply_plan(bone, plan);
  std::vector<Vec3> d(bone.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = post[i] - bone.points()[i];
  return d;
}

FaceMesh displace(const FaceMesh& mesh, std::span<const Vec3> displacement) {
  FaceMesh out = mesh;
  for (std::size_t i = 0; i < out.vertices.size(); ++i) out.vertices[i] += displacement[i];
  return out;
}
}  // namespace

PointSet apply_plan(const SegmentedBone& bone, const BonyPlan& plan) {
  for (auto s : bone.movable_present())
    if (!plan.contains(s))
      throw InvalidArgument("plan is missing segment " + std::string(to_string(s)));
  std::vector<Vec3> out(bone.points().coords());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto s = bone.labels()[i];
    if (s != SegmentLabel::CRANIUM) out[i] = plan.at(s).apply(out[i]);
  }
  if (!bone.points().has_normals()) return PointSet(std::move(out));
  std::vector<Vec3> n(bone.points().normals());
  for (std::size_t i = 0; i < n.size(); ++i) {
    const auto s = bone.labels()[i];
    if (s != SegmentLabel::CRANIUM) n[i] = (plan.at(s).rotation() * n[i]).normalized();
  }
  return PointSet(std::move(out), std::move(n));
}

std::vector<Vec3> interpolate_movement(std::span<const Vec3> vertices,
                                       const MovementField& sampled) {
  const auto nb = kernels::parallel::knn(vertices, sampled.base.coords(), 3);
  std::vector<Vec3> out(vertices.size(), Vec3::Zero());
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    double wsum = 0.0;
    Vec3 acc = Vec3::Zero();
    for (std::size_t q = 0; q < nb.k; ++q) {
      const double w = 1.0 / (nb.distance[i * nb.k + q] + kInterpEps);
      wsum += w;
      acc += w * sampled.vectors[nb.index[i * nb.k + q]];
    }
    out[i] = acc / wsum;
  }
  return out;
}

SimulatedFace simulate(const AcmtModel& fs_model, const PlanningCase& c, const BonyPlan& plan) {
  if (fs_model.direction != Direction::BoneToFace)
    throw InvalidArgument("facial simulation needs a bone-to-face model");
  c.face_mesh.validate();
  const MovementField driver(c.pre_bone.points().without_normals(),
                             bone_displacement(c.pre_bone, plan));
  MovementField vf = forward(fs_model, driver.base, c.pre_face.without_normals(), driver);
  const auto disp = interpolate_movement(c.face_mesh.vertices, vf);
  return {displace(c.face_mesh, disp), std::move(vf)};
}

LearnedSimulator::LearnedSimulator(const AcmtModel& model) : model_(model) {
  if (model.direction != Direction::BoneToFace)
    throw InvalidArgument("facial simulation needs a bone-to-face model");
}

SimulatedFace LearnedSimulator::simulate(const PlanningCase& c, const BonyPlan& plan) const {
  return cmf::simulate(model_, c, plan);
}

OracleSimulator::OracleSimulator(double sigma) : sigma_(sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("kernel width must be positive");
}

SimulatedFace OracleSimulator::simulate(const PlanningCase& c, const BonyPlan& plan) const {
  c.face_mesh.validate();
  const PointSet post = apply_plan(c.pre_bone, plan);
  const auto disp = kernels::parallel::kernel_displacement(
      c.face_mesh.vertices, c.pre_bone.points().coords(), post.coords(), sigma_);
  std::vector<Vec3> sampled;
  sampled.reserve(c.face_sample_indices.size());
  for (auto i : c.face_sample_indices) sampled.push_back(disp.at(i));
  return {displace(c.face_mesh, disp), MovementField(c.pre_face.without_normals(), sampled)};
}

}  // namespace cmf
