#include "cmfplan/planner.hpp"

#include <string>

#include "cmfplan/errors.hpp"

namespace cmf {

void FaceMesh::validate() const {
  if (vertices.empty()) throw InvalidArgument("mesh has no vertices");
  for (const auto& v : vertices)
    if (!v.allFinite()) throw InvalidArgument("mesh vertices must be finite");
  for (const auto& t : triangles)
    for (auto i : t)
      if (i >= vertices.size()) throw InvalidArgument("triangle index out of range");
}

void PlanningCase::validate() const {
  if (desired_face.size() != pre_face.size())
    throw InvalidArgument("desired face must be corresponded with the pre-operative face");
  face_mesh.validate();
  if (face_sample_indices.size() != pre_face.size())
    throw InvalidArgument("one mesh index per facial sample is required");
  for (std::size_t i = 0; i < face_sample_indices.size(); ++i)
    if (face_sample_indices[i] >= face_mesh.vertices.size())
      throw InvalidArgument("facial sample index out of range");
}

MovementField desired_movement(const PlanningCase& c) {
  if (c.desired_face.size() != c.pre_face.size())
    throw InvalidArgument("desired face must be corresponded with the pre-operative face");
  std::vector<Vec3> v(c.pre_face.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = c.desired_face[i] - c.pre_face[i];
  return {c.pre_face, std::move(v)};
}

PointSet predict_nonrigid(const AcmtModel& bp_model, const PlanningCase& c,
                          const PlannerOptions& opts) {
  if (bp_model.direction != Direction::FaceToBone)
    throw InvalidArgument("bony planning needs a face-to-bone model");
  const auto& bone = c.pre_bone.points().coords();
  const auto mv = desired_movement(c);

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < bone.size(); ++i)
    if (opts.cranium_context || c.pre_bone.labels()[i] != SegmentLabel::CRANIUM) keep.push_back(i);
  std::vector<Vec3> target;
  target.reserve(keep.size());
  for (auto i : keep) target.push_back(bone[i]);

  const Tensor2 v = acmt_forward(bp_model, c.pre_face.coords(), target, mv.vectors);
  std::vector<Vec3> out(bone);
  for (std::size_t k = 0; k < keep.size(); ++k)
    out[keep[k]] += Vec3(v(0, k), v(1, k), v(2, k));
  return PointSet(std::move(out));
}

BonyPlan regress_plan(const SegmentedBone& pre, const PointSet& pdt) {
  if (pdt.size() != pre.size())
    throw InvalidArgument("predicted bone must be corresponded with the pre-operative bone");
  BonyPlan plan;
  for (auto s : pre.movable_present()) {
    const auto idx = pre.indices_of(s);
    std::vector<Vec3> src, dst;
    src.reserve(idx.size());
    dst.reserve(idx.size());
    for (auto i : idx) {
      src.push_back(pre.points()[i]);
      dst.push_back(pdt[i]);
    }
    try {
      plan.set(s, fit_rigid(src, dst));
    } catch (const DegenerateGeometry& e) {
      throw DegenerateGeometry("segment " + std::string(to_string(s)) + ": " + e.what());
    }
  }
  return plan;
}

BonyPlan plan_case(const AcmtModel& bp_model, const PlanningCase& c, const PlannerOptions& opts) {
  return regress_plan(c.pre_bone, predict_nonrigid(bp_model, c, opts));
}

}  // namespace cmf
