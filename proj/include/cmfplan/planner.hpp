#pragma once

// Bony planner: desired facial change -> non-rigid bony displacement ->
// per-segment rigid transforms.

#include <vector>

#include "cmfplan/acmt.hpp"
#include "cmfplan/geom.hpp"
#include "cmfplan/mesh.hpp"

namespace cmf {

struct PlanningCase {
  PointSet pre_face;       // subsampled facial points
  SegmentedBone pre_bone;  // subsampled bony points with segment labels
  PointSet desired_face;   // corresponded with pre_face
  FaceMesh face_mesh;      // full pre-operative facial surface
  std::vector<std::size_t> face_sample_indices;  // pre_face[i] is face_mesh.vertices[idx[i]]

  void validate() const;
  friend bool operator==(const PlanningCase&, const PlanningCase&) = default;
};

struct PlannerOptions {
  bool cranium_context = true;  // feed cranium points to the network as context

  friend bool operator==(const PlannerOptions&, const PlannerOptions&) = default;
};

/// Desired facial movement anchored on the pre-operative face.
MovementField desired_movement(const PlanningCase& c);

/// P_B_pdt = pre-bone + predicted bony movement; same order and labels as pre_bone.
PointSet predict_nonrigid(const AcmtModel& bp_model, const PlanningCase& c,
                          const PlannerOptions& opts = {});

/// Rigid fit per movable segment; the cranium is ignored. A degenerate
/// segment raises DegenerateGeometry naming it.
BonyPlan regress_plan(const SegmentedBone& pre, const PointSet& pdt);

BonyPlan plan_case(const AcmtModel& bp_model, const PlanningCase& c,
                   const PlannerOptions& opts = {});

}  // namespace cmf
