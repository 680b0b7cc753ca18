#pragma once

// Facial simulator: bony plan -> predicted facial movement on the sampled
// face -> interpolated displacement of every mesh vertex.

#include <span>
#include <vector>

#include "cmfplan/acmt.hpp"
#include "cmfplan/mesh.hpp"
#include "cmfplan/planner.hpp"

namespace cmf {

/// Moves every point by its segment's transform; cranium points stay put.
/// Throws InvalidArgument if a movable segment present in `bone` has no entry.
PointSet apply_plan(const SegmentedBone& bone, const BonyPlan& plan);

struct SimulatedFace {
  FaceMesh mesh;
  MovementField sampled_movement;  // V_F' on the subsampled face
};

/// Per-vertex displacement as the inverse-distance-weighted average
/// (weights 1 / (d + 1e-9)) of the 3 nearest sampled movements.
std::vector<Vec3> interpolate_movement(std::span<const Vec3> vertices,
                                       const MovementField& sampled);

/// Full-mesh simulation with a learned bone-to-face model.
SimulatedFace simulate(const AcmtModel& fs_model, const PlanningCase& c, const BonyPlan& plan);

class FacialSimulator {
 public:
  virtual ~FacialSimulator() = default;
  virtual SimulatedFace simulate(const PlanningCase& c, const BonyPlan& plan) const = 0;
};

class LearnedSimulator final : public FacialSimulator {
 public:
  explicit LearnedSimulator(const AcmtModel& model);
  SimulatedFace simulate(const PlanningCase& c, const BonyPlan& plan) const override;

 private:
  const AcmtModel& model_;
};

/// The phantom tissue kernel used as a simulator, evaluated directly at
/// every mesh vertex.
class OracleSimulator final : public FacialSimulator {
 public:
  explicit OracleSimulator(double sigma);
  SimulatedFace simulate(const PlanningCase& c, const BonyPlan& plan) const override;
  double sigma() const { return sigma_; }

 private:
  double sigma_;
};

}  // namespace cmf
