#pragma once

// Synthetic cases: parametric bone segments and an enclosing facial surface,
// a ground-truth plan, and a Gaussian tissue kernel that turns bony movement
// into facial movement.

#include <cstdint>
#include <utility>
#include <vector>

#include "cmfplan/acmt.hpp"
#include "cmfplan/plan_search.hpp"
#include "cmfplan/planner.hpp"

namespace cmf {

struct PhantomSpec {
  std::size_t points_per_segment = 1024;
  std::size_t cranium_points = 1024;
  std::size_t facial_points = 4096;
  double sigma = 15.0;               // tissue kernel width, mm
  double max_rotation_deg = 10.0;    // per segment, about its centroid
  double max_translation = 8.0;      // per segment centroid movement, mm
  double mean_advancement = 3.5;     // systematic anterior movement of LF / DI, mm
  double anatomy_jitter = 0.05;      // relative radius variation between cases
  std::size_t augment_copies = 1;    // rigid copies per training case when augmenting
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

/// 256-point clouds: 4 x 48 movable + 64 cranium bone points, 256 facial points.
PhantomSpec desk_phantom_spec();

struct PhantomCase {
  PlanningCase planning;
  BonyPlan gt_plan;
  PhantomSpec spec;
  std::uint64_t seed = 0;

  PointSet post_bone() const;
  friend bool operator==(const PhantomCase&, const PhantomCase&) = default;
};

/// Face point i moves by sum_j w_ij (post_j - pre_j) / sum_j w_ij with
/// w_ij = exp(-|face_i - pre_j|^2 / sigma^2); zero when every weight underflows.
MovementField tissue_oracle(const PointSet& pre_bone, const PointSet& post_bone,
                            const PointSet& face, double sigma);

PhantomCase generate_case(const PhantomSpec& spec, std::uint64_t seed);

enum class Split : std::uint64_t { Train = 0, Test = 1 };
/// Disjoint seed ranges per split: (base << 21) | (split << 20) | index.
std::uint64_t case_seed(std::uint64_t base, Split split, std::size_t index);

/// Face-driven bone movement sample: face + desired facial movement -> bone movement.
MovementSample bp_sample(const PhantomCase& c, const Perturbation& p = {});
/// Bone-driven face movement sample.
MovementSample fs_sample(const PhantomCase& c, const Perturbation& p = {});

struct PhantomDataset {
  std::vector<PhantomCase> train_cases;
  std::vector<PhantomCase> test_cases;
  /// (training case, rigid augmentation) for every training sample.
  std::vector<std::pair<std::size_t, Perturbation>> train_views;
  std::vector<MovementSample> bp_train;
  std::vector<MovementSample> fs_train;
};

/// Identity views per training case, plus `spec.augment_copies` random
/// flip/translation copies each when `augment` is set.
std::vector<std::pair<std::size_t, Perturbation>> training_views(
    const std::vector<PhantomCase>& cases, bool augment);

PhantomDataset build_dataset(const PhantomSpec& spec, std::size_t n_train, std::size_t n_test,
                             bool augment);

}  // namespace cmf
