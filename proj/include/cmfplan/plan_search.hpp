#pragma once

// Self-verified planning: plan under random mirror/translation
// perturbations, map every plan back to the original frame, simulate each
// and keep the one whose simulated face lands closest to the desired face.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cmfplan/geom.hpp"
#include "cmfplan/mesh.hpp"
#include "cmfplan/planner.hpp"
#include "cmfplan/simulator.hpp"

namespace cmf {

inline constexpr double kMaxPerturbationMm = 10.0;

/// x -> F x + t with F = diag(-1, 1, 1) when flipped (mirror about the
/// sagittal plane x = 0), identity otherwise.
struct Perturbation {
  bool flip = false;
  Vec3 translation = Vec3::Zero();

  Perturbation() = default;
  /// Throws InvalidArgument if any translation component leaves [-10, 10] mm.
  Perturbation(bool flip, const Vec3& translation);

  Mat3 linear() const;
  Vec3 apply(const Vec3& p) const { return linear() * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return linear() * (p - translation); }
  bool is_identity() const { return !flip && translation.isZero(0.0); }

  friend bool operator==(const Perturbation&, const Perturbation&) = default;
};

/// Candidate 0 is always the identity; the rest flip with probability 0.5
/// and translate uniformly within the +-10 mm cube.
std::vector<Perturbation> generate_perturbations(std::size_t n, std::uint64_t seed);

PointSet perturb_points(const PointSet& points, const Perturbation& p);
FaceMesh perturb_mesh(const FaceMesh& mesh, const Perturbation& p);
/// Transforms every surface identically; a flip swaps RP and LP labels.
PlanningCase perturb_case(const PlanningCase& c, const Perturbation& p);
/// Conjugates a plan estimated in the perturbed frame back to the original
/// frame (and swaps RP/LP back on a flip).
BonyPlan relocalize(const BonyPlan& plan, const Perturbation& p);

enum class SelectionMetric { Corresponded, SymmetricSurface };

/// Mean per-vertex distance between the simulated face (at the sampled
/// vertices) and the desired face.
double face_score(const FaceMesh& simulated, const PlanningCase& c, const PointSet& desired_face,
                  SelectionMetric metric = SelectionMetric::Corresponded);

struct CandidateResult {
  Perturbation perturbation;
  BonyPlan plan;  // in the original frame
  FaceMesh simulated_face;
  double score = 0.0;  // mm, lower is better
};

struct SearchResult {
  std::size_t winner = 0;
  std::vector<CandidateResult> candidates;

  const CandidateResult& best() const { return candidates.at(winner); }
};

struct SearchOptions {
  std::size_t candidates = 10;
  std::uint64_t seed = 0;
  SelectionMetric metric = SelectionMetric::Corresponded;
  int jobs = 1;

  friend bool operator==(const SearchOptions&, const SearchOptions&) = default;
};

/// Simulates every candidate and returns the argmin of the score, lowest
/// index on ties. Candidates are independent and may be simulated concurrently.
SearchResult select_plan(const PlanningCase& c, std::span<const BonyPlan> candidates,
                         const FacialSimulator& simulator, const PointSet& desired_face,
                         SelectionMetric metric = SelectionMetric::Corresponded, int jobs = 1);

using Planner = std::function<BonyPlan(const PlanningCase&)>;

/// Full loop: perturb, plan, re-localize, simulate, select.
SearchResult run(const Planner& planner, const FacialSimulator& simulator, const PlanningCase& c,
                 const SearchOptions& opts);
SearchResult run(const AcmtModel& bp_model, const AcmtModel& fs_model, const PlanningCase& c,
                 const SearchOptions& opts, const PlannerOptions& planner_opts = {});

}  // namespace cmf
