#include "cmfplan/plan_search.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <random>

#include "cmfplan/errors.hpp"
#include "cmfplan/kernels.hpp"

namespace cmf {

namespace {

template <class Fn>
void parallel_indices(std::size_t n, int jobs, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double mean_nearest(std::span<const Vec3> from, std::span<const Vec3> to) {
  const auto nb = kernels::parallel::knn(from, to, 1);
  double s = 0.0;
  for (double d : nb.distance) s += d;
  return s / static_cast<double>(from.size());
}

}  // namespace

Perturbation::Perturbation(bool f, const Vec3& t) : flip(f), translation(t) {
  if (!t.allFinite() || t.cwiseAbs().maxCoeff() > kMaxPerturbationMm)
    throw InvalidArgument("perturbation translation components must lie in [-10, 10] mm");
}

Mat3 Perturbation::linear() const {
  Mat3 f = Mat3::Identity();
  if (flip) f(0, 0) = -1.0;
  return f;
}

std::vector<Perturbation> generate_perturbations(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("at least one perturbation is required");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> shift(-kMaxPerturbationMm, kMaxPerturbationMm);
  std::vector<Perturbation> out{Perturbation{}};
  while (out.size() < n) {
    const bool flip = coin(rng);
    const double x = shift(rng);
    const double y = shift(rng);
    const double z = shift(rng);
    out.emplace_back(flip, Vec3(x, y, z));
  }
  return out;
}

PointSet perturb_points(const PointSet& points, const Perturbation& p) {
  const Mat3 f = p.linear();
  std::vector<Vec3> c;
  c.reserve(points.size());
  for (const auto& x : points.coords()) c.push_back(f * x + p.translation);
  if (!points.has_normals()) return PointSet(std::move(c));
  std::vector<Vec3> n;
  n.reserve(points.size());
  for (const auto& x : points.normals()) n.push_back(f * x);
  return PointSet(std::move(c), std::move(n));
}

FaceMesh perturb_mesh(const FaceMesh& mesh, const Perturbation& p) {
  FaceMesh out;
  out.vertices.reserve(mesh.vertices.size());
  const Mat3 f = p.linear();
  for (const auto& v : mesh.vertices) out.vertices.push_back(f * v + p.translation);
  out.triangles = mesh.triangles;
  if (p.flip)
    for (auto& t : out.triangles) std::swap(t[1], t[2]);
  return out;
}

PlanningCase perturb_case(const PlanningCase& c, const Perturbation& p) {
  std::vector<SegmentLabel> labels = c.pre_bone.labels();
  if (p.flip)
    for (auto& l : labels) l = mirrored(l);
  return PlanningCase{perturb_points(c.pre_face, p),
                      SegmentedBone(perturb_points(c.pre_bone.points(), p), std::move(labels)),
                      perturb_points(c.desired_face, p), perturb_mesh(c.face_mesh, p),
                      c.face_sample_indices};
}

BonyPlan relocalize(const BonyPlan& plan, const Perturbation& p) {
  const Mat3 f = p.linear();
  BonyPlan out;
  for (const auto& [s, t] : plan.transforms()) {
    const Mat3 r = f * t.rotation() * f;
    const Vec3 tr = f * (t.rotation() * p.translation + t.translation() - p.translation);
    out.set(p.flip ? mirrored(s) : s, RigidTransform(r, tr));
  }
  return out;
}

double face_score(const FaceMesh& simulated, const PlanningCase& c, const PointSet& desired_face,
                  SelectionMetric metric) {
  if (desired_face.size() != c.face_sample_indices.size())
    throw InvalidArgument("desired face must match the facial samples");
  std::vector<Vec3> sim;
  sim.reserve(c.face_sample_indices.size());
  for (auto i : c.face_sample_indices) sim.push_back(simulated.vertices.at(i));
  if (metric == SelectionMetric::SymmetricSurface)
    return 0.5 * (mean_nearest(sim, desired_face.coords()) +
                  mean_nearest(desired_face.coords(), sim));
  double s = 0.0;
  for (std::size_t i = 0; i < sim.size(); ++i) s += (sim[i] - desired_face[i]).norm();
  return s / static_cast<double>(sim.size());
}

SearchResult select_plan(const PlanningCase& c, std::span<const BonyPlan> candidates,
                         const FacialSimulator& simulator, const PointSet& desired_face,
                         SelectionMetric metric, int jobs) {
  if (candidates.empty()) throw InvalidArgument("select_plan: no candidate plans");
  SearchResult result;
  result.candidates.resize(candidates.size());
  parallel_indices(candidates.size(), jobs, [&](std::size_t i) {
    auto& r = result.candidates[i];
    r.plan = candidates[i];
    r.simulated_face = simulator.simulate(c, candidates[i]).mesh;
    r.score = face_score(r.simulated_face, c, desired_face, metric);
  });
  for (std::size_t i = 1; i < result.candidates.size(); ++i)
    if (result.candidates[i].score < result.candidates[result.winner].score) result.winner = i;
  return result;
}

SearchResult run(const Planner& planner, const FacialSimulator& simulator, const PlanningCase& c,
                 const SearchOptions& opts) {
  const auto perturbations = generate_perturbations(opts.candidates, opts.seed);
  std::vector<BonyPlan> plans(perturbations.size());
  parallel_indices(perturbations.size(), opts.jobs, [&](std::size_t i) {
    const auto& p = perturbations[i];
    plans[i] = p.is_identity() ? planner(c) : relocalize(planner(perturb_case(c, p)), p);
  });
  SearchResult result = select_plan(c, plans, simulator, c.desired_face, opts.metric, opts.jobs);
  for (std::size_t i = 0; i < perturbations.size(); ++i)
    result.candidates[i].perturbation = perturbations[i];
  return result;
}

SearchResult run(const AcmtModel& bp_model, const AcmtModel& fs_model, const PlanningCase& c,
                 const SearchOptions& opts, const PlannerOptions& planner_opts) {
  const LearnedSimulator sim(fs_model);
  return run([&](const PlanningCase& pc) { return plan_case(bp_model, pc, planner_opts); }, sim,
             c, opts);
}

}  // namespace cmf
