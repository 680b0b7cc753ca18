#include "cmfplan/phantom.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <random>

#include "cmfplan/errors.hpp"
#include "cmfplan/kernels.hpp"
#include "cmfplan/simulator.hpp"

namespace cmf {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Patch of the ellipsoid center + (rx cos v sin u, ry cos v cos u, rz sin v);
// u is the azimuth from anterior (+y) towards patient left (+x), v the elevation.
struct Patch {
  Vec3 center;
  Vec3 radii;
  double u0, u1, v0, v1;  // degrees

  Vec3 at(double u, double v) const {
    u *= kDeg;
    v *= kDeg;
    return center + Vec3(radii.x() * std::cos(v) * std::sin(u), radii.y() * std::cos(v) * std::cos(u),
                         radii.z() * std::sin(v));
  }
  Vec3 normal(const Vec3& p) const {
    const Vec3 d = p - center;
    return Vec3(d.x() / (radii.x() * radii.x()), d.y() / (radii.y() * radii.y()),
                d.z() / (radii.z() * radii.z()))
        .normalized();
  }
};

struct Anatomy {
  Patch lf{{0, 0, 0}, {45, 62, 35}, -55, 55, -10, 25};
  Patch di{{0, 0, -30}, {42, 52, 25}, -60, 60, -55, -5};
  Patch rp{{0, -5, -20}, {50, 45, 35}, -115, -80, -45, 35};
  Patch lp{{0, -5, -20}, {50, 45, 35}, 80, 115, -45, 35};
  Patch cranium{{0, -10, 30}, {68, 82, 55}, -100, 100, 15, 65};
  Patch face{{0, -5, 5}, {76, 86, 100}, -110, 110, -60, 55};
};

Patch& patch_of(Anatomy& a, SegmentLabel s) {
  switch (s) {
    case SegmentLabel::LF: return a.lf;
    case SegmentLabel::DI: return a.di;
    case SegmentLabel::RP: return a.rp;
    case SegmentLabel::LP: return a.lp;
    case SegmentLabel::CRANIUM: return a.cranium;
  }
  throw InvalidArgument("unknown segment");
}

void jitter_anatomy(Anatomy& a, double amount, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-amount, amount);
  const Vec3 head(1 + u(rng), 1 + u(rng), 1 + u(rng));
  for (auto* p : {&a.lf, &a.di, &a.rp, &a.lp, &a.cranium, &a.face}) {
    p->center = p->center.cwiseProduct(head);
    p->radii = p->radii.cwiseProduct(head);
  }
  for (auto* p : {&a.lf, &a.di, &a.rp, &a.lp}) p->radii *= 1 + 0.5 * u(rng);
}

void sample_patch(const Patch& p, std::size_t count, std::mt19937_64& rng, std::vector<Vec3>& pts,
                  std::vector<Vec3>& normals) {
  std::uniform_real_distribution<double> du(p.u0, p.u1), dv(p.v0, p.v1);
  std::vector<Vec3> cand(4 * count);
  for (auto& c : cand) {
    const double u = du(rng);
    c = p.at(u, dv(rng));
  }
  for (auto i : farthest_point_sample(cand, count, 0)) {
    pts.push_back(cand[i]);
    normals.push_back(p.normal(cand[i]));
  }
}

FaceMesh face_grid(const Patch& p, std::size_t target_vertices) {
  const double ratio = (p.u1 - p.u0) / (p.v1 - p.v0);
  const auto nu = static_cast<std::size_t>(std::ceil(std::sqrt(target_vertices * ratio)));
  const auto nv = std::max<std::size_t>(2, (target_vertices + nu - 1) / nu);
  FaceMesh m;
  for (std::size_t j = 0; j < nv; ++j)
    for (std::size_t i = 0; i < nu; ++i)
      m.vertices.push_back(p.at(p.u0 + (p.u1 - p.u0) * static_cast<double>(i) / (nu - 1),
                                p.v0 + (p.v1 - p.v0) * static_cast<double>(j) / (nv - 1)));
  auto id = [nu](std::size_t i, std::size_t j) { return static_cast<std::uint32_t>(j * nu + i); };
  for (std::size_t j = 0; j + 1 < nv; ++j)
    for (std::size_t i = 0; i + 1 < nu; ++i) {
      m.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return m;
}

Vec3 random_axis(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vec3 a(n(rng), n(rng), n(rng));
    if (a.norm() > 1e-6) return a.normalized();
  }
}

BonyPlan draw_plan(const PhantomSpec& spec, const SegmentedBone& bone, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double bias = std::min(spec.mean_advancement, spec.max_translation);
  const double spread = spec.max_translation - bias;
  BonyPlan plan;
  for (auto s : kMovableSegments) {
    std::vector<Vec3> seg;
    for (auto i : bone.indices_of(s)) seg.push_back(bone.points()[i]);
    const Vec3 c = centroid(seg);
    const Mat3 r = axis_angle(random_axis(rng), spec.max_rotation_deg * kDeg * unit(rng));
    const double forward =
        (s == SegmentLabel::LF || s == SegmentLabel::DI) ? bias : 0.5 * bias;
    const Vec3 m = Vec3(0.0, forward, 0.0) + random_axis(rng) * (spread * unit(rng));
    plan.set(s, RigidTransform(r, c + m - r * c));
  }
  return plan;
}

std::vector<Vec3> difference(const PointSet& a, const PointSet& b) {
  std::vector<Vec3> d(a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

std::vector<Vec3> perturbed(std::span<const Vec3> pts, const Perturbation& p) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const auto& x : pts) out.push_back(p.apply(x));
  return out;
}

std::vector<Vec3> perturbed_vectors(std::span<const Vec3> v, const Perturbation& p) {
  const Mat3 f = p.linear();
  std::vector<Vec3> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(f * x);
  return out;
}

}  // namespace

void PhantomSpec::validate() const {
  if (points_per_segment < 4) throw InvalidArgument("need at least 4 points per bony segment");
  if (cranium_points < 1) throw InvalidArgument("need at least 1 cranium point");
  if (facial_points < 3) throw InvalidArgument("need at least 3 facial points");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sigma must be positive");
  if (!(max_rotation_deg >= 0.0 && max_rotation_deg <= 90.0))
    throw InvalidArgument("max rotation must lie in [0, 90] degrees");
  if (!(max_translation >= 0.0) || !std::isfinite(max_translation))
    throw InvalidArgument("max translation must be non-negative");
  if (!(mean_advancement >= 0.0) || !std::isfinite(mean_advancement))
    throw InvalidArgument("mean advancement must be non-negative");
  if (!(anatomy_jitter >= 0.0 && anatomy_jitter < 0.5))
    throw InvalidArgument("anatomy jitter must lie in [0, 0.5)");
}

PhantomSpec desk_phantom_spec() {
  PhantomSpec s;
  s.points_per_segment = 48;
  s.cranium_points = 64;
  s.facial_points = 256;
  return s;
}

PointSet PhantomCase::post_bone() const { return apply_plan(planning.pre_bone, gt_plan); }

MovementField tissue_oracle(const PointSet& pre_bone, const PointSet& post_bone,
                            const PointSet& face, double sigma) {
  return {face.without_normals(),
          kernels::parallel::kernel_displacement(face.coords(), pre_bone.coords(),
                                                 post_bone.coords(), sigma)};
}

PhantomCase generate_case(const PhantomSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  Anatomy a;
  jitter_anatomy(a, spec.anatomy_jitter, rng);

  std::vector<Vec3> pts, normals;
  std::vector<SegmentLabel> labels;
  for (auto s : {SegmentLabel::LF, SegmentLabel::DI, SegmentLabel::RP, SegmentLabel::LP,
                 SegmentLabel::CRANIUM}) {
    const std::size_t n = s == SegmentLabel::CRANIUM ? spec.cranium_points : spec.points_per_segment;
    sample_patch(patch_of(a, s), n, rng, pts, normals);
    labels.insert(labels.end(), n, s);
  }
  SegmentedBone bone(PointSet(std::move(pts), std::move(normals)), std::move(labels));

  const auto target = std::max(spec.facial_points + 16,
                               static_cast<std::size_t>(std::ceil(1.25 * spec.facial_points)));
  FaceMesh mesh = face_grid(a.face, target);
  auto idx = farthest_point_sample(mesh.vertices, spec.facial_points, 0);
  std::vector<Vec3> face_pts;
  for (auto i : idx) face_pts.push_back(mesh.vertices[i]);
  PointSet pre_face(std::move(face_pts));

  BonyPlan plan = draw_plan(spec, bone, rng);
  const PointSet post = apply_plan(bone, plan);
  PointSet desired = tissue_oracle(bone.points(), post, pre_face, spec.sigma).displaced();

  PhantomCase c{PlanningCase{std::move(pre_face), std::move(bone), std::move(desired),
                             std::move(mesh), std::move(idx)},
                std::move(plan), spec, seed};
  c.planning.validate();
  return c;
}

std::uint64_t case_seed(std::uint64_t base, Split split, std::size_t index) {
  if (index >= (std::size_t{1} << 20)) throw InvalidArgument("case index out of range");
  return (base << 21) | (static_cast<std::uint64_t>(split) << 20) | index;
}

MovementSample bp_sample(const PhantomCase& c, const Perturbation& p) {
  const auto& pc = c.planning;
  const auto& bone = pc.pre_bone.points();
  return {perturbed(pc.pre_face.coords(), p),
          perturbed_vectors(difference(pc.desired_face, pc.pre_face), p),
          perturbed(bone.coords(), p), perturbed_vectors(difference(c.post_bone(), bone), p)};
}

MovementSample fs_sample(const PhantomCase& c, const Perturbation& p) {
  MovementSample s = bp_sample(c, p);
  std::swap(s.source_points, s.target_points);
  std::swap(s.source_movement, s.target_movement);
  return s;
}

std::vector<std::pair<std::size_t, Perturbation>> training_views(
    const std::vector<PhantomCase>& cases, bool augment) {
  std::vector<std::pair<std::size_t, Perturbation>> views;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    views.emplace_back(i, Perturbation{});
    if (!augment) continue;
    const auto copies = cases[i].spec.augment_copies;
    const auto ps = generate_perturbations(copies + 1, cases[i].seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t k = 1; k < ps.size(); ++k) views.emplace_back(i, ps[k]);
  }
  return views;
}

PhantomDataset build_dataset(const PhantomSpec& spec, std::size_t n_train, std::size_t n_test,
                             bool augment) {
  spec.validate();
  if (n_train < 1) throw InvalidArgument("need at least one training case");
  std::vector<std::optional<PhantomCase>> all(n_train + n_test);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(all.size()); ++i) {
    const auto k = static_cast<std::size_t>(i);
    all[k] = k < n_train ? generate_case(spec, case_seed(spec.seed, Split::Train, k))
                         : generate_case(spec, case_seed(spec.seed, Split::Test, k - n_train));
  }
  PhantomDataset d;
  for (std::size_t k = 0; k < all.size(); ++k)
    (k < n_train ? d.train_cases : d.test_cases).push_back(std::move(*all[k]));
  d.train_views = training_views(d.train_cases, augment);
  for (const auto& [i, p] : d.train_views) {
    d.bp_train.push_back(bp_sample(d.train_cases[i], p));
    d.fs_train.push_back(fs_sample(d.train_cases[i], p));
  }
  return d;
}

}  // namespace cmf
