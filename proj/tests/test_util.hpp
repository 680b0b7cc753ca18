#pragma once

#include <random>

#include <Eigen/Geometry>
#include <vector>

#include "cmfplan/geom.hpp"
#include "cmfplan/optim.hpp"
#include "cmfplan/phantom.hpp"

namespace cmf::tutil {

inline std::vector<Vec3> random_cloud(std::size_t n, std::mt19937_64& rng, double scale = 50.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<Vec3> out(n);
  for (auto& p : out) p = Vec3(u(rng), u(rng), u(rng));
  return out;
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

inline RigidTransform random_transform(std::mt19937_64& rng, double t = 20.0) {
  std::uniform_real_distribution<double> u(-t, t);
  return RigidTransform(random_rotation(rng), Vec3(u(rng), u(rng), u(rng)));
}

/// Small phantom for fast tests (fits a desk-scale tower).
inline PhantomSpec tiny_spec() {
  PhantomSpec s = desk_phantom_spec();
  s.points_per_segment = 16;
  s.cranium_points = 16;
  s.facial_points = 80;
  return s;
}

// Glorot biases start at 0, which can leave ReLU inputs exactly on the kink
// where finite differences are meaningless.
inline void jitter_biases(const std::vector<ParamRef>& params, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (const auto& p : params)
    if (p.name.ends_with("bias"))
      for (auto& b : p.values) b = u(rng);
}

}  // namespace cmf::tutil
