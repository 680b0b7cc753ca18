#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cmfplan/geom.hpp"

namespace cmf {

/// Triangle surface mesh, vertices in mm.
struct FaceMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  /// Throws InvalidArgument on an empty mesh, non-finite vertices or
  /// out-of-range triangle indices.
  void validate() const;

  friend bool operator==(const FaceMesh&, const FaceMesh&) = default;
};

}  // namespace cmf
