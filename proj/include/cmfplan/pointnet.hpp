#pragma once

// Hierarchical point feature tower: four set-abstraction (encoder) blocks
// followed by four feature-propagation (decoder) blocks, with manual
// backpropagation.

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "cmfplan/geom.hpp"
#include "cmfplan/kernels.hpp"
#include "cmfplan/tensor.hpp"

namespace cmf {

inline constexpr std::array<std::size_t, 8> kFullBlockDims = {128, 256, 512, 1024,
                                                              512, 256, 128, 128};
inline constexpr std::array<std::size_t, 8> kFullBlockPoints = {1024, 512, 256, 64,
                                                                256,  512, 1024, 4096};

struct TowerBlock {
  double radius = 0.0;          // grouping radius in mm (encoder blocks only)
  std::size_t point_count = 0;  // nominal output points
  MlpStack mlp;

  friend bool operator==(const TowerBlock&, const TowerBlock&) = default;
};

struct EncoderDecoderParams {
  std::array<TowerBlock, 4> encoders;
  std::array<TowerBlock, 4> decoders;
  std::size_t input_channels = 0;  // per-point features supplied at the finest level
  std::size_t max_neighbors = 16;

  std::size_t output_dim() const { return decoders.back().mlp.out_dim(); }
  /// Smallest cloud the tower accepts (coarsest encoder level).
  std::size_t min_points() const { return encoders.back().point_count; }

  friend bool operator==(const EncoderDecoderParams&, const EncoderDecoderParams&) = default;
};

struct TowerConfig {
  double width_divisor = 1.0;  // block dims = full dims / width_divisor
  double point_divisor = 1.0;  // point counts = full counts / point_divisor
  std::array<double, 4> radii = {10.0, 20.0, 40.0, 80.0};
  std::size_t max_neighbors = 16;
  std::size_t layers_per_block = 2;

  friend bool operator==(const TowerConfig&, const TowerConfig&) = default;
};

std::size_t scaled(std::size_t full, double divisor);

/// Glorot-initialized tower consuming `input_channels` features per point.
EncoderDecoderParams make_encoder_decoder(const TowerConfig& cfg, std::size_t input_channels,
                                          std::mt19937_64& rng);

/// Everything backward needs from one forward pass.
struct TowerTape {
  struct Encode {
    std::vector<std::size_t> centers;  // indices into the previous level
    kernels::Groups groups;
    MlpTape mlp;
    std::vector<std::size_t> argmax;  // out x centers -> column of the group matrix
  };
  struct Decode {
    kernels::Neighbors nb;
    std::vector<double> weights;  // fine x k, normalized
    std::size_t coarse_channels = 0;
    MlpTape mlp;
  };
  std::array<std::vector<Vec3>, 5> level_xyz;
  std::array<std::size_t, 5> level_channels{};
  std::array<Encode, 4> enc;
  std::array<Decode, 4> dec;
  bool recorded = false;
};

/// Per-point features (output_dim x N). `features` is input_channels x N
/// (may be 0 x N). Blocks see neighbor offsets relative to their center,
/// divided by the grouping radius, so the tower itself is translation
/// invariant when no absolute coordinates are fed in `features`.
Tensor2 encoder_decoder_forward(const EncoderDecoderParams& params, std::span<const Vec3> points,
                                const Tensor2& features, TowerTape* tape = nullptr);
inline Tensor2 encoder_decoder_forward(const EncoderDecoderParams& params, const PointSet& points,
                                       const Tensor2& features, TowerTape* tape = nullptr) {
  return encoder_decoder_forward(params, std::span<const Vec3>(points.coords()), features, tape);
}

/// Accumulates parameter gradients into `grads`; returns d(features).
Tensor2 encoder_decoder_backward(const EncoderDecoderParams& params, const TowerTape& tape,
                                 const Tensor2& d_output, EncoderDecoderParams& grads);

void visit_params(EncoderDecoderParams& p, const std::string& prefix, const ParamVisitor& f);

/// Index of the lexicographically smallest point; a permutation-invariant FPS seed.
std::size_t lexicographic_min(std::span<const Vec3> points);

}  // namespace cmf
