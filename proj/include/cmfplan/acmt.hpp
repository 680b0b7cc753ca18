#pragma once

// Attentive-correspondence movement transfer: two point-feature towers are
// projected to a common dimension, their normalized dot product forms a
// target x source correlation matrix, and encoded source movement is carried
// across it to every target point.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cmfplan/geom.hpp"
#include "cmfplan/optim.hpp"
#include "cmfplan/pointnet.hpp"
#include "cmfplan/tensor.hpp"

namespace cmf {

enum class Direction { FaceToBone, BoneToFace };

std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);

/// Per-point displacement vectors (mm) anchored on `base`.
struct MovementField {
  PointSet base;
  std::vector<Vec3> vectors;

  MovementField(PointSet base_points, std::vector<Vec3> v);
  std::size_t size() const { return vectors.size(); }
  /// base + vectors.
  PointSet displaced() const;
};

struct AcmtConfig {
  TowerConfig tower;
  std::size_t projection_dim = 64;  // full-scale; divided by tower.width_divisor
  std::vector<std::size_t> theta_dims = {64, 128};  // after the 6-channel input
  std::vector<std::size_t> phi_dims = {64};         // hidden dims before the 3-channel output
  double coord_scale = 0.02;    // mm -> network units for absolute coordinates
  double movement_scale = 0.2;  // mm -> network units for movements
  bool xyz_features = true;     // feed scaled absolute coordinates to the towers

  friend bool operator==(const AcmtConfig&, const AcmtConfig&) = default;
};

/// Desk-scale defaults: width / 8, 256-point clouds.
AcmtConfig desk_scale_config();
/// The one-layer theta / phi variant.
AcmtConfig single_layer_config(AcmtConfig base);

struct AcmtModel {
  Direction direction = Direction::FaceToBone;
  AcmtConfig config;
  EncoderDecoderParams source_tower;
  EncoderDecoderParams target_tower;
  LayerParams source_head;  // tower features -> projection_dim, identity
  LayerParams target_head;
  MlpStack theta;  // 6 -> ... -> C
  MlpStack phi;    // C -> ... -> 3, identity output

  std::size_t min_points() const;
  friend bool operator==(const AcmtModel&, const AcmtModel&) = default;
};

AcmtModel make_acmt(const AcmtConfig& cfg, Direction dir, std::uint64_t seed);
/// Zeroes both projection heads, which makes every correlation and output zero.
void zero_heads(AcmtModel& model);
void visit_params(AcmtModel& m, const std::string& prefix, const ParamVisitor& f);

/// R(i, j) = sum_k target(k, i) source(k, j) / N_source.
Tensor2 correlation(const Tensor2& target_feats, const Tensor2& source_feats);

/// Carries encoded source movement to the target points through R
/// (contracting over the source axis) and decodes it to mm.
MovementField transfer_movement(const AcmtModel& model, const MovementField& source_movement,
                                const Tensor2& r, const PointSet& target_points);

struct AcmtTape {
  TowerTape source_tower;
  TowerTape target_tower;
  Tensor2 source_tower_out, target_tower_out;
  Tensor2 source_proj, target_proj;
  Tensor2 r;
  MlpTape theta, phi;
  Tensor2 encoded;  // theta output, C x Ns
  bool recorded = false;
};

/// Raw forward: 3 x N_target movement in mm.
Tensor2 acmt_forward(const AcmtModel& model, std::span<const Vec3> source_points,
                     std::span<const Vec3> target_points, std::span<const Vec3> source_movement,
                     AcmtTape* tape = nullptr);

MovementField forward(const AcmtModel& model, const PointSet& source_points,
                      const PointSet& target_points, const MovementField& source_movement);

/// d_output is 3 x N_target (mm). Accumulates into grads; StateError without a forward.
void acmt_backward(const AcmtModel& model, const AcmtTape& tape, const Tensor2& d_output,
                   AcmtModel& grads);

// --- training ---------------------------------------------------------------

struct MovementSample {
  std::vector<Vec3> source_points;
  std::vector<Vec3> source_movement;
  std::vector<Vec3> target_points;
  std::vector<Vec3> target_movement;  // ground truth
};

struct TrainHyper {
  int epochs = 500;
  std::size_t batch_size = 4;
  AdamHyper adam;
  std::uint64_t seed = 0;
  int jobs = 1;

  friend bool operator==(const TrainHyper&, const TrainHyper&) = default;
};

struct TrainResult {
  std::vector<double> loss_history;  // mean sample loss per epoch
};

/// Mean over points and coordinates of (prediction - truth)^2, mm^2;
/// `d_pred` receives its gradient when non-null.
double mse_loss(const Tensor2& pred, std::span<const Vec3> truth, Tensor2* d_pred);

/// Mini-batch Adam on the MSE between predicted and ground-truth target
/// movement. Throws InvalidArgument on an empty dataset and TrainingDiverged
/// on a non-finite loss.
TrainResult train(AcmtModel& model, std::span<const MovementSample> data, const TrainHyper& hyper);

/// Mean per-sample MSE without updating anything.
double evaluate_loss(const AcmtModel& model, std::span<const MovementSample> data);

}  // namespace cmf
