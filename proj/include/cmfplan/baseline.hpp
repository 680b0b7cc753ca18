#pragma once

// Bone-only baseline: one point-feature tower over the pre-operative bone
// (scaled coordinates and normals) regressing a displacement per point. It
// never sees the face and has no rigid regression stage.

#include <cstdint>
#include <span>
#include <vector>

#include "cmfplan/acmt.hpp"
#include "cmfplan/plan_search.hpp"
#include "cmfplan/pointnet.hpp"

namespace cmf {

struct PhantomCase;

struct DefnetConfig {
  TowerConfig tower;
  std::vector<std::size_t> head_dims = {64};  // full-scale hidden dims before the 3-channel output
  double coord_scale = 0.02;
  double movement_scale = 0.2;

  friend bool operator==(const DefnetConfig&, const DefnetConfig&) = default;
};

DefnetConfig desk_defnet_config();

struct DefnetModel {
  DefnetConfig config;
  EncoderDecoderParams tower;  // 6 input channels
  MlpStack head;

  std::size_t min_points() const { return tower.min_points(); }
  friend bool operator==(const DefnetModel&, const DefnetModel&) = default;
};

DefnetModel make_defnet(const DefnetConfig& cfg, std::uint64_t seed);
/// Zeroes the output layer: every predicted displacement becomes 0.
void zero_head(DefnetModel& model);
void visit_params(DefnetModel& m, const std::string& prefix, const ParamVisitor& f);

struct DefnetTape {
  TowerTape tower;
  Tensor2 tower_out;
  MlpTape head;
  bool recorded = false;
};

/// 3 x N displacement in mm.
Tensor2 defnet_forward(const DefnetModel& model, std::span<const Vec3> points,
                       std::span<const Vec3> normals, DefnetTape* tape = nullptr);
void defnet_backward(const DefnetModel& model, const DefnetTape& tape, const Tensor2& d_output,
                     DefnetModel& grads);

/// Deformed bone, same order as the input. The input must carry normals.
PointSet predict_bone(const DefnetModel& model, const PointSet& pre_bone);

struct DefnetSample {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<Vec3> target_movement;
};

DefnetSample defnet_sample(const PhantomCase& c, const Perturbation& p = {});

TrainResult train(DefnetModel& model, std::span<const DefnetSample> data, const TrainHyper& hyper);
double evaluate_loss(const DefnetModel& model, std::span<const DefnetSample> data);

}  // namespace cmf
