#include "cmfplan/acmt.hpp"

#include <cmath>
#include <string>

#include "cmfplan/errors.hpp"
#include "cmfplan/training.hpp"

namespace cmf {

std::string_view to_string(Direction d) {
  return d == Direction::FaceToBone ? "face_to_bone" : "bone_to_face";
}

Direction direction_from_string(std::string_view s) {
  if (s == "face_to_bone") return Direction::FaceToBone;
  if (s == "bone_to_face") return Direction::BoneToFace;
  throw InvalidArgument("unknown direction '" + std::string(s) + "'");
}

MovementField::MovementField(PointSet base_points, std::vector<Vec3> v)
    : base(std::move(base_points)), vectors(std::move(v)) {
  if (vectors.size() != base.size()) throw InvalidArgument("movement field length mismatch");
  for (const auto& x : vectors)
    if (!x.allFinite()) throw InvalidArgument("movement vectors must be finite");
}

PointSet MovementField::displaced() const {
  std::vector<Vec3> out(base.coords());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vectors[i];
  return PointSet(std::move(out));
}

AcmtConfig desk_scale_config() {
  AcmtConfig c;
  c.tower.width_divisor = 8.0;
  c.tower.point_divisor = 16.0;
  c.tower.radii = {15.0, 30.0, 60.0, 120.0};
  return c;
}

AcmtConfig single_layer_config(AcmtConfig base) {
  base.theta_dims = {128};
  base.phi_dims = {};
  return base;
}

std::size_t AcmtModel::min_points() const {
  return std::max(source_tower.min_points(), target_tower.min_points());
}

AcmtModel make_acmt(const AcmtConfig& cfg, Direction dir, std::uint64_t seed) {
  if (cfg.theta_dims.empty()) throw InvalidArgument("theta needs at least one layer");
  if (!(cfg.coord_scale > 0.0) || !(cfg.movement_scale > 0.0))
    throw InvalidArgument("input scales must be positive");
  std::mt19937_64 rng(seed);
  const double w = cfg.tower.width_divisor;
  const std::size_t in_ch = cfg.xyz_features ? 3 : 0;

  AcmtModel m;
  m.direction = dir;
  m.config = cfg;
  m.source_tower = make_encoder_decoder(cfg.tower, in_ch, rng);
  m.target_tower = make_encoder_decoder(cfg.tower, in_ch, rng);
  const std::size_t d = scaled(cfg.projection_dim, w);
  m.source_head = LayerParams::glorot(m.source_tower.output_dim(), d, Activation::Identity, rng);
  m.target_head = LayerParams::glorot(m.target_tower.output_dim(), d, Activation::Identity, rng);

  std::vector<std::size_t> theta{6};
  for (auto t : cfg.theta_dims) theta.push_back(scaled(t, w));
  m.theta = MlpStack::glorot(theta, Activation::ReLU, Activation::Identity, rng);
  std::vector<std::size_t> phi{theta.back()};
  for (auto h : cfg.phi_dims) phi.push_back(scaled(h, w));
  phi.push_back(3);
  m.phi = MlpStack::glorot(phi, Activation::ReLU, Activation::Identity, rng);
  return m;
}

void zero_heads(AcmtModel& model) {
  for (auto* h : {&model.source_head, &model.target_head}) {
    h->weight.fill(0.0);
    std::fill(h->bias.begin(), h->bias.end(), 0.0);
  }
}

void visit_params(AcmtModel& m, const std::string& prefix, const ParamVisitor& f) {
  visit_params(m.source_tower, prefix + "source_tower", f);
  visit_params(m.target_tower, prefix + "target_tower", f);
  visit_params(m.source_head, prefix + "source_head", f);
  visit_params(m.target_head, prefix + "target_head", f);
  visit_params(m.theta, prefix + "theta", f);
  visit_params(m.phi, prefix + "phi", f);
}

Tensor2 correlation(const Tensor2& target_feats, const Tensor2& source_feats) {
  if (target_feats.rows() != source_feats.rows())
    throw InvalidArgument("correlation: feature dimensions differ");
  if (source_feats.cols() == 0) throw InvalidArgument("correlation: no source points");
  Tensor2 r(target_feats.cols(), source_feats.cols());
  kernels::parallel::gemm_tn(target_feats.view(), source_feats.view(),
                             1.0 / static_cast<double>(source_feats.cols()), r.view());
  return r;
}

namespace {

Tensor2 tower_features(const AcmtConfig& cfg, std::span<const Vec3> pts) {
  if (!cfg.xyz_features) return Tensor2(0, pts.size());
  Tensor2 f(3, pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int a = 0; a < 3; ++a) f(static_cast<std::size_t>(a), i) = pts[i](a) * cfg.coord_scale;
  return f;
}

Tensor2 movement_input(const AcmtConfig& cfg, std::span<const Vec3> pts,
                       std::span<const Vec3> mv) {
  if (pts.size() != mv.size()) throw InvalidArgument("source movement length mismatch");
  Tensor2 x(6, pts.size());
  for (std::size_t j = 0; j < pts.size(); ++j)
    for (int a = 0; a < 3; ++a) {
      const auto r = static_cast<std::size_t>(a);
      x(r, j) = pts[j](a) * cfg.coord_scale;
      x(3 + r, j) = mv[j](a) * cfg.movement_scale;
    }
  return x;
}

// Z = E R^T, then phi, then back to mm.
Tensor2 decode(const AcmtModel& model, const Tensor2& encoded, const Tensor2& r, MlpTape* tape) {
  Tensor2 z(encoded.rows(), r.rows());
  kernels::parallel::gemm_nt(encoded.view(), r.view(), 1.0, z.view());
  Tensor2 v = mlp_forward(model.phi, std::move(z), tape);
  const double inv = 1.0 / model.config.movement_scale;
  for (auto& x : v.values()) x *= inv;
  return v;
}

std::vector<Vec3> columns(const Tensor2& v) {
  std::vector<Vec3> out(v.cols());
  for (std::size_t i = 0; i < v.cols(); ++i) out[i] = Vec3(v(0, i), v(1, i), v(2, i));
  return out;
}

}  // namespace

MovementField transfer_movement(const AcmtModel& model, const MovementField& source_movement,
                                const Tensor2& r, const PointSet& target_points) {
  if (r.cols() != source_movement.size() || r.rows() != target_points.size())
    throw InvalidArgument("transfer_movement: correlation must be N_target x N_source");
  Tensor2 x = movement_input(model.config, source_movement.base.coords(), source_movement.vectors);
  Tensor2 e = mlp_forward(model.theta, std::move(x));
  return {target_points, columns(decode(model, e, r, nullptr))};
}

Tensor2 acmt_forward(const AcmtModel& model, std::span<const Vec3> source_points,
                     std::span<const Vec3> target_points, std::span<const Vec3> source_movement,
                     AcmtTape* tape) {
  if (source_movement.size() != source_points.size())
    throw InvalidArgument("source movement length mismatch");
  AcmtTape local;
  AcmtTape& t = tape ? *tape : local;
  t.recorded = false;
  const auto& cfg = model.config;

  t.source_tower_out = encoder_decoder_forward(model.source_tower, source_points,
                                               tower_features(cfg, source_points), &t.source_tower);
  t.target_tower_out = encoder_decoder_forward(model.target_tower, target_points,
                                               tower_features(cfg, target_points), &t.target_tower);
  t.source_proj = shared_map_forward(model.source_head, t.source_tower_out);
  t.target_proj = shared_map_forward(model.target_head, t.target_tower_out);
  t.r = correlation(t.target_proj, t.source_proj);
  t.encoded = mlp_forward(model.theta, movement_input(cfg, source_points, source_movement),
                          &t.theta);
  Tensor2 out = decode(model, t.encoded, t.r, &t.phi);
  t.recorded = true;
  return out;
}

MovementField forward(const AcmtModel& model, const PointSet& source_points,
                      const PointSet& target_points, const MovementField& source_movement) {
  if (source_movement.size() != source_points.size())
    throw InvalidArgument("source movement must be anchored on the source points");
  Tensor2 v = acmt_forward(model, source_points.coords(), target_points.coords(),
                           source_movement.vectors);
  return {target_points, columns(v)};
}

void acmt_backward(const AcmtModel& model, const AcmtTape& tape, const Tensor2& d_output,
                   AcmtModel& grads) {
  if (!tape.recorded) throw StateError("acmt backward called without a recorded forward pass");
  const std::size_t nt = tape.r.rows();
  const std::size_t ns = tape.r.cols();
  if (d_output.rows() != 3 || d_output.cols() != nt)
    throw InvalidArgument("acmt backward: gradient must be 3 x N_target");

  Tensor2 dv = d_output;
  const double inv = 1.0 / model.config.movement_scale;
  for (auto& x : dv.values()) x *= inv;
  const Tensor2 dz = mlp_backward(model.phi, tape.phi, dv, grads.phi);

  Tensor2 de(dz.rows(), ns);
  kernels::parallel::gemm_nn(dz.view(), tape.r.view(), 1.0, de.view());
  Tensor2 dr(nt, ns);
  kernels::parallel::gemm_tn(dz.view(), tape.encoded.view(), 1.0, dr.view());
  mlp_backward(model.theta, tape.theta, de, grads.theta);

  const double inv_ns = 1.0 / static_cast<double>(ns);
  Tensor2 d_target(tape.target_proj.rows(), nt);
  kernels::parallel::gemm_nt(tape.source_proj.view(), dr.view(), inv_ns, d_target.view());
  Tensor2 d_source(tape.source_proj.rows(), ns);
  kernels::parallel::gemm_nn(tape.target_proj.view(), dr.view(), inv_ns, d_source.view());

  const Tensor2 dts = shared_map_backward(model.source_head, tape.source_tower_out,
                                          tape.source_proj, d_source, grads.source_head);
  encoder_decoder_backward(model.source_tower, tape.source_tower, dts, grads.source_tower);
  const Tensor2 dtt = shared_map_backward(model.target_head, tape.target_tower_out,
                                          tape.target_proj, d_target, grads.target_head);
  encoder_decoder_backward(model.target_tower, tape.target_tower, dtt, grads.target_tower);
}

double mse_loss(const Tensor2& pred, std::span<const Vec3> truth, Tensor2* d_pred) {
  if (pred.rows() != 3 || pred.cols() != truth.size())
    throw InvalidArgument("mse_loss: prediction must be 3 x N matching the truth");
  const double inv = 1.0 / static_cast<double>(3 * truth.size());
  if (d_pred) *d_pred = Tensor2(3, truth.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (std::size_t a = 0; a < 3; ++a) {
      const double diff = pred(a, i) - truth[i](static_cast<int>(a));
      loss += diff * diff;
      if (d_pred) (*d_pred)(a, i) = 2.0 * diff * inv;
    }
  return loss * inv;
}

TrainResult train(AcmtModel& model, std::span<const MovementSample> data,
                  const TrainHyper& hyper) {
  return run_training(model, data, hyper,
                      [](const AcmtModel& m, const MovementSample& s, AcmtModel& grads) {
                        AcmtTape tape;
                        const Tensor2 pred = acmt_forward(m, s.source_points, s.target_points,
                                                          s.source_movement, &tape);
                        Tensor2 d;
                        const double loss = mse_loss(pred, s.target_movement, &d);
                        if (std::isfinite(loss)) acmt_backward(m, tape, d, grads);
                        return loss;
                      });
}

double evaluate_loss(const AcmtModel& model, std::span<const MovementSample> data) {
  if (data.empty()) throw InvalidArgument("evaluation set is empty");
  double total = 0.0;
  for (const auto& s : data)
    total += mse_loss(acmt_forward(model, s.source_points, s.target_points, s.source_movement),
                      s.target_movement, nullptr);
  return total / static_cast<double>(data.size());
}

}  // namespace cmf
