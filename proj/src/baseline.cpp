#include "cmfplan/baseline.hpp"

#include <cmath>

#include "cmfplan/errors.hpp"
#include "cmfplan/phantom.hpp"
#include "cmfplan/training.hpp"

namespace cmf {

DefnetConfig desk_defnet_config() {
  DefnetConfig c;
  c.tower = desk_scale_config().tower;
  return c;
}

DefnetModel make_defnet(const DefnetConfig& cfg, std::uint64_t seed) {
  if (!(cfg.coord_scale > 0.0) || !(cfg.movement_scale > 0.0))
    throw InvalidArgument("input scales must be positive");
  std::mt19937_64 rng(seed);
  DefnetModel m;
  m.config = cfg;
  m.tower = make_encoder_decoder(cfg.tower, 6, rng);
  std::vector<std::size_t> dims{m.tower.output_dim()};
  for (auto h : cfg.head_dims) dims.push_back(scaled(h, cfg.tower.width_divisor));
  dims.push_back(3);
  m.head = MlpStack::glorot(dims, Activation::ReLU, Activation::Identity, rng);
  return m;
}

void zero_head(DefnetModel& model) {
  auto& last = model.head.layers.back();
  last.weight.fill(0.0);
  std::fill(last.bias.begin(), last.bias.end(), 0.0);
}

void visit_params(DefnetModel& m, const std::string& prefix, const ParamVisitor& f) {
  visit_params(m.tower, prefix + "tower", f);
  visit_params(m.head, prefix + "head", f);
}

Tensor2 defnet_forward(const DefnetModel& model, std::span<const Vec3> points,
                       std::span<const Vec3> normals, DefnetTape* tape) {
  if (normals.size() != points.size()) throw InvalidArgument("baseline needs one normal per point");
  DefnetTape local;
  DefnetTape& t = tape ? *tape : local;
  t.recorded = false;
  Tensor2 x(6, points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    for (int a = 0; a < 3; ++a) {
      const auto r = static_cast<std::size_t>(a);
      x(r, i) = points[i](a) * model.config.coord_scale;
      x(3 + r, i) = normals[i](a);
    }
  t.tower_out = encoder_decoder_forward(model.tower, points, x, &t.tower);
  Tensor2 v = mlp_forward(model.head, t.tower_out, &t.head);
  const double inv = 1.0 / model.config.movement_scale;
  for (auto& e : v.values()) e *= inv;
  t.recorded = true;
  return v;
}

void defnet_backward(const DefnetModel& model, const DefnetTape& tape, const Tensor2& d_output,
                     DefnetModel& grads) {
  if (!tape.recorded) throw StateError("baseline backward called without a recorded forward pass");
  Tensor2 dv = d_output;
  const double inv = 1.0 / model.config.movement_scale;
  for (auto& e : dv.values()) e *= inv;
  const Tensor2 dt = mlp_backward(model.head, tape.head, dv, grads.head);
  encoder_decoder_backward(model.tower, tape.tower, dt, grads.tower);
}

PointSet predict_bone(const DefnetModel& model, const PointSet& pre_bone) {
  const Tensor2 v = defnet_forward(model, pre_bone.coords(), pre_bone.normals());
  std::vector<Vec3> out(pre_bone.coords());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += Vec3(v(0, i), v(1, i), v(2, i));
  return PointSet(std::move(out));
}

DefnetSample defnet_sample(const PhantomCase& c, const Perturbation& p) {
  const auto& bone = c.planning.pre_bone.points();
  const PointSet post = c.post_bone();
  const Mat3 f = p.linear();
  DefnetSample s;
  for (std::size_t i = 0; i < bone.size(); ++i) {
    s.points.push_back(p.apply(bone[i]));
    s.normals.push_back(f * bone.normals()[i]);
    s.target_movement.push_back(f * (post[i] - bone[i]));
  }
  return s;
}

TrainResult train(DefnetModel& model, std::span<const DefnetSample> data, const TrainHyper& hyper) {
  return run_training(model, data, hyper,
                      [](const DefnetModel& m, const DefnetSample& s, DefnetModel& grads) {
                        DefnetTape tape;
                        const Tensor2 pred = defnet_forward(m, s.points, s.normals, &tape);
                        Tensor2 d;
                        const double loss = mse_loss(pred, s.target_movement, &d);
                        if (std::isfinite(loss)) defnet_backward(m, tape, d, grads);
                        return loss;
                      });
}

double evaluate_loss(const DefnetModel& model, std::span<const DefnetSample> data) {
  if (data.empty()) throw InvalidArgument("evaluation set is empty");
  double total = 0.0;
  for (const auto& s : data)
    total += mse_loss(defnet_forward(model, s.points, s.normals), s.target_movement, nullptr);
  return total / static_cast<double>(data.size());
}

}  // namespace cmf
