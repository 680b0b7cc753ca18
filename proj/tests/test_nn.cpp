#include <gtest/gtest.h>

#include <cmath>

#include "cmfplan/acmt.hpp"
#include "cmfplan/errors.hpp"
#include "cmfplan/optim.hpp"
#include "cmfplan/pointnet.hpp"
#include "cmfplan/tensor.hpp"
#include "test_util.hpp"

using namespace cmf;

namespace {

Tensor2 random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double s = 1.0) {
  std::uniform_real_distribution<double> u(-s, s);
  Tensor2 t(r, c);
  for (auto& x : t.values()) x = u(rng);
  return t;
}

double dot(const Tensor2& a, const Tensor2& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

TowerConfig toy_tower() {
  TowerConfig c;
  c.width_divisor = 32.0;
  c.point_divisor = 64.0;  // levels 16, 8, 4, 1
  c.radii = {20.0, 40.0, 80.0, 160.0};
  c.max_neighbors = 6;
  return c;
}

AcmtConfig toy_acmt() {
  AcmtConfig c;
  c.tower = toy_tower();
  return c;
}

}  // namespace

TEST(SharedMap, ForwardMatchesNaive) {
  std::mt19937_64 rng(1);
  auto p = LayerParams::glorot(4, 3, Activation::ReLU, rng);
  p.bias = {0.1, -0.2, 0.3};
  const auto x = random_tensor(4, 10, rng);
  const auto y = shared_map_forward(p, x);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t j = 0; j < 10; ++j) {
      double s = p.bias[o];
      for (std::size_t i = 0; i < 4; ++i) s += p.weight(o, i) * x(i, j);
      EXPECT_NEAR(y(o, j), std::max(0.0, s), 1e-12);
    }
  EXPECT_THROW(shared_map_forward(p, random_tensor(5, 2, rng)), InvalidArgument);
}

TEST(SharedMap, GlorotBounds) {
  std::mt19937_64 rng(2);
  const auto p = LayerParams::glorot(30, 20, Activation::Identity, rng);
  const double bound = std::sqrt(6.0 / 50.0);
  for (double w : p.weight.values()) EXPECT_LE(std::abs(w), bound);
  for (double b : p.bias) EXPECT_EQ(b, 0.0);
}

TEST(GradCheck, EveryLayerType) {
  std::mt19937_64 rng(3);
  for (auto act : {Activation::ReLU, Activation::Identity}) {
    auto p = LayerParams::glorot(5, 4, act, rng);
    for (auto& b : p.bias) b = 0.05;
    const auto x = random_tensor(5, 7, rng);
    const auto c = random_tensor(4, 7, rng, 0.1);
    auto loss = [&] { return dot(c, shared_map_forward(p, x)); };
    LayerParams g = zeros_like(p);
    shared_map_backward(p, x, shared_map_forward(p, x), c, g);
    EXPECT_LT(finite_diff_check(loss, collect_params(p), collect_params(g), 1e-4), 1e-4)
        << to_string(act);
  }
}

TEST(GradCheck, MlpStackAndInputGradient) {
  std::mt19937_64 rng(4);
  const std::vector<std::size_t> dims{3, 8, 6, 2};
  auto mlp = MlpStack::glorot(dims, Activation::ReLU, Activation::Identity, rng);
  auto x = random_tensor(3, 9, rng);
  const auto c = random_tensor(2, 9, rng, 0.1);
  auto loss = [&] { return dot(c, mlp_forward(mlp, x)); };
  MlpStack g = zeros_like(mlp);
  MlpTape tape;
  mlp_forward(mlp, x, &tape);
  const Tensor2 dx = mlp_backward(mlp, tape, c, g);
  EXPECT_LT(finite_diff_check(loss, collect_params(mlp), collect_params(g), 1e-4), 1e-4);
  // input gradient, treating x as a parameter
  ParamRef xr{"x", x.rows(), x.cols(), x.values()};
  Tensor2 dxc = dx;
  ParamRef dr{"x", dx.rows(), dx.cols(), dxc.values()};
  EXPECT_LT(finite_diff_check(loss, {xr}, {dr}, 1e-4), 1e-4);
  EXPECT_THROW(mlp_backward(mlp, MlpTape{}, c, g), StateError);
}

TEST(GradCheck, EncoderDecoderTower) {
  std::mt19937_64 rng(5);
  auto tower = make_encoder_decoder(toy_tower(), 2, rng);
  tutil::jitter_biases(collect_params(tower), rng);
  const auto pts = tutil::random_cloud(64, rng);
  auto feats = random_tensor(2, 64, rng);
  const auto c = random_tensor(tower.output_dim(), 64, rng, 0.05);
  auto loss = [&] { return dot(c, encoder_decoder_forward(tower, pts, feats)); };
  auto g = zeros_like(tower);
  TowerTape tape;
  encoder_decoder_forward(tower, pts, feats, &tape);
  const Tensor2 df = encoder_decoder_backward(tower, tape, c, g);
  EXPECT_LT(finite_diff_check(loss, collect_params(tower), collect_params(g), 1e-4), 1e-4);
  Tensor2 dfc = df;
  EXPECT_LT(finite_diff_check(loss, {{"f", 2, 64, feats.values()}}, {{"f", 2, 64, dfc.values()}},
                              1e-4),
            1e-4);
  EXPECT_THROW(encoder_decoder_backward(tower, TowerTape{}, c, g), StateError);
}

TEST(GradCheck, ComposedAcmtAndMutationDetected) {
  std::mt19937_64 rng(6);
  auto model = make_acmt(toy_acmt(), Direction::FaceToBone, 7);
  tutil::jitter_biases(collect_params(model), rng);
  const auto src = tutil::random_cloud(48, rng);
  const auto tgt = tutil::random_cloud(40, rng);
  const auto mv = tutil::random_cloud(48, rng, 3.0);
  std::vector<Vec3> truth = tutil::random_cloud(40, rng, 3.0);
  auto loss = [&] { return mse_loss(acmt_forward(model, src, tgt, mv), truth, nullptr); };
  AcmtModel g = zeros_like(model);
  AcmtTape tape;
  Tensor2 d;
  mse_loss(acmt_forward(model, src, tgt, mv, &tape), truth, &d);
  acmt_backward(model, tape, d, g);
  EXPECT_LT(finite_diff_check(loss, collect_params(model), collect_params(g), 1e-4), 1e-4);

  auto refs = collect_params(g);
  refs[refs.size() / 2].values[0] += 0.5;  // corrupt one gradient entry
  EXPECT_GT(finite_diff_check(loss, collect_params(model), refs, 1e-4), 1e-2);
}

TEST(Tower, ShapesAndMinimumPoints) {
  std::mt19937_64 rng(8);
  auto tower = make_encoder_decoder(toy_tower(), 0, rng);
  EXPECT_EQ(tower.min_points(), 1u);
  const auto pts = tutil::random_cloud(30, rng);
  const auto out = encoder_decoder_forward(tower, pts, Tensor2(0, 30));
  EXPECT_EQ(out.rows(), tower.output_dim());
  EXPECT_EQ(out.cols(), 30u);

  TowerConfig big = toy_tower();
  big.point_divisor = 4.0;  // coarsest level 16
  auto t2 = make_encoder_decoder(big, 0, rng);
  EXPECT_THROW(encoder_decoder_forward(t2, tutil::random_cloud(10, rng), Tensor2(0, 10)),
               InvalidArgument);
}

TEST(Tower, PermutationEquivariant) {
  std::mt19937_64 rng(9);
  auto tower = make_encoder_decoder(toy_tower(), 1, rng);
  const auto pts = tutil::random_cloud(50, rng);
  const auto f = random_tensor(1, 50, rng);
  std::vector<std::size_t> perm(50);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Vec3> pp;
  Tensor2 pf(1, 50);
  for (std::size_t i = 0; i < 50; ++i) {
    pp.push_back(pts[perm[i]]);
    pf(0, i) = f(0, perm[i]);
  }
  const auto a = encoder_decoder_forward(tower, pts, f);
  const auto b = encoder_decoder_forward(tower, pp, pf);
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t c = 0; c < a.rows(); ++c) EXPECT_NEAR(b(c, i), a(c, perm[i]), 1e-12);
}

TEST(Tower, TranslationInvariantWithoutCoordinates) {
  std::mt19937_64 rng(10);
  auto tower = make_encoder_decoder(toy_tower(), 0, rng);
  auto pts = tutil::random_cloud(40, rng);
  const auto a = encoder_decoder_forward(tower, pts, Tensor2(0, 40));
  for (auto& p : pts) p += Vec3(3.0, -7.0, 11.0);
  const auto b = encoder_decoder_forward(tower, pts, Tensor2(0, 40));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-9);
}

TEST(Acmt, CorrelationAndTransferMatchNaive) {
  std::mt19937_64 rng(11);
  const auto model = make_acmt(toy_acmt(), Direction::BoneToFace, 3);
  const auto ft = random_tensor(5, 9, rng);
  const auto fs = random_tensor(5, 12, rng);
  const auto r = correlation(ft, fs);
  ASSERT_EQ(r.rows(), 9u);
  ASSERT_EQ(r.cols(), 12u);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 12; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += ft(k, i) * fs(k, j);
      EXPECT_NEAR(r(i, j), s / 12.0, 1e-12);
    }
  EXPECT_THROW(correlation(random_tensor(4, 9, rng), fs), InvalidArgument);

  const auto src = tutil::random_cloud(12, rng);
  const auto mv = tutil::random_cloud(12, rng, 2.0);
  const PointSet tgt(tutil::random_cloud(9, rng));
  const auto out = transfer_movement(model, MovementField(PointSet(src), mv), r, tgt);
  // naive: theta per source point, weighted sum over sources, phi per target point
  Tensor2 x(6, 12);
  for (std::size_t j = 0; j < 12; ++j)
    for (int a = 0; a < 3; ++a) {
      x(static_cast<std::size_t>(a), j) = src[j](a) * model.config.coord_scale;
      x(3 + static_cast<std::size_t>(a), j) = mv[j](a) * model.config.movement_scale;
    }
  const Tensor2 e = mlp_forward(model.theta, x);
  Tensor2 z(e.rows(), 9);
  for (std::size_t c = 0; c < e.rows(); ++c)
    for (std::size_t i = 0; i < 9; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 12; ++j) s += e(c, j) * r(i, j);
      z(c, i) = s;
    }
  const Tensor2 v = mlp_forward(model.phi, z);
  for (std::size_t i = 0; i < 9; ++i)
    for (int a = 0; a < 3; ++a)
      EXPECT_NEAR(out.vectors[i](a), v(static_cast<std::size_t>(a), i) / model.config.movement_scale,
                  1e-12);
  EXPECT_THROW(transfer_movement(model, MovementField(PointSet(src), mv), r, PointSet(src)),
               InvalidArgument);
}

TEST(Acmt, ZeroHeadsGiveConstantOutput) {
  std::mt19937_64 rng(12);
  auto model = make_acmt(toy_acmt(), Direction::FaceToBone, 4);
  zero_heads(model);
  const auto src = tutil::random_cloud(20, rng);
  const auto tgt = tutil::random_cloud(25, rng);
  const auto a = acmt_forward(model, src, tgt, tutil::random_cloud(20, rng, 3.0));
  const auto b = acmt_forward(model, src, tgt, tutil::random_cloud(20, rng, 3.0));
  EXPECT_EQ(a, b);  // R = 0: the output ignores the source movement
}

TEST(Acmt, OutputShapeAndDeterminism) {
  std::mt19937_64 rng(13);
  const auto m1 = make_acmt(toy_acmt(), Direction::FaceToBone, 5);
  const auto m2 = make_acmt(toy_acmt(), Direction::FaceToBone, 5);
  EXPECT_EQ(m1, m2);
  const auto src = tutil::random_cloud(20, rng);
  const auto tgt = tutil::random_cloud(33, rng);
  const auto mv = tutil::random_cloud(20, rng, 3.0);
  const auto out = forward(m1, PointSet(src), PointSet(tgt), MovementField(PointSet(src), mv));
  EXPECT_EQ(out.size(), 33u);
  EXPECT_EQ(acmt_forward(m1, src, tgt, mv), acmt_forward(m2, src, tgt, mv));
  EXPECT_THROW(acmt_forward(m1, src, tgt, tutil::random_cloud(3, rng)), InvalidArgument);
  AcmtModel g = zeros_like(m1);
  EXPECT_THROW(acmt_backward(m1, AcmtTape{}, Tensor2(3, 33), g), StateError);
}

TEST(Acmt, SingleLayerVariant) {
  const auto cfg = single_layer_config(toy_acmt());
  const auto m = make_acmt(cfg, Direction::FaceToBone, 1);
  EXPECT_EQ(m.theta.layers.size(), 1u);
  EXPECT_EQ(m.phi.layers.size(), 1u);
  EXPECT_EQ(m.theta.layers[0].in_dim(), 6u);
  EXPECT_EQ(m.phi.out_dim(), 3u);
}

TEST(Training, OverfitsSingleSample) {
  std::mt19937_64 rng(14);
  auto model = make_acmt(toy_acmt(), Direction::FaceToBone, 9);
  MovementSample s{tutil::random_cloud(32, rng), tutil::random_cloud(32, rng, 3.0),
                   tutil::random_cloud(32, rng), {}};
  for (const auto& p : s.target_points) s.target_movement.push_back(Vec3(1.0, -2.0, 0.5) + 0.01 * p);
  TrainHyper h;
  h.epochs = 300;
  h.batch_size = 1;
  h.adam.lr = 3e-3;
  const std::vector<MovementSample> data{s};
  const auto r = train(model, std::span<const MovementSample>(data), h);
  ASSERT_EQ(r.loss_history.size(), 300u);
  EXPECT_LT(r.loss_history.back(), 0.1 * r.loss_history.front());
}

TEST(Training, ErrorsAndDivergence) {
  std::mt19937_64 rng(15);
  auto model = make_acmt(toy_acmt(), Direction::FaceToBone, 9);
  TrainHyper h;
  h.epochs = 1;
  EXPECT_THROW(train(model, std::span<const MovementSample>(), h), InvalidArgument);
  MovementSample s{tutil::random_cloud(16, rng), tutil::random_cloud(16, rng, 3.0),
                   tutil::random_cloud(16, rng), tutil::random_cloud(16, rng)};
  s.target_movement[0] = Vec3(std::numeric_limits<double>::infinity(), 0, 0);
  const std::vector<MovementSample> data{s};
  try {
    train(model, std::span<const MovementSample>(data), h);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.epoch(), 0);
  }
}

TEST(Training, ZeroEpochsLeavesModelUnchanged) {
  std::mt19937_64 rng(16);
  auto model = make_acmt(toy_acmt(), Direction::FaceToBone, 2);
  const auto before = model;
  const std::vector<MovementSample> data{{tutil::random_cloud(16, rng),
                                          tutil::random_cloud(16, rng),
                                          tutil::random_cloud(16, rng),
                                          tutil::random_cloud(16, rng)}};
  TrainHyper h;
  h.epochs = 0;
  EXPECT_TRUE(train(model, std::span<const MovementSample>(data), h).loss_history.empty());
  EXPECT_EQ(model, before);
}

TEST(Training, ThreadCountDoesNotChangeResult) {
  std::mt19937_64 rng(17);
  std::vector<MovementSample> data;
  for (int i = 0; i < 6; ++i)
    data.push_back({tutil::random_cloud(16, rng), tutil::random_cloud(16, rng, 2.0),
                    tutil::random_cloud(16, rng), tutil::random_cloud(16, rng, 2.0)});
  auto a = make_acmt(toy_acmt(), Direction::FaceToBone, 3);
  auto b = a;
  TrainHyper h;
  h.epochs = 2;
  h.jobs = 1;
  train(a, std::span<const MovementSample>(data), h);
  h.jobs = 4;
  train(b, std::span<const MovementSample>(data), h);
  EXPECT_EQ(a, b);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{1.0, -2.0}, g{0.5, -3.0};
  std::vector<ParamRef> pr{{"p", 1, 2, p}}, gr{{"p", 1, 2, g}};
  AdamHyper hyper;
  AdamState st(hyper, pr);
  adam_step(pr, gr, st);
  // bias-corrected first step is lr * sign(g) up to epsilon
  EXPECT_NEAR(p[0], 1.0 - 1e-3, 1e-10);
  EXPECT_NEAR(p[1], -2.0 + 1e-3, 1e-10);
  std::vector<double> q{1.0};
  EXPECT_THROW(adam_step({{"q", 1, 1, q}}, gr, st), InvalidArgument);
}
