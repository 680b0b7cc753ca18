#include "cmfplan/pointnet.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "cmfplan/errors.hpp"

namespace cmf {

namespace {

constexpr double kInterpEps = 1e-8;
constexpr std::size_t kInterpNeighbors = 3;

std::vector<Vec3> gather(std::span<const Vec3> pts, std::span<const std::size_t> idx) {
  std::vector<Vec3> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(pts[i]);
  return out;
}

MlpStack block_mlp(std::size_t in, std::size_t out, std::size_t layers, std::mt19937_64& rng) {
  std::vector<std::size_t> dims{in};
  for (std::size_t l = 0; l < std::max<std::size_t>(layers, 1); ++l) dims.push_back(out);
  return MlpStack::glorot(dims, Activation::ReLU, Activation::ReLU, rng);
}

}  // namespace

std::size_t scaled(std::size_t full, double divisor) {
  if (!(divisor > 0.0)) throw InvalidArgument("scale divisor must be positive");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(full / divisor)));
}

std::size_t lexicographic_min(std::span<const Vec3> points) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const auto& a = points[i];
    const auto& b = points[best];
    if (std::tie(a.x(), a.y(), a.z()) < std::tie(b.x(), b.y(), b.z())) best = i;
  }
  return best;
}

EncoderDecoderParams make_encoder_decoder(const TowerConfig& cfg, std::size_t input_channels,
                                          std::mt19937_64& rng) {
  EncoderDecoderParams p;
  p.input_channels = input_channels;
  p.max_neighbors = cfg.max_neighbors;
  std::array<std::size_t, 5> ch{};
  ch[0] = input_channels;
  for (std::size_t l = 0; l < 4; ++l) {
    ch[l + 1] = scaled(kFullBlockDims[l], cfg.width_divisor);
    p.encoders[l].radius = cfg.radii[l];
    p.encoders[l].point_count = scaled(kFullBlockPoints[l], cfg.point_divisor);
    p.encoders[l].mlp = block_mlp(3 + ch[l], ch[l + 1], cfg.layers_per_block, rng);
  }
  std::size_t coarse = ch[4];
  for (std::size_t j = 0; j < 4; ++j) {
    const std::size_t out = scaled(kFullBlockDims[4 + j], cfg.width_divisor);
    p.decoders[j].point_count = scaled(kFullBlockPoints[4 + j], cfg.point_divisor);
    p.decoders[j].mlp = block_mlp(coarse + ch[3 - j], out, cfg.layers_per_block, rng);
    coarse = out;
  }
  for (std::size_t l = 1; l < 4; ++l)
    if (p.encoders[l].point_count > p.encoders[l - 1].point_count)
      throw InvalidArgument("encoder point counts must be non-increasing");
  return p;
}

Tensor2 encoder_decoder_forward(const EncoderDecoderParams& params, std::span<const Vec3> points,
                                const Tensor2& features, TowerTape* tape) {
  const std::size_t n = points.size();
  if (n < params.min_points())
    throw InvalidArgument("cloud has " + std::to_string(n) + " points, tower needs at least " +
                          std::to_string(params.min_points()));
  if (features.rows() != params.input_channels || (features.rows() > 0 && features.cols() != n))
    throw InvalidArgument("tower input features must be input_channels x N");

  TowerTape local;
  TowerTape& t = tape ? *tape : local;
  t.recorded = false;
  std::array<Tensor2, 5> feats;
  feats[0] = features.rows() > 0 ? features : Tensor2(0, n);
  t.level_xyz[0].assign(points.begin(), points.end());
  t.level_channels[0] = params.input_channels;

  for (std::size_t l = 0; l < 4; ++l) {
    const auto& block = params.encoders[l];
    const auto& prev = t.level_xyz[l];
    auto& e = t.enc[l];
    const std::size_t m = std::min(block.point_count, prev.size());
    e.centers = farthest_point_sample(prev, m, lexicographic_min(prev));
    t.level_xyz[l + 1] = gather(prev, e.centers);
    e.groups = kernels::parallel::ball_query(t.level_xyz[l + 1], prev, block.radius,
                                             params.max_neighbors);

    const Tensor2& pf = feats[l];
    const std::size_t cols = e.groups.members.size();
    Tensor2 x(3 + pf.rows(), cols);
    const double inv_r = 1.0 / block.radius;
    for (std::size_t g = 0; g < m; ++g) {
      const Vec3& c = t.level_xyz[l + 1][g];
      for (std::size_t k = e.groups.offsets[g]; k < e.groups.offsets[g + 1]; ++k) {
        const std::size_t src = e.groups.members[k];
        const Vec3 local_xyz = (prev[src] - c) * inv_r;
        for (int a = 0; a < 3; ++a) x(static_cast<std::size_t>(a), k) = local_xyz(a);
        for (std::size_t ch = 0; ch < pf.rows(); ++ch) x(3 + ch, k) = pf(ch, src);
      }
    }
    Tensor2 y = mlp_forward(block.mlp, std::move(x), &e.mlp);

    Tensor2 pooled(y.rows(), m);
    e.argmax.assign(y.rows() * m, 0);
    for (std::size_t o = 0; o < y.rows(); ++o)
      for (std::size_t g = 0; g < m; ++g) {
        std::size_t best = e.groups.offsets[g];
        for (std::size_t k = best + 1; k < e.groups.offsets[g + 1]; ++k)
          if (y(o, k) > y(o, best)) best = k;
        pooled(o, g) = y(o, best);
        e.argmax[o * m + g] = best;
      }
    feats[l + 1] = std::move(pooled);
    t.level_channels[l + 1] = feats[l + 1].rows();
  }

  Tensor2 coarse = feats[4];
  for (std::size_t j = 0; j < 4; ++j) {
    const std::size_t fine_level = 3 - j;
    const auto& fine_xyz = t.level_xyz[fine_level];
    const auto& coarse_xyz = t.level_xyz[fine_level + 1];
    auto& d = t.dec[j];
    d.nb = kernels::parallel::knn(fine_xyz, coarse_xyz, kInterpNeighbors);
    const std::size_t k = d.nb.k;
    const std::size_t nf = fine_xyz.size();
    d.weights.assign(nf * k, 0.0);
    d.coarse_channels = coarse.rows();
    Tensor2 interp(coarse.rows(), nf);
    for (std::size_t i = 0; i < nf; ++i) {
      double wsum = 0.0;
      for (std::size_t q = 0; q < k; ++q) {
        d.weights[i * k + q] = 1.0 / (d.nb.distance[i * k + q] + kInterpEps);
        wsum += d.weights[i * k + q];
      }
      for (std::size_t q = 0; q < k; ++q) d.weights[i * k + q] /= wsum;
      for (std::size_t c = 0; c < coarse.rows(); ++c) {
        double s = 0.0;
        for (std::size_t q = 0; q < k; ++q)
          s += d.weights[i * k + q] * coarse(c, d.nb.index[i * k + q]);
        interp(c, i) = s;
      }
    }
    coarse = mlp_forward(params.decoders[j].mlp, vstack(interp, feats[fine_level]), &d.mlp);
  }
  t.recorded = true;
  return coarse;
}

Tensor2 encoder_decoder_backward(const EncoderDecoderParams& params, const TowerTape& tape,
                                 const Tensor2& d_output, EncoderDecoderParams& grads) {
  if (!tape.recorded) throw StateError("tower backward called without a recorded forward pass");

  std::array<Tensor2, 5> d_feats;
  for (std::size_t l = 0; l < 5; ++l)
    d_feats[l] = Tensor2(tape.level_channels[l], tape.level_xyz[l].size());

  Tensor2 d_coarse_out = d_output;
  for (std::size_t j = 4; j-- > 0;) {
    const std::size_t fine_level = 3 - j;
    const auto& d = tape.dec[j];
    Tensor2 dx = mlp_backward(params.decoders[j].mlp, d.mlp, d_coarse_out, grads.decoders[j].mlp);
    const std::size_t cc = d.coarse_channels;
    const std::size_t nf = tape.level_xyz[fine_level].size();
    const std::size_t nc = tape.level_xyz[fine_level + 1].size();
    Tensor2 d_coarse(cc, nc);
    const std::size_t k = d.nb.k;
    for (std::size_t c = 0; c < cc; ++c)
      for (std::size_t i = 0; i < nf; ++i) {
        const double g = dx(c, i);
        for (std::size_t q = 0; q < k; ++q)
          d_coarse(c, d.nb.index[i * k + q]) += d.weights[i * k + q] * g;
      }
    auto& skip = d_feats[fine_level];
    for (std::size_t c = 0; c < skip.rows(); ++c)
      for (std::size_t i = 0; i < nf; ++i) skip(c, i) += dx(cc + c, i);
    d_coarse_out = std::move(d_coarse);
  }
  // d_coarse_out now holds d(level-4 encoder features) coming from the decoder.
  for (std::size_t c = 0; c < d_coarse_out.rows(); ++c)
    for (std::size_t i = 0; i < d_coarse_out.cols(); ++i) d_feats[4](c, i) += d_coarse_out(c, i);

  for (std::size_t l = 4; l-- > 0;) {
    const auto& e = tape.enc[l];
    const auto& y = e.mlp.acts.back();
    const std::size_t m = e.centers.size();
    Tensor2 dy(y.rows(), y.cols());
    for (std::size_t o = 0; o < y.rows(); ++o)
      for (std::size_t g = 0; g < m; ++g) dy(o, e.argmax[o * m + g]) += d_feats[l + 1](o, g);
    Tensor2 dx = mlp_backward(params.encoders[l].mlp, e.mlp, dy, grads.encoders[l].mlp);
    auto& dprev = d_feats[l];
    for (std::size_t k = 0; k < e.groups.members.size(); ++k) {
      const std::size_t src = e.groups.members[k];
      for (std::size_t c = 0; c < dprev.rows(); ++c) dprev(c, src) += dx(3 + c, k);
    }
  }
  return d_feats[0];
}

void visit_params(EncoderDecoderParams& p, const std::string& prefix, const ParamVisitor& f) {
  for (std::size_t l = 0; l < 4; ++l)
    visit_params(p.encoders[l].mlp, prefix + ".enc" + std::to_string(l), f);
  for (std::size_t j = 0; j < 4; ++j)
    visit_params(p.decoders[j].mlp, prefix + ".dec" + std::to_string(j), f);
}

}  // namespace cmf
