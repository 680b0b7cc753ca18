#include "cmfplan/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "cmfplan/errors.hpp"

namespace cmf {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw InvalidArgument("Tensor2: data length != rows*cols");
}

bool Tensor2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor2 Tensor2::transposed() const {
  Tensor2 t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Tensor2 vstack(const Tensor2& top, const Tensor2& bottom) {
  if (top.empty()) return bottom;
  if (bottom.empty()) return top;
  if (top.cols() != bottom.cols()) throw InvalidArgument("vstack: column mismatch");
  std::vector<double> d(top.data());
  d.insert(d.end(), bottom.data().begin(), bottom.data().end());
  return Tensor2(top.rows() + bottom.rows(), top.cols(), std::move(d));
}

std::string_view to_string(Activation a) {
  return a == Activation::ReLU ? "relu" : "identity";
}

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "identity") return Activation::Identity;
  throw InvalidArgument("unknown activation '" + std::string(s) + "'");
}

LayerParams LayerParams::glorot(std::size_t in, std::size_t out, Activation act,
                                std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  LayerParams p{Tensor2(out, in), std::vector<double>(out, 0.0), act};
  for (auto& w : p.weight.values()) w = u(rng);
  return p;
}

LayerParams LayerParams::zeros(std::size_t in, std::size_t out, Activation act) {
  return {Tensor2(out, in), std::vector<double>(out, 0.0), act};
}

Tensor2 shared_map_forward(const LayerParams& params, const Tensor2& features) {
  if (features.rows() != params.in_dim())
    throw InvalidArgument("shared map expects " + std::to_string(params.in_dim()) +
                          " input channels, got " + std::to_string(features.rows()));
  if (params.bias.size() != params.out_dim()) throw InvalidArgument("shared map: bias size");
  Tensor2 out(params.out_dim(), features.cols());
  kernels::parallel::linear_forward(params.weight.view(), params.bias, features.view(),
                                    out.view());
  if (params.activation == Activation::ReLU)
    for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor2 shared_map_backward(const LayerParams& params, const Tensor2& input,
                            const Tensor2& output, const Tensor2& d_output, LayerParams& grads) {
  if (d_output.rows() != output.rows() || d_output.cols() != output.cols())
    throw InvalidArgument("shared map backward: gradient shape mismatch");
  Tensor2 dz = d_output;
  if (params.activation == Activation::ReLU) {
    auto o = output.values();
    auto d = dz.values();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!(o[i] > 0.0)) d[i] = 0.0;
  }
  kernels::parallel::linear_backward_params(dz.view(), input.view(), grads.weight.view(),
                                            grads.bias);
  Tensor2 dx(input.rows(), input.cols());
  kernels::parallel::linear_backward_input(params.weight.view(), dz.view(), dx.view());
  return dx;
}

MlpStack MlpStack::glorot(std::span<const std::size_t> dims, Activation hidden, Activation last,
                          std::mt19937_64& rng) {
  if (dims.size() < 2) throw InvalidArgument("MLP needs at least input and output dims");
  MlpStack m;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    m.layers.push_back(
        LayerParams::glorot(dims[l], dims[l + 1], l + 2 == dims.size() ? last : hidden, rng));
  return m;
}

Tensor2 mlp_forward(const MlpStack& mlp, Tensor2 input, MlpTape* tape) {
  if (tape) {
    tape->acts.clear();
    tape->acts.reserve(mlp.layers.size() + 1);
  }
  Tensor2 x = std::move(input);
  for (const auto& layer : mlp.layers) {
    Tensor2 y = shared_map_forward(layer, x);
    if (tape) tape->acts.push_back(std::move(x));
    x = std::move(y);
  }
  if (tape) tape->acts.push_back(x);
  return x;
}

Tensor2 mlp_backward(const MlpStack& mlp, const MlpTape& tape, const Tensor2& d_output,
                     MlpStack& grads) {
  if (tape.acts.size() != mlp.layers.size() + 1)
    throw StateError("backward called without a recorded forward pass");
  Tensor2 d = d_output;
  for (std::size_t l = mlp.layers.size(); l-- > 0;)
    d = shared_map_backward(mlp.layers[l], tape.acts[l], tape.acts[l + 1], d, grads.layers[l]);
  return d;
}

void visit_params(LayerParams& p, const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".weight", p.weight.rows(), p.weight.cols(), p.weight.values());
  f(prefix + ".bias", p.bias.size(), 1, p.bias);
}

void visit_params(MlpStack& p, const std::string& prefix, const ParamVisitor& f) {
  for (std::size_t l = 0; l < p.layers.size(); ++l)
    visit_params(p.layers[l], prefix + "." + std::to_string(l), f);
}

}  // namespace cmf
