#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmfplan/kernels.hpp"

namespace cmf {

/// Row-major dense matrix of doubles; feature maps are channels x points.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  kernels::MatView view() noexcept { return {data_.data(), rows_, cols_}; }
  kernels::ConstMatView view() const noexcept { return {data_.data(), rows_, cols_}; }

  bool all_finite() const;
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  Tensor2 transposed() const;

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Stacks `top` over `bottom` (equal column counts).
Tensor2 vstack(const Tensor2& top, const Tensor2& bottom);

enum class Activation { ReLU, Identity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

/// Per-point shared linear map (kernel-size-1 convolution) with activation.
struct LayerParams {
  Tensor2 weight;  // out x in
  std::vector<double> bias;
  Activation activation = Activation::ReLU;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  /// Uniform in +-sqrt(6 / (in + out)), zero bias.
  static LayerParams glorot(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng);
  static LayerParams zeros(std::size_t in, std::size_t out, Activation act);

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// column j of the result = act(W x_j + b). Throws InvalidArgument on shape mismatch.
Tensor2 shared_map_forward(const LayerParams& params, const Tensor2& features);

/// Backward through one layer given its input and (post-activation) output.
/// Accumulates into `grads` and returns d(input).
Tensor2 shared_map_backward(const LayerParams& params, const Tensor2& input,
                            const Tensor2& output, const Tensor2& d_output, LayerParams& grads);

/// Sequential stack of shared maps.
struct MlpStack {
  std::vector<LayerParams> layers;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }

  /// dims = {in, h1, ..., out}; every layer uses `hidden`, the last uses `last`.
  static MlpStack glorot(std::span<const std::size_t> dims, Activation hidden, Activation last,
                         std::mt19937_64& rng);

  friend bool operator==(const MlpStack&, const MlpStack&) = default;
};

/// Activations recorded by a forward pass: acts[0] is the input, acts[l+1]
/// the output of layer l.
struct MlpTape {
  std::vector<Tensor2> acts;
  bool recorded() const { return !acts.empty(); }
};

Tensor2 mlp_forward(const MlpStack& mlp, Tensor2 input, MlpTape* tape = nullptr);
/// Throws StateError if `tape` holds no forward pass.
Tensor2 mlp_backward(const MlpStack& mlp, const MlpTape& tape, const Tensor2& d_output,
                     MlpStack& grads);

// --- parameter access ------------------------------------------------------

/// A named, shaped window onto one parameter buffer.
struct ParamRef {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<double> values;
};

using ParamVisitor = std::function<void(std::string_view name, std::size_t rows,
                                        std::size_t cols, std::span<double> values)>;

void visit_params(LayerParams& p, const std::string& prefix, const ParamVisitor& f);
void visit_params(MlpStack& p, const std::string& prefix, const ParamVisitor& f);

/// Collects every parameter buffer of a model in its canonical visiting order.
template <class Model>
std::vector<ParamRef> collect_params(Model& model) {
  std::vector<ParamRef> out;
  visit_params(model, std::string{}, [&](std::string_view name, std::size_t r, std::size_t c,
                                         std::span<double> v) {
    out.push_back({std::string(name), r, c, v});
  });
  return out;
}

/// Same structure, every value zero.
template <class Model>
Model zeros_like(const Model& model) {
  Model z = model;
  for (auto& p : collect_params(z)) std::fill(p.values.begin(), p.values.end(), 0.0);
  return z;
}

/// target += source, elementwise over matching structures.
template <class Model>
void accumulate(Model& target, Model& source) {
  auto t = collect_params(target);
  auto s = collect_params(source);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t k = 0; k < t[i].values.size(); ++k) t[i].values[k] += s[i].values[k];
}

}  // namespace cmf
