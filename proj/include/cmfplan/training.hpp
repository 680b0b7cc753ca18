#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "cmfplan/acmt.hpp"
#include "cmfplan/errors.hpp"
#include "cmfplan/optim.hpp"

namespace cmf {

/// Shared mini-batch loop. `loss_grad(model, sample, grads)` returns the
/// sample loss and accumulates its gradient into `grads`. Samples of a batch
/// may run concurrently; their gradients are summed in batch order and
/// averaged, so the update does not depend on the thread count.
template <class Model, class Sample, class LossGrad>
TrainResult run_training(Model& model, std::span<const Sample> data, const TrainHyper& hyper,
                         LossGrad&& loss_grad) {
  if (data.empty()) throw InvalidArgument("training set is empty");
  if (hyper.batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (hyper.epochs < 0) throw InvalidArgument("epoch count must be non-negative");

  TrainResult result;
  auto params = collect_params(model);
  AdamState state(hyper.adam, params);
  Model total = zeros_like(model);
  auto total_refs = collect_params(total);

  std::mt19937_64 rng(hyper.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t count = std::min(hyper.batch_size, order.size() - start);
      std::vector<Model> grads(count, zeros_like(model));
      std::vector<double> losses(count, 0.0);
      std::vector<std::exception_ptr> errors(count);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, hyper.jobs))
      for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(count); ++b) {
        const auto bi = static_cast<std::size_t>(b);
        try {
          losses[bi] = loss_grad(static_cast<const Model&>(model), data[order[start + bi]],
                                 grads[bi]);
        } catch (...) {
          errors[bi] = std::current_exception();
        }
      }
      for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
      for (std::size_t b = 0; b < count; ++b)
        if (!std::isfinite(losses[b]))
          throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epoch),
                                 epoch);

      for (auto& r : total_refs) std::fill(r.values.begin(), r.values.end(), 0.0);
      for (std::size_t b = 0; b < count; ++b) {
        accumulate(total, grads[b]);
        epoch_loss += losses[b];
      }
      const double inv = 1.0 / static_cast<double>(count);
      for (auto& r : total_refs)
        for (auto& g : r.values) g *= inv;
      adam_step(params, total_refs, state);
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return result;
}

}  // namespace cmf
