#include "cmfplan/optim.hpp"

#include <algorithm>
#include <cmath>

#include "cmfplan/errors.hpp"

namespace cmf {

namespace {
void check_matching(const std::vector<ParamRef>& a, const std::vector<ParamRef>& b,
                    const char* what) {
  if (a.size() != b.size()) throw InvalidArgument(std::string(what) + ": buffer count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].values.size() != b[i].values.size())
      throw InvalidArgument(std::string(what) + ": shape mismatch at " + a[i].name);
}
}  // namespace

AdamState::AdamState(AdamHyper h, const std::vector<ParamRef>& params) : hyper(h) {
  for (const auto& p : params) {
    m.emplace_back(p.values.size(), 0.0);
    v.emplace_back(p.values.size(), 0.0);
  }
}

void adam_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
               AdamState& state) {
  check_matching(params, grads, "adam_step");
  if (state.m.size() != params.size()) throw InvalidArgument("adam_step: state shape mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (state.m[i].size() != params[i].values.size())
      throw InvalidArgument("adam_step: state shape mismatch at " + params[i].name);

  const auto& hp = state.hyper;
  ++state.step;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values;
    auto g = grads[i].values;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * g[k];
      v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= hp.lr * mhat / (std::sqrt(vhat) + hp.epsilon);
    }
  }
}

namespace {
constexpr double kGradCheckFloor = 1e-6;
}

double finite_diff_check(const std::function<double()>& loss, const std::vector<ParamRef>& params,
                         const std::vector<ParamRef>& analytic, double h) {
  check_matching(params, analytic, "finite_diff_check");
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double orig = p[k];
      p[k] = orig + h;
      const double up = loss();
      p[k] = orig - h;
      const double down = loss();
      p[k] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i].values[k];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace cmf
