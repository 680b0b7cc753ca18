#include "cmfplan/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <omp.h>

#include "cmfplan/errors.hpp"

namespace cmf::kernels {
namespace {

void check_linear(ConstMatView w, std::size_t b_size, ConstMatView x, MatView y) {
  if (w.cols != x.rows || y.rows != w.rows || y.cols != x.cols || b_size != w.rows)
    throw InvalidArgument("linear: shape mismatch");
}

double sq_dist(const Vec3& a, const Vec3& b) { return (a - b).squaredNorm(); }

// Sorted (squared distance, index) of the k nearest sources to q.
void nearest_k(const Vec3& q, std::span<const Vec3> sources, std::size_t k,
               std::vector<std::pair<double, std::size_t>>& best) {
  best.clear();
  for (std::size_t j = 0; j < sources.size(); ++j) {
    const double d2 = sq_dist(q, sources[j]);
    if (best.size() == k && !(d2 < best.back().first)) continue;
    auto pos = std::upper_bound(best.begin(), best.end(), std::make_pair(d2, j));
    best.insert(pos, {d2, j});
    if (best.size() > k) best.pop_back();
  }
}

std::vector<std::size_t> ball_members(const Vec3& c, std::span<const Vec3> sources, double r2,
                                      std::size_t max_count,
                                      std::vector<std::pair<double, std::size_t>>& scratch) {
  scratch.clear();
  for (std::size_t j = 0; j < sources.size(); ++j) {
    const double d2 = sq_dist(c, sources[j]);
    if (d2 <= r2) scratch.emplace_back(d2, j);
  }
  if (scratch.empty()) {
    nearest_k(c, sources, 1, scratch);
  } else if (scratch.size() > max_count) {
    std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(max_count),
                      scratch.end());
    scratch.resize(max_count);
  } else {
    std::sort(scratch.begin(), scratch.end());
  }
  std::vector<std::size_t> out;
  out.reserve(scratch.size());
  for (const auto& [d2, j] : scratch) out.push_back(j);
  return out;
}

Vec3 displacement_at(const Vec3& q, std::span<const Vec3> pre, std::span<const Vec3> post,
                     double inv_sigma2) {
  double wsum = 0.0;
  Vec3 acc = Vec3::Zero();
  for (std::size_t j = 0; j < pre.size(); ++j) {
    const double w = std::exp(-sq_dist(q, pre[j]) * inv_sigma2);
    wsum += w;
    acc += w * (post[j] - pre[j]);
  }
  return wsum > 0.0 ? Vec3(acc / wsum) : Vec3(Vec3::Zero());
}

void check_displacement(std::span<const Vec3> pre, std::span<const Vec3> post, double sigma) {
  if (pre.size() != post.size()) throw InvalidArgument("pre/post bone size mismatch");
  if (!(sigma > 0.0)) throw InvalidArgument("kernel width must be positive");
}

}  // namespace

// ---------------------------------------------------------------------------
namespace serial {

void linear_forward(ConstMatView w, std::span<const double> b, ConstMatView x, MatView y) {
  check_linear(w, b.size(), x, y);
  const std::size_t n = x.cols;
  for (std::size_t o = 0; o < w.rows; ++o) {
    double* yr = y.data + o * n;
    std::fill(yr, yr + n, b[o]);
    for (std::size_t i = 0; i < w.cols; ++i) {
      const double wi = w(o, i);
      const double* xr = x.data + i * n;
      for (std::size_t j = 0; j < n; ++j) yr[j] += wi * xr[j];
    }
  }
}

void linear_backward_params(ConstMatView dy, ConstMatView x, MatView dw, std::span<double> db) {
  for (std::size_t o = 0; o < dy.rows; ++o) {
    const double* dyr = dy.data + o * dy.cols;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double* xr = x.data + i * x.cols;
      double s = 0.0;
      for (std::size_t j = 0; j < x.cols; ++j) s += dyr[j] * xr[j];
      dw(o, i) += s;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < dy.cols; ++j) s += dyr[j];
    db[o] += s;
  }
}

void linear_backward_input(ConstMatView w, ConstMatView dy, MatView dx) {
  const std::size_t n = dy.cols;
  std::vector<double> tmp(n);
  for (std::size_t i = 0; i < w.cols; ++i) {
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (std::size_t o = 0; o < w.rows; ++o) {
      const double woi = w(o, i);
      const double* dyr = dy.data + o * n;
      for (std::size_t j = 0; j < n; ++j) tmp[j] += woi * dyr[j];
    }
    double* dxr = dx.data + i * n;
    for (std::size_t j = 0; j < n; ++j) dxr[j] += tmp[j];
  }
}

void gemm_tn(ConstMatView a, ConstMatView b, double scale, MatView c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
    throw InvalidArgument("gemm_tn: shape mismatch");
  std::vector<double> tmp(b.cols);
  for (std::size_t i = 0; i < a.cols; ++i) {
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (std::size_t k = 0; k < a.rows; ++k) {
      const double aki = a(k, i);
      const double* br = b.data + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) tmp[j] += aki * br[j];
    }
    for (std::size_t j = 0; j < b.cols; ++j) c(i, j) = scale * tmp[j];
  }
}

void gemm_nt(ConstMatView a, ConstMatView b, double scale, MatView c) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
    throw InvalidArgument("gemm_nt: shape mismatch");
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.data + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* br = b.data + j * b.cols;
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += ar[k] * br[k];
      c(i, j) = scale * s;
    }
  }
}

void gemm_nn(ConstMatView a, ConstMatView b, double scale, MatView c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
    throw InvalidArgument("gemm_nn: shape mismatch");
  std::vector<double> tmp(b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      const double* br = b.data + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) tmp[j] += aik * br[j];
    }
    for (std::size_t j = 0; j < b.cols; ++j) c(i, j) = scale * tmp[j];
  }
}

std::vector<Vec3> kernel_displacement(std::span<const Vec3> queries, std::span<const Vec3> pre,
                                      std::span<const Vec3> post, double sigma) {
  check_displacement(pre, post, sigma);
  const double inv_sigma2 = 1.0 / (sigma * sigma);
  std::vector<Vec3> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i)
    out[i] = displacement_at(queries[i], pre, post, inv_sigma2);
  return out;
}

Neighbors knn(std::span<const Vec3> queries, std::span<const Vec3> sources, std::size_t k) {
  if (sources.empty()) throw InvalidArgument("knn: no sources");
  Neighbors nb;
  nb.k = std::min(k, sources.size());
  nb.index.resize(queries.size() * nb.k);
  nb.distance.resize(queries.size() * nb.k);
  std::vector<std::pair<double, std::size_t>> best;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    nearest_k(queries[q], sources, nb.k, best);
    for (std::size_t m = 0; m < nb.k; ++m) {
      nb.index[q * nb.k + m] = best[m].second;
      nb.distance[q * nb.k + m] = std::sqrt(best[m].first);
    }
  }
  return nb;
}

Groups ball_query(std::span<const Vec3> centers, std::span<const Vec3> sources, double radius,
                  std::size_t max_count) {
  if (sources.empty()) throw InvalidArgument("ball_query: no sources");
  Groups g;
  g.offsets.reserve(centers.size() + 1);
  g.offsets.push_back(0);
  std::vector<std::pair<double, std::size_t>> scratch;
  for (const auto& c : centers) {
    auto m = ball_members(c, sources, radius * radius, max_count, scratch);
    g.members.insert(g.members.end(), m.begin(), m.end());
    g.offsets.push_back(g.members.size());
  }
  return g;
}

std::size_t fps_step(std::span<const Vec3> points, std::size_t latest,
                     std::span<double> min_sq_dist) {
  const Vec3& p = points[latest];
  std::size_t best = 0;
  double best_d = -1.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d2 = sq_dist(points[i], p);
    if (d2 < min_sq_dist[i]) min_sq_dist[i] = d2;
    if (min_sq_dist[i] > best_d) {
      best_d = min_sq_dist[i];
      best = i;
    }
  }
  return best;
}

}  // namespace serial

// ---------------------------------------------------------------------------
namespace parallel {

namespace {
using Index = std::ptrdiff_t;
Index as_index(std::size_t n) { return static_cast<Index>(n); }
}  // namespace

void linear_forward(ConstMatView w, std::span<const double> b, ConstMatView x, MatView y) {
  check_linear(w, b.size(), x, y);
  const std::size_t n = x.cols;
#pragma omp parallel for schedule(static)
  for (Index o = 0; o < as_index(w.rows); ++o) {
    double* yr = y.data + static_cast<std::size_t>(o) * n;
    const double* wr = w.data + static_cast<std::size_t>(o) * w.cols;
    std::fill(yr, yr + n, b[static_cast<std::size_t>(o)]);
    for (std::size_t i = 0; i < w.cols; ++i) {
      const double wi = wr[i];
      const double* xr = x.data + i * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) yr[j] += wi * xr[j];
    }
  }
}

void linear_backward_params(ConstMatView dy, ConstMatView x, MatView dw, std::span<double> db) {
#pragma omp parallel for schedule(static)
  for (Index oo = 0; oo < as_index(dy.rows); ++oo) {
    const auto o = static_cast<std::size_t>(oo);
    const double* dyr = dy.data + o * dy.cols;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double* xr = x.data + i * x.cols;
      double s = 0.0;
      for (std::size_t j = 0; j < x.cols; ++j) s += dyr[j] * xr[j];
      dw(o, i) += s;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < dy.cols; ++j) s += dyr[j];
    db[o] += s;
  }
}

void linear_backward_input(ConstMatView w, ConstMatView dy, MatView dx) {
  const std::size_t n = dy.cols;
#pragma omp parallel
  {
    std::vector<double> tmp(n);
#pragma omp for schedule(static)
    for (Index ii = 0; ii < as_index(w.cols); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::fill(tmp.begin(), tmp.end(), 0.0);
      for (std::size_t o = 0; o < w.rows; ++o) {
        const double woi = w(o, i);
        const double* dyr = dy.data + o * n;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) tmp[j] += woi * dyr[j];
      }
      double* dxr = dx.data + i * n;
      for (std::size_t j = 0; j < n; ++j) dxr[j] += tmp[j];
    }
  }
}

void gemm_tn(ConstMatView a, ConstMatView b, double scale, MatView c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
    throw InvalidArgument("gemm_tn: shape mismatch");
#pragma omp parallel
  {
    std::vector<double> tmp(b.cols);
#pragma omp for schedule(static)
    for (Index ii = 0; ii < as_index(a.cols); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::fill(tmp.begin(), tmp.end(), 0.0);
      for (std::size_t k = 0; k < a.rows; ++k) {
        const double aki = a(k, i);
        const double* br = b.data + k * b.cols;
#pragma omp simd
        for (std::size_t j = 0; j < b.cols; ++j) tmp[j] += aki * br[j];
      }
      double* cr = c.data + i * c.cols;
      for (std::size_t j = 0; j < b.cols; ++j) cr[j] = scale * tmp[j];
    }
  }
}

void gemm_nt(ConstMatView a, ConstMatView b, double scale, MatView c) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
    throw InvalidArgument("gemm_nt: shape mismatch");
#pragma omp parallel for schedule(static)
  for (Index ii = 0; ii < as_index(a.rows); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* ar = a.data + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* br = b.data + j * b.cols;
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += ar[k] * br[k];
      c(i, j) = scale * s;
    }
  }
}

void gemm_nn(ConstMatView a, ConstMatView b, double scale, MatView c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
    throw InvalidArgument("gemm_nn: shape mismatch");
#pragma omp parallel
  {
    std::vector<double> tmp(b.cols);
#pragma omp for schedule(static)
    for (Index ii = 0; ii < as_index(a.rows); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::fill(tmp.begin(), tmp.end(), 0.0);
      for (std::size_t k = 0; k < a.cols; ++k) {
        const double aik = a(i, k);
        const double* br = b.data + k * b.cols;
#pragma omp simd
        for (std::size_t j = 0; j < b.cols; ++j) tmp[j] += aik * br[j];
      }
      double* cr = c.data + i * c.cols;
      for (std::size_t j = 0; j < b.cols; ++j) cr[j] = scale * tmp[j];
    }
  }
}

std::vector<Vec3> kernel_displacement(std::span<const Vec3> queries, std::span<const Vec3> pre,
                                      std::span<const Vec3> post, double sigma) {
  check_displacement(pre, post, sigma);
  const double inv_sigma2 = 1.0 / (sigma * sigma);
  std::vector<Vec3> out(queries.size());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < as_index(queries.size()); ++i)
    out[static_cast<std::size_t>(i)] =
        displacement_at(queries[static_cast<std::size_t>(i)], pre, post, inv_sigma2);
  return out;
}

Neighbors knn(std::span<const Vec3> queries, std::span<const Vec3> sources, std::size_t k) {
  if (sources.empty()) throw InvalidArgument("knn: no sources");
  Neighbors nb;
  nb.k = std::min(k, sources.size());
  nb.index.resize(queries.size() * nb.k);
  nb.distance.resize(queries.size() * nb.k);
#pragma omp parallel
  {
    std::vector<std::pair<double, std::size_t>> best;
#pragma omp for schedule(static)
    for (Index qq = 0; qq < as_index(queries.size()); ++qq) {
      const auto q = static_cast<std::size_t>(qq);
      nearest_k(queries[q], sources, nb.k, best);
      for (std::size_t m = 0; m < nb.k; ++m) {
        nb.index[q * nb.k + m] = best[m].second;
        nb.distance[q * nb.k + m] = std::sqrt(best[m].first);
      }
    }
  }
  return nb;
}

Groups ball_query(std::span<const Vec3> centers, std::span<const Vec3> sources, double radius,
                  std::size_t max_count) {
  if (sources.empty()) throw InvalidArgument("ball_query: no sources");
  std::vector<std::vector<std::size_t>> per_center(centers.size());
#pragma omp parallel
  {
    std::vector<std::pair<double, std::size_t>> scratch;
#pragma omp for schedule(static)
    for (Index c = 0; c < as_index(centers.size()); ++c)
      per_center[static_cast<std::size_t>(c)] = ball_members(
          centers[static_cast<std::size_t>(c)], sources, radius * radius, max_count, scratch);
  }
  Groups g;
  g.offsets.reserve(centers.size() + 1);
  g.offsets.push_back(0);
  for (const auto& m : per_center) {
    g.members.insert(g.members.end(), m.begin(), m.end());
    g.offsets.push_back(g.members.size());
  }
  return g;
}

std::size_t fps_step(std::span<const Vec3> points, std::size_t latest,
                     std::span<double> min_sq_dist) {
  const Vec3 p = points[latest];
  std::size_t best = 0;
  double best_d = -1.0;
#pragma omp parallel
  {
    std::size_t local_best = 0;
    double local_d = -1.0;
#pragma omp for schedule(static) nowait
    for (Index ii = 0; ii < as_index(points.size()); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      const double d2 = sq_dist(points[i], p);
      if (d2 < min_sq_dist[i]) min_sq_dist[i] = d2;
      if (min_sq_dist[i] > local_d) {
        local_d = min_sq_dist[i];
        local_best = i;
      }
    }
#pragma omp critical
    {
      if (local_d > best_d || (local_d == best_d && local_best < best)) {
        best_d = local_d;
        best = local_best;
      }
    }
  }
  return best;
}

}  // namespace parallel
}  // namespace cmf::kernels
