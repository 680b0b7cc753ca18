#pragma once

// Data-parallel inner loops. Each kernel exists twice: a plain serial loop
// nest kept as the reference, and an OpenMP variant. Both accumulate every
// output element in the same order, so results agree bit for bit.

#include <cstddef>
#include <span>
#include <vector>

#include "cmfplan/geom.hpp"

namespace cmf::kernels {

/// Dense row-major matrix views.
struct ConstMatView {
  const double* data;
  std::size_t rows;
  std::size_t cols;
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};
struct MatView {
  double* data;
  std::size_t rows;
  std::size_t cols;
  operator ConstMatView() const { return {data, rows, cols}; }
  double& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// k nearest sources for every query, sorted by (distance, index).
struct Neighbors {
  std::size_t k = 0;
  std::vector<std::size_t> index;  // queries * k
  std::vector<double> distance;    // Euclidean, queries * k
};

/// Variable-size neighbor groups (CSR layout).
struct Groups {
  std::vector<std::size_t> offsets;  // groups + 1
  std::vector<std::size_t> members;
  std::size_t group_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};

#define CMF_KERNEL_DECLS                                                                     \
  /* y(o,j) = b(o) + sum_i w(o,i) x(i,j) */                                                  \
  void linear_forward(ConstMatView w, std::span<const double> b, ConstMatView x, MatView y); \
  /* dw(o,i) += sum_j dy(o,j) x(i,j);  db(o) += sum_j dy(o,j) */                             \
  void linear_backward_params(ConstMatView dy, ConstMatView x, MatView dw,                   \
                              std::span<double> db);                                         \
  /* dx(i,j) += sum_o w(o,i) dy(o,j) */                                                      \
  void linear_backward_input(ConstMatView w, ConstMatView dy, MatView dx);                   \
  /* c(i,j) = scale * sum_k a(k,i) b(k,j)   (a^T b) */                                       \
  void gemm_tn(ConstMatView a, ConstMatView b, double scale, MatView c);                     \
  /* c(i,j) = scale * sum_k a(i,k) b(j,k)   (a b^T) */                                       \
  void gemm_nt(ConstMatView a, ConstMatView b, double scale, MatView c);                     \
  /* c(i,j) = scale * sum_k a(i,k) b(k,j)   (a b) */                                         \
  void gemm_nn(ConstMatView a, ConstMatView b, double scale, MatView c);                     \
  /* Gaussian-weighted average of bone displacements at each query point. */                 \
  std::vector<Vec3> kernel_displacement(std::span<const Vec3> queries,                       \
                                        std::span<const Vec3> pre,                           \
                                        std::span<const Vec3> post, double sigma);           \
  Neighbors knn(std::span<const Vec3> queries, std::span<const Vec3> sources, std::size_t k); \
  /* Up to max_count sources within radius of each center, nearest first; */                 \
  /* an empty ball falls back to the single nearest source. */                               \
  Groups ball_query(std::span<const Vec3> centers, std::span<const Vec3> sources,            \
                    double radius, std::size_t max_count);                                   \
  /* One farthest-point step: fold `latest` into min_sq_dist, return argmax */               \
  /* (lowest index on ties). */                                                              \
  std::size_t fps_step(std::span<const Vec3> points, std::size_t latest,                     \
                       std::span<double> min_sq_dist);

namespace serial {
CMF_KERNEL_DECLS
}  // namespace serial

namespace parallel {
CMF_KERNEL_DECLS
}  // namespace parallel

#undef CMF_KERNEL_DECLS

}  // namespace cmf::kernels
