#pragma once

#include <cstddef>

namespace llmcache::kernels {

// Row-major float kernels used by the transformer forward pass. The hot
// entry points are OpenMP-parallel over rows; each output element is still
// accumulated by a single thread in a fixed order, so results do not depend
// on the thread count.

/// c[m x n] = a[m x k] * b[k x n]
void matmul(const float* a, const float* b, float* c, int m, int n, int k);

/// c[m x n] = a[m x k] * bt[n x k]^T  (dot products of rows)
void matmul_nt(const float* a, const float* bt, float* c, int m, int n, int k);

/// Row-wise softmax of (x * scale), in place.
void softmax_rows(float* x, int rows, int cols, float scale);

/// Row-wise layer norm: y = (x - mean) / sqrt(var + eps) * gamma + beta.
void layer_norm_rows(const float* x, float* y, int rows, int cols,
                     const float* gamma, const float* beta, float eps);

/// Elementwise GELU (erf form), in place.
void gelu(float* x, std::size_t count);

/// acc += x, elementwise.
void add(float* acc, const float* x, std::size_t count);

bool all_finite(const float* x, std::size_t count);

// Serial reference implementations: straight definitional loops, no
// blocking, no OpenMP. Kept for kernel tests and the kernels benchmark.
namespace ref {

void matmul(const float* a, const float* b, float* c, int m, int n, int k);
void matmul_nt(const float* a, const float* bt, float* c, int m, int n, int k);
void softmax_rows(float* x, int rows, int cols, float scale);
void layer_norm_rows(const float* x, float* y, int rows, int cols,
                     const float* gamma, const float* beta, float eps);
void gelu(float* x, std::size_t count);
void add(float* acc, const float* x, std::size_t count);

}  // namespace ref

}  // namespace llmcache::kernels
