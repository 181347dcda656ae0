#include "llmcache/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>

namespace llmcache::kernels {

namespace {

// R rows of A against the full B, so each streamed B row is reused R times
// from registers. R=8 keeps the C tile inside L1 for n <= 512.
template <int R>
void matmul_rows(const float* a, std::size_t lda, const float* b, float* c,
                 std::size_t ldc, int n, int k) {
    const float* arow[R];
    float* crow[R];
    for (int r = 0; r < R; ++r) {
        arow[r] = a + static_cast<std::size_t>(r) * lda;
        crow[r] = c + static_cast<std::size_t>(r) * ldc;
    }
    for (int r = 0; r < R; ++r)
        for (int j = 0; j < n; ++j) crow[r][j] = 0.0f;
    for (int kk = 0; kk < k; ++kk) {
        float av[R];
        for (int r = 0; r < R; ++r) av[r] = arow[r][kk];
        const float* brow = b + static_cast<std::size_t>(kk) * n;
#pragma omp simd
        for (int j = 0; j < n; ++j) {
            const float bj = brow[j];
            for (int r = 0; r < R; ++r) crow[r][j] += av[r] * bj;
        }
    }
}

}  // namespace

void matmul(const float* a, const float* b, float* c, int m, int n, int k) {
    const int wide = n >= 512;  // 8-row C tiles spill L1 on wide outputs
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; i += 8) {
        int rows = m - i;
        if (rows > 8) rows = 8;
        const float* ai = a + static_cast<std::size_t>(i) * k;
        float* ci = c + static_cast<std::size_t>(i) * n;
        if (rows == 8 && !wide) {
            matmul_rows<8>(ai, k, b, ci, n, n, k);
        } else {
            int r = 0;
            for (; r + 4 <= rows; r += 4)
                matmul_rows<4>(ai + static_cast<std::size_t>(r) * k, k, b,
                               ci + static_cast<std::size_t>(r) * n, n, n, k);
            for (; r < rows; ++r)
                matmul_rows<1>(ai + static_cast<std::size_t>(r) * k, k, b,
                               ci + static_cast<std::size_t>(r) * n, n, n, k);
        }
    }
}

void matmul_nt(const float* a, const float* bt, float* c, int m, int n, int k) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const float* ai = a + static_cast<std::size_t>(i) * k;
        float* ci = c + static_cast<std::size_t>(i) * n;
        int j = 0;
        for (; j + 4 <= n; j += 4) {
            const float* b0 = bt + static_cast<std::size_t>(j + 0) * k;
            const float* b1 = bt + static_cast<std::size_t>(j + 1) * k;
            const float* b2 = bt + static_cast<std::size_t>(j + 2) * k;
            const float* b3 = bt + static_cast<std::size_t>(j + 3) * k;
            float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
            for (int kk = 0; kk < k; ++kk) {
                const float av = ai[kk];
                s0 += av * b0[kk];
                s1 += av * b1[kk];
                s2 += av * b2[kk];
                s3 += av * b3[kk];
            }
            ci[j + 0] = s0;
            ci[j + 1] = s1;
            ci[j + 2] = s2;
            ci[j + 3] = s3;
        }
        for (; j < n; ++j) {
            const float* bj = bt + static_cast<std::size_t>(j) * k;
            float s = 0.0f;
#pragma omp simd reduction(+ : s)
            for (int kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
            ci[j] = s;
        }
    }
}

void softmax_rows(float* x, int rows, int cols, float scale) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        float* r = x + static_cast<std::size_t>(i) * cols;
        float mx = r[0] * scale;
        for (int j = 0; j < cols; ++j) {
            const float v = r[j] * scale;
            if (v > mx) mx = v;
        }
        float sum = 0.0f;
        for (int j = 0; j < cols; ++j) {
            const float e = std::exp(r[j] * scale - mx);
            r[j] = e;
            sum += e;
        }
        const float inv = 1.0f / sum;
        for (int j = 0; j < cols; ++j) r[j] *= inv;
    }
}

void layer_norm_rows(const float* x, float* y, int rows, int cols,
                     const float* gamma, const float* beta, float eps) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        const float* r = x + static_cast<std::size_t>(i) * cols;
        float* out = y + static_cast<std::size_t>(i) * cols;
        float mean = 0.0f;
        for (int j = 0; j < cols; ++j) mean += r[j];
        mean /= static_cast<float>(cols);
        float var = 0.0f;
        for (int j = 0; j < cols; ++j) {
            const float d = r[j] - mean;
            var += d * d;
        }
        var /= static_cast<float>(cols);
        const float inv = 1.0f / std::sqrt(var + eps);
#pragma omp simd
        for (int j = 0; j < cols; ++j) out[j] = (r[j] - mean) * inv * gamma[j] + beta[j];
    }
}

void gelu(float* x, std::size_t count) {
    const std::int64_t n = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const float v = x[i];
        x[i] = 0.5f * v * (1.0f + std::erf(v * 0.70710678118654752f));
    }
}

void add(float* acc, const float* x, std::size_t count) {
    const std::int64_t n = static_cast<std::int64_t>(count);
#pragma omp parallel for simd schedule(static)
    for (std::int64_t i = 0; i < n; ++i) acc[i] += x[i];
}

bool all_finite(const float* x, std::size_t count) {
    // A non-finite element poisons the running sum (Inf - Inf = NaN).
    float probe = 0.0f;
    for (std::size_t i = 0; i < count; ++i) probe += x[i] * 0.0f;
    return std::isfinite(probe);
}

namespace ref {

void matmul(const float* a, const float* b, float* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            float s = 0.0f;
            for (int kk = 0; kk < k; ++kk)
                s += a[static_cast<std::size_t>(i) * k + kk] * b[static_cast<std::size_t>(kk) * n + j];
            c[static_cast<std::size_t>(i) * n + j] = s;
        }
    }
}

void matmul_nt(const float* a, const float* bt, float* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            float s = 0.0f;
            for (int kk = 0; kk < k; ++kk)
                s += a[static_cast<std::size_t>(i) * k + kk] * bt[static_cast<std::size_t>(j) * k + kk];
            c[static_cast<std::size_t>(i) * n + j] = s;
        }
    }
}

void softmax_rows(float* x, int rows, int cols, float scale) {
    for (int i = 0; i < rows; ++i) {
        float* r = x + static_cast<std::size_t>(i) * cols;
        float mx = r[0] * scale;
        for (int j = 0; j < cols; ++j) mx = std::max(mx, r[j] * scale);
        float sum = 0.0f;
        for (int j = 0; j < cols; ++j) {
            r[j] = std::exp(r[j] * scale - mx);
            sum += r[j];
        }
        for (int j = 0; j < cols; ++j) r[j] /= sum;
    }
}

void layer_norm_rows(const float* x, float* y, int rows, int cols,
                     const float* gamma, const float* beta, float eps) {
    for (int i = 0; i < rows; ++i) {
        const float* r = x + static_cast<std::size_t>(i) * cols;
        float* out = y + static_cast<std::size_t>(i) * cols;
        float mean = 0.0f;
        for (int j = 0; j < cols; ++j) mean += r[j];
        mean /= static_cast<float>(cols);
        float var = 0.0f;
        for (int j = 0; j < cols; ++j) var += (r[j] - mean) * (r[j] - mean);
        var /= static_cast<float>(cols);
        for (int j = 0; j < cols; ++j)
            out[j] = (r[j] - mean) / std::sqrt(var + eps) * gamma[j] + beta[j];
    }
}

void gelu(float* x, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i)
        x[i] = 0.5f * x[i] * (1.0f + std::erf(x[i] * 0.70710678118654752f));
}

void add(float* acc, const float* x, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) acc[i] += x[i];
}

}  // namespace ref

}  // namespace llmcache::kernels
