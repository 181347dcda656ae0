#include "llmcache/compression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "llmcache/errors.hpp"

namespace llmcache {

EigenDecomposition symmetric_eigen(const MatD& m) {
    if (m.rows != m.cols) throw ShapeError("eigen: matrix must be square");
    const std::size_t n = m.rows;
    MatD a = m;
    MatD v(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    double frob = 0.0;
    for (double x : a.data) frob += x * x;
    const double tol = 1e-28 * std::max(frob, 1e-300);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off <= tol) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vpk = v(p, k), vqk = v(q, k);
                    v(p, k) = c * vpk - s * vqk;
                    v(q, k) = s * vpk + c * vqk;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = a(i, i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return diag[x] > diag[y]; });

    EigenDecomposition out;
    out.values.resize(n);
    out.vectors = MatD(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        out.values[i] = diag[order[i]];
        for (std::size_t j = 0; j < n; ++j) out.vectors(i, j) = v(order[i], j);
    }
    return out;
}

PcaModel pca_fit(const MatD& samples, int c) {
    const std::size_t m = samples.rows;
    const std::size_t d = samples.cols;
    if (m < 2) throw ShapeError("pca_fit: need at least 2 samples");
    if (c < 1 || static_cast<std::size_t>(c) > std::min(m, d))
        throw ShapeError("pca_fit: component count out of range");

    PcaModel model;
    model.mean.assign(d, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = samples.row(i);
        for (std::size_t j = 0; j < d; ++j) model.mean[j] += row[j];
    }
    for (double& x : model.mean) x /= static_cast<double>(m);

    MatD cov(d, d, 0.0);
    std::vector<double> centered(d);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = samples.row(i);
        for (std::size_t j = 0; j < d; ++j) centered[j] = row[j] - model.mean[j];
        for (std::size_t p = 0; p < d; ++p) {
            const double cp = centered[p];
            for (std::size_t q = p; q < d; ++q) cov(p, q) += cp * centered[q];
        }
    }
    const double inv = 1.0 / static_cast<double>(m - 1);
    for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = p; q < d; ++q) {
            cov(p, q) *= inv;
            cov(q, p) = cov(p, q);
        }

    EigenDecomposition eig = symmetric_eigen(cov);
    model.components = MatD(static_cast<std::size_t>(c), d);
    model.explained_variance.resize(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) {
        const double* src = eig.vectors.row(static_cast<std::size_t>(i));
        double sign = 1.0;
        for (std::size_t j = 0; j < d; ++j) {
            if (std::abs(src[j]) > 1e-12) {
                sign = src[j] > 0.0 ? 1.0 : -1.0;
                break;
            }
        }
        for (std::size_t j = 0; j < d; ++j)
            model.components(static_cast<std::size_t>(i), j) = sign * src[j];
        model.explained_variance[static_cast<std::size_t>(i)] =
            eig.values[static_cast<std::size_t>(i)];
    }
    return model;
}

MatD pca_project(const PcaModel& model, const MatD& h) {
    const std::size_t d = model.mean.size();
    const std::size_t c = model.components.rows;
    if (h.cols != d) throw ShapeError("pca_project: column count != model dimension");
    MatD z(h.rows, c);
    for (std::size_t i = 0; i < h.rows; ++i) {
        const double* row = h.row(i);
        for (std::size_t k = 0; k < c; ++k) {
            const double* comp = model.components.row(k);
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += (row[j] - model.mean[j]) * comp[j];
            z(i, k) = s;
        }
    }
    return z;
}

MatD pca_reconstruct(const PcaModel& model, const MatD& z) {
    const std::size_t d = model.mean.size();
    const std::size_t c = model.components.rows;
    if (z.cols != c) throw ShapeError("pca_reconstruct: column count != component count");
    MatD h(z.rows, d);
    for (std::size_t i = 0; i < z.rows; ++i) {
        double* out = h.row(i);
        for (std::size_t j = 0; j < d; ++j) out[j] = model.mean[j];
        const double* zi = z.row(i);
        for (std::size_t k = 0; k < c; ++k) {
            const double* comp = model.components.row(k);
            const double w = zi[k];
            for (std::size_t j = 0; j < d; ++j) out[j] += w * comp[j];
        }
    }
    return h;
}

MatD pca_projection_matrix(const PcaModel& model, std::size_t out_dim) {
    if (out_dim == 0 || out_dim > model.components.rows)
        throw ShapeError("projection dimension exceeds the fitted component count");
    MatD p(out_dim, model.components.cols);
    for (std::size_t i = 0; i < out_dim; ++i)
        for (std::size_t j = 0; j < model.components.cols; ++j)
            p(i, j) = model.components(i, j);
    return p;
}

void CompressionConfig::validate() const {
    if (components < 1) throw ConfigError("compression.components must be >= 1");
    if (warmup_samples < 2) throw ConfigError("compression.warmup_samples must be >= 2");
}

CompressionState::CompressionState(CompressionConfig cfg, std::size_t layers, std::size_t dim)
    : cfg_(cfg), dim_(dim), rows_seen_(layers, 0), models_(layers), fitted_(layers, false) {
    cfg_.validate();
    if (static_cast<std::size_t>(cfg_.components) > dim)
        throw ConfigError("compression.components must be <= model dim");
    if (cfg_.components > cfg_.warmup_samples)
        throw ConfigError("compression.components must be <= warmup_samples");
    warmup_.assign(layers, MatD(static_cast<std::size_t>(cfg_.warmup_samples), dim));
}

void CompressionState::observe(std::size_t layer, const MatF& activation) {
    if (fitted_[layer]) return;
    if (activation.cols != dim_) throw ShapeError("compression: activation dim mismatch");
    MatD& buf = warmup_[layer];
    std::size_t& seen = rows_seen_[layer];
    for (std::size_t i = 0; i < activation.rows && seen < buf.rows; ++i, ++seen) {
        const float* src = activation.row(i);
        double* dst = buf.row(seen);
        for (std::size_t j = 0; j < dim_; ++j) dst[j] = src[j];
    }
    if (seen == buf.rows) {
        models_[layer] = pca_fit(buf, cfg_.components);
        fitted_[layer] = true;
        warmup_[layer] = MatD();  // release the buffer
    }
}

bool CompressionState::all_ready() const {
    for (bool f : fitted_)
        if (!f) return false;
    return true;
}

MatF CompressionState::compress(std::size_t layer, const MatF& activation) const {
    if (!fitted_[layer]) throw Error("compression model not fitted for layer");
    const PcaModel& m = models_[layer];
    MatD h(activation.rows, activation.cols);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] = activation.data[i];
    MatD z = pca_project(m, h);
    MatF out(z.rows, z.cols);
    for (std::size_t i = 0; i < z.data.size(); ++i) out.data[i] = static_cast<float>(z.data[i]);
    return out;
}

MatF CompressionState::reconstruct(std::size_t layer, const MatF& z) const {
    if (!fitted_[layer]) throw Error("compression model not fitted for layer");
    const PcaModel& m = models_[layer];
    MatD zd(z.rows, z.cols);
    for (std::size_t i = 0; i < zd.data.size(); ++i) zd.data[i] = z.data[i];
    MatD h = pca_reconstruct(m, zd);
    MatF out(h.rows, h.cols);
    for (std::size_t i = 0; i < h.data.size(); ++i) out.data[i] = static_cast<float>(h.data[i]);
    return out;
}

}  // namespace llmcache
