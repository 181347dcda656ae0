#pragma once

#include <cstdint>
#include <vector>

#include "llmcache/matrix.hpp"

namespace llmcache {

/// Frozen PCA basis: orthonormal component rows and the variances they explain.
struct PcaModel {
    std::vector<double> mean;        // d
    MatD components;                 // c x d, rows orthonormal
    std::vector<double> explained_variance;  // c, non-increasing
};

/// Fits mean + top-c principal components of the sample covariance
/// (1/(m-1) normalization). Component signs follow a fixed convention:
/// the first non-negligible coordinate of each row is positive.
PcaModel pca_fit(const MatD& samples, int c);

/// (h - mean) rows projected onto the components: n x d -> n x c.
MatD pca_project(const PcaModel& model, const MatD& h);

/// z * components + mean: n x c -> n x d.
MatD pca_reconstruct(const PcaModel& model, const MatD& z);

/// Symmetric eigen-decomposition by cyclic Jacobi rotations; eigenvalues
/// sorted non-increasing, eigenvectors as rows of `vectors`.
struct EigenDecomposition {
    std::vector<double> values;
    MatD vectors;
};
EigenDecomposition symmetric_eigen(const MatD& m);

/// Top-out_dim component rows as a reduction matrix (rows are already unit
/// norm), usable in place of the seeded Gaussian projection for dense
/// fingerprints.
MatD pca_projection_matrix(const PcaModel& model, std::size_t out_dim);

struct CompressionConfig {
    bool enabled = false;
    int components = 32;
    int warmup_samples = 64;

    void validate() const;
};

/// Per-layer PCA models plus the warmup buffers they are fitted from.
/// Models freeze once `warmup_samples` activation rows have been seen.
class CompressionState {
public:
    CompressionState(CompressionConfig cfg, std::size_t layers, std::size_t dim);

    /// Feeds rows of one layer's activation into the warmup buffer; fits and
    /// freezes the layer's model when the buffer is full.
    void observe(std::size_t layer, const MatF& activation);

    bool ready(std::size_t layer) const { return fitted_[layer]; }
    bool all_ready() const;
    const PcaModel& model(std::size_t layer) const { return models_[layer]; }
    const CompressionConfig& config() const { return cfg_; }

    MatF compress(std::size_t layer, const MatF& activation) const;
    MatF reconstruct(std::size_t layer, const MatF& z) const;

private:
    CompressionConfig cfg_;
    std::size_t dim_;
    std::vector<MatD> warmup_;       // per layer, rows collected so far
    std::vector<std::size_t> rows_seen_;
    std::vector<PcaModel> models_;
    std::vector<bool> fitted_;
};

}  // namespace llmcache
