#pragma once

#include <cstdint>
#include <vector>

#include "llmcache/cachebank.hpp"
#include "llmcache/compression.hpp"
#include "llmcache/fingerprint.hpp"
#include "llmcache/matrix.hpp"
#include "llmcache/rng.hpp"
#include "llmcache/types.hpp"

namespace llmcache {

struct ModelConfig {
    std::uint32_t vocab = 1024;
    std::uint32_t dim = 256;
    std::uint32_t layers = 12;
    std::uint32_t ffn_dim = 0;  // 0 -> 4 * dim
    std::uint64_t seed = 1;

    std::uint32_t effective_ffn() const { return ffn_dim == 0 ? 4 * dim : ffn_dim; }
    void validate() const;
};

struct LayerWeights {
    MatF wq, wk, wv, wo;  // d x d, stored input-major so y = x * W
    MatF w1;              // d x ffn
    MatF w2;              // ffn x d
    std::vector<float> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

struct ModelWeights {
    ModelConfig config;
    MatF embedding;  // vocab x d
    std::vector<LayerWeights> layers;

    /// Deterministic Gaussian init scaled by 1/sqrt(d); layer norms start at
    /// identity (gamma 1, beta 0).
    static ModelWeights init(const ModelConfig& cfg);
};

struct HiddenState {
    MatF values;  // n x d
    int layer_index = 0;
};

/// Scratch buffers reused across layer calls.
struct Workspace {
    MatF q, k, v, scores, ctx, att, x1, ffn_hidden, ffn_out;
};

HiddenState embed(const TokenSeq& tokens, const ModelWeights& weights);

/// Attention half of layer l (1-based): softmax(QK^T/sqrt(d))V then Wo.
/// No residual, no norm -- this is also the "layer-1 attention output"
/// consumed by the prefix-attention fingerprint scheme.
void attention_sublayer(const ModelWeights& weights, int layer, const MatF& h, MatF& out);
void attention_sublayer(const ModelWeights& weights, int layer, const MatF& h, MatF& out,
                        Workspace& ws);

/// Full block: attention + residual + layer norm, GELU FFN + residual +
/// layer norm. Throws NumericsError on non-finite output.
HiddenState layer_forward(int layer, const HiddenState& h, const ModelWeights& weights);
HiddenState layer_forward(int layer, const HiddenState& h, const ModelWeights& weights,
                          Workspace& ws);

struct ForwardResult {
    HiddenState final;            // layer L
    std::vector<MatF> per_layer;  // outputs of layers 1..L
};

/// The no-reuse baseline: embed, then every layer in order. Serves as both
/// the latency baseline and the fidelity oracle.
ForwardResult forward_nocache(const TokenSeq& tokens, const ModelWeights& weights);

struct LayerDecision {
    bool hit = false;
    double similarity = 0.0;
};

struct InferenceTrace {
    std::vector<LayerDecision> decisions;   // length L
    std::vector<std::uint64_t> layer_ns;    // length L
    Fingerprint key;
};

struct EngineStats {
    std::uint64_t layer_calls = 0;            // miss-path layer computations
    std::uint64_t validation_recomputes = 0;  // extra computations for validation
};

/// The per-layer decision gate: fingerprint once, then reuse-or-compute at
/// every layer, inserting freshly computed activations. Owns the banks, the
/// logical step counter and the seeded validation sampler.
class CacheEngine {
public:
    CacheEngine(const ModelWeights& weights, FingerprintContext fp_ctx,
                std::vector<CacheBank> banks, std::vector<double> tau_schedule,
                std::uint64_t validation_seed = 0x7a11d);

    std::pair<HiddenState, InferenceTrace> infer(const TokenSeq& tokens);

    void set_compression(CompressionState* comp) { compression_ = comp; }

    std::vector<CacheBank>& banks() { return banks_; }
    const std::vector<CacheBank>& banks() const { return banks_; }
    const std::vector<double>& tau_schedule() const { return tau_schedule_; }
    const EngineStats& stats() const { return stats_; }
    std::uint64_t next_step() const { return next_step_; }
    void set_next_step(std::uint64_t step) { next_step_ = step; }
    void decay_sweep_all(std::uint64_t step);

private:
    bool sample_validation(double rate);

    const ModelWeights& weights_;
    FingerprintContext fp_ctx_;
    std::vector<CacheBank> banks_;
    std::vector<double> tau_schedule_;
    CompressionState* compression_ = nullptr;
    Rng validation_rng_;
    Workspace ws_;
    std::uint64_t next_step_ = 0;
    EngineStats stats_;
};

}  // namespace llmcache
