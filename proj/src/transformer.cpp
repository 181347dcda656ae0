#include "llmcache/transformer.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "llmcache/errors.hpp"
#include "llmcache/kernels.hpp"

namespace llmcache {

void ModelConfig::validate() const {
    if (vocab == 0 || dim == 0 || layers == 0) throw ConfigError("model dims must be positive");
    if (dim % 2 != 0) throw ConfigError("model dim must be even");
}

ModelWeights ModelWeights::init(const ModelConfig& cfg) {
    cfg.validate();
    const float scale = 1.0f / std::sqrt(static_cast<float>(cfg.dim));
    Rng rng(cfg.seed);
    auto fill = [&](MatF& m, std::size_t rows, std::size_t cols) {
        m = MatF(rows, cols);
        for (float& x : m.data) x = static_cast<float>(rng.next_gaussian()) * scale;
    };
    ModelWeights w;
    w.config = cfg;
    fill(w.embedding, cfg.vocab, cfg.dim);
    const std::uint32_t ffn = cfg.effective_ffn();
    w.layers.resize(cfg.layers);
    for (LayerWeights& l : w.layers) {
        fill(l.wq, cfg.dim, cfg.dim);
        fill(l.wk, cfg.dim, cfg.dim);
        fill(l.wv, cfg.dim, cfg.dim);
        fill(l.wo, cfg.dim, cfg.dim);
        fill(l.w1, cfg.dim, ffn);
        fill(l.w2, ffn, cfg.dim);
        l.ln1_gamma.assign(cfg.dim, 1.0f);
        l.ln1_beta.assign(cfg.dim, 0.0f);
        l.ln2_gamma.assign(cfg.dim, 1.0f);
        l.ln2_beta.assign(cfg.dim, 0.0f);
    }
    return w;
}

HiddenState embed(const TokenSeq& tokens, const ModelWeights& weights) {
    if (tokens.empty()) throw EmptySequence();
    const std::size_t d = weights.config.dim;
    HiddenState h;
    h.layer_index = 0;
    h.values = MatF(tokens.size(), d);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] >= weights.config.vocab)
            throw VocabError("token id " + std::to_string(tokens[i]) + " >= vocab size " +
                             std::to_string(weights.config.vocab));
        const float* src = weights.embedding.row(tokens[i]);
        float* dst = h.values.row(i);
        for (std::size_t j = 0; j < d; ++j) dst[j] = src[j];
    }
    return h;
}

namespace {

void ensure(MatF& m, std::size_t rows, std::size_t cols) {
    if (m.rows != rows || m.cols != cols) m = MatF(rows, cols);
}

}  // namespace

void attention_sublayer(const ModelWeights& weights, int layer, const MatF& h, MatF& out,
                        Workspace& ws) {
    if (layer < 1 || static_cast<std::size_t>(layer) > weights.layers.size())
        throw ShapeError("layer index out of range");
    const LayerWeights& lw = weights.layers[static_cast<std::size_t>(layer - 1)];
    const int n = static_cast<int>(h.rows);
    const int d = static_cast<int>(h.cols);
    ensure(ws.q, h.rows, h.cols);
    ensure(ws.k, h.rows, h.cols);
    ensure(ws.v, h.rows, h.cols);
    ensure(ws.scores, h.rows, h.rows);
    ensure(ws.ctx, h.rows, h.cols);
    ensure(out, h.rows, h.cols);
    kernels::matmul(h.data.data(), lw.wq.data.data(), ws.q.data.data(), n, d, d);
    kernels::matmul(h.data.data(), lw.wk.data.data(), ws.k.data.data(), n, d, d);
    kernels::matmul(h.data.data(), lw.wv.data.data(), ws.v.data.data(), n, d, d);
    kernels::matmul_nt(ws.q.data.data(), ws.k.data.data(), ws.scores.data.data(), n, n, d);
    kernels::softmax_rows(ws.scores.data.data(), n, n,
                          1.0f / std::sqrt(static_cast<float>(d)));
    kernels::matmul(ws.scores.data.data(), ws.v.data.data(), ws.ctx.data.data(), n, d, n);
    kernels::matmul(ws.ctx.data.data(), lw.wo.data.data(), out.data.data(), n, d, d);
}

void attention_sublayer(const ModelWeights& weights, int layer, const MatF& h, MatF& out) {
    Workspace ws;
    attention_sublayer(weights, layer, h, out, ws);
}

HiddenState layer_forward(int layer, const HiddenState& h, const ModelWeights& weights,
                          Workspace& ws) {
    if (h.layer_index != layer - 1)
        throw ShapeError("layer_forward: input is layer " + std::to_string(h.layer_index) +
                         ", expected " + std::to_string(layer - 1));
    const LayerWeights& lw = weights.layers[static_cast<std::size_t>(layer - 1)];
    const int n = static_cast<int>(h.values.rows);
    const int d = static_cast<int>(h.values.cols);
    const int ffn = static_cast<int>(weights.config.effective_ffn());
    constexpr float kLnEps = 1e-5f;

    attention_sublayer(weights, layer, h.values, ws.att, ws);
    kernels::add(ws.att.data.data(), h.values.data.data(), h.values.size());
    ensure(ws.x1, h.values.rows, h.values.cols);
    kernels::layer_norm_rows(ws.att.data.data(), ws.x1.data.data(), n, d,
                             lw.ln1_gamma.data(), lw.ln1_beta.data(), kLnEps);

    ensure(ws.ffn_hidden, h.values.rows, static_cast<std::size_t>(ffn));
    kernels::matmul(ws.x1.data.data(), lw.w1.data.data(), ws.ffn_hidden.data.data(), n, ffn, d);
    kernels::gelu(ws.ffn_hidden.data.data(), ws.ffn_hidden.size());
    ensure(ws.ffn_out, h.values.rows, h.values.cols);
    kernels::matmul(ws.ffn_hidden.data.data(), lw.w2.data.data(), ws.ffn_out.data.data(), n, d,
                    ffn);
    kernels::add(ws.ffn_out.data.data(), ws.x1.data.data(), ws.ffn_out.size());

    HiddenState out;
    out.layer_index = layer;
    out.values = MatF(h.values.rows, h.values.cols);
    kernels::layer_norm_rows(ws.ffn_out.data.data(), out.values.data.data(), n, d,
                             lw.ln2_gamma.data(), lw.ln2_beta.data(), kLnEps);
    if (!kernels::all_finite(out.values.data.data(), out.values.size()))
        throw NumericsError("non-finite activation at layer " + std::to_string(layer));
    return out;
}

HiddenState layer_forward(int layer, const HiddenState& h, const ModelWeights& weights) {
    Workspace ws;
    return layer_forward(layer, h, weights, ws);
}

ForwardResult forward_nocache(const TokenSeq& tokens, const ModelWeights& weights) {
    Workspace ws;
    ForwardResult r;
    HiddenState h = embed(tokens, weights);
    r.per_layer.reserve(weights.config.layers);
    for (std::uint32_t l = 1; l <= weights.config.layers; ++l) {
        h = layer_forward(static_cast<int>(l), h, weights, ws);
        r.per_layer.push_back(h.values);
    }
    r.final = std::move(h);
    return r;
}

CacheEngine::CacheEngine(const ModelWeights& weights, FingerprintContext fp_ctx,
                         std::vector<CacheBank> banks, std::vector<double> tau_schedule,
                         std::uint64_t validation_seed)
    : weights_(weights),
      fp_ctx_(std::move(fp_ctx)),
      banks_(std::move(banks)),
      tau_schedule_(std::move(tau_schedule)),
      validation_rng_(validation_seed) {
    if (banks_.size() != weights_.config.layers)
        throw ConfigError("need exactly one cache bank per layer");
    if (tau_schedule_.size() != weights_.config.layers)
        throw ConfigError("tau schedule length must equal layer count");
}

bool CacheEngine::sample_validation(double rate) {
    if (rate <= 0.0) return false;
    if (rate >= 1.0) return true;
    return validation_rng_.next_unit() < rate;
}

std::pair<HiddenState, InferenceTrace> CacheEngine::infer(const TokenSeq& tokens) {
    using clock = std::chrono::steady_clock;
    const std::uint64_t step = next_step_++;
    const std::uint32_t L = weights_.config.layers;
    const auto n = static_cast<std::uint32_t>(tokens.size());

    InferenceTrace trace;
    trace.key = fingerprint(tokens, weights_, fp_ctx_);
    trace.decisions.resize(L);
    trace.layer_ns.resize(L);

    HiddenState h = embed(tokens, weights_);
    for (std::uint32_t l = 1; l <= L; ++l) {
        const auto t0 = clock::now();
        CacheBank& bank = banks_[l - 1];
        const LookupResult lr = bank.lookup(trace.key, n, tau_schedule_[l - 1], step);
        if (lr.hit) {
            const CacheEntry& e = bank.entry(lr.entry_id);
            const bool compressed = e.activation.compressed;
            if (compressed && compression_ == nullptr)
                throw Error("bank holds compressed entries but no compression state is set");
            MatF cached = compressed ? compression_->reconstruct(l - 1, e.activation.values)
                                     : e.activation.values;
            if (sample_validation(bank.policy().validation_rate)) {
                HiddenState recomputed = layer_forward(static_cast<int>(l), h, weights_, ws_);
                stats_.validation_recomputes += 1;
                const ValidationOutcome outcome =
                    compressed ? bank.validate_entry(lr.entry_id, cached, recomputed.values)
                               : bank.validate_entry(lr.entry_id, recomputed.values);
                if (outcome == ValidationOutcome::Invalidated) {
                    // Fall back to the fresh computation and re-insert it.
                    StoredActivation act;
                    act.seq_len = n;
                    if (compressed) {
                        act.compressed = true;
                        act.values = compression_->compress(l - 1, recomputed.values);
                    } else {
                        act.values = recomputed.values;
                    }
                    bank.insert(trace.key, std::move(act), step);
                    h = std::move(recomputed);
                } else {
                    h = HiddenState{std::move(cached), static_cast<int>(l)};
                }
            } else {
                h = HiddenState{std::move(cached), static_cast<int>(l)};
            }
            trace.decisions[l - 1] = LayerDecision{true, lr.similarity};
        } else {
            if (h.layer_index != static_cast<int>(l) - 1)
                throw Error("miss at layer " + std::to_string(l) + " without layer " +
                            std::to_string(l - 1) + " state");
            h = layer_forward(static_cast<int>(l), h, weights_, ws_);
            stats_.layer_calls += 1;
            if (compression_ != nullptr && compression_->config().enabled)
                compression_->observe(l - 1, h.values);
            StoredActivation act;
            act.seq_len = n;
            if (compression_ != nullptr && compression_->config().enabled &&
                compression_->ready(l - 1)) {
                act.compressed = true;
                act.values = compression_->compress(l - 1, h.values);
            } else {
                act.values = h.values;
            }
            bank.insert(trace.key, std::move(act), step);
            trace.decisions[l - 1] = LayerDecision{false, 0.0};
        }
        trace.layer_ns[l - 1] = static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t0).count());
    }
    return {std::move(h), std::move(trace)};
}

void CacheEngine::decay_sweep_all(std::uint64_t step) {
    for (CacheBank& bank : banks_) bank.decay_sweep(step);
}

}  // namespace llmcache
