#include "llmcache/fingerprint.hpp"

#include <bit>
#include <cmath>

#include "llmcache/errors.hpp"
#include "llmcache/rng.hpp"
#include "llmcache/transformer.hpp"

namespace llmcache {

namespace {

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

void FingerprintConfig::validate(std::size_t model_dim) const {
    if (dense_dim <= 0 || static_cast<std::size_t>(dense_dim) > model_dim)
        throw ConfigError("fingerprint dense_dim must be in [1, model dim]");
    if (signature_bits < 8 || signature_bits % 8 != 0)
        throw ConfigError("fingerprint signature_bits must be >= 8 and a multiple of 8");
    if (prefix_len <= 0) throw ConfigError("fingerprint prefix_len must be positive");
}

MatD gaussian_projection(std::size_t out_dim, std::size_t in_dim, std::uint64_t seed) {
    Rng rng(seed);
    MatD p(out_dim, in_dim);
    for (std::size_t i = 0; i < out_dim; ++i) {
        double* row = p.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < in_dim; ++j) {
            row[j] = rng.next_gaussian();
            s += row[j] * row[j];
        }
        const double inv = 1.0 / std::sqrt(s);
        for (std::size_t j = 0; j < in_dim; ++j) row[j] *= inv;
    }
    return p;
}

HyperplaneSet HyperplaneSet::generate(int bits, std::size_t dim, std::uint64_t seed) {
    HyperplaneSet planes;
    planes.seed = seed;
    planes.normals = gaussian_projection(static_cast<std::size_t>(bits), dim, seed);
    return planes;
}

FingerprintContext FingerprintContext::make(const FingerprintConfig& cfg, std::size_t model_dim) {
    cfg.validate(model_dim);
    FingerprintContext ctx;
    ctx.config = cfg;
    switch (cfg.scheme) {
        case FingerprintScheme::DenseMean:
        case FingerprintScheme::DensePrefixAttention:
            ctx.projection = gaussian_projection(static_cast<std::size_t>(cfg.dense_dim),
                                                 model_dim, cfg.seed);
            break;
        case FingerprintScheme::SimHashOfMean:
            ctx.planes = HyperplaneSet::generate(cfg.signature_bits, model_dim, cfg.seed);
            break;
    }
    return ctx;
}

std::vector<double> mean_pool(const MatF& embeddings) {
    if (embeddings.rows == 0) throw EmptySequence();
    std::vector<double> mean(embeddings.cols, 0.0);
    for (std::size_t i = 0; i < embeddings.rows; ++i) {
        const float* row = embeddings.row(i);
        for (std::size_t j = 0; j < embeddings.cols; ++j) mean[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(embeddings.rows);
    for (double& x : mean) x *= inv;
    return mean;
}

std::vector<double> prefix_attention_stats(const MatF& attention_outputs, int k) {
    if (attention_outputs.rows == 0) throw EmptySequence();
    if (k <= 0) throw ShapeError("prefix length must be positive");
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k),
                                                   attention_outputs.rows);
    std::vector<double> mean(attention_outputs.cols, 0.0);
    for (std::size_t i = 0; i < take; ++i) {
        const float* row = attention_outputs.row(i);
        for (std::size_t j = 0; j < attention_outputs.cols; ++j) mean[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(take);
    for (double& x : mean) x *= inv;
    return mean;
}

DenseFingerprint reduce_dense(const std::vector<double>& v, const MatD& projection) {
    if (projection.cols != v.size())
        throw ShapeError("projection columns != vector dimension");
    DenseFingerprint fp;
    fp.values.resize(projection.rows);
    for (std::size_t i = 0; i < projection.rows; ++i) {
        const double* row = projection.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) s += row[j] * v[j];
        fp.values[i] = s;
    }
    const double n = norm2(fp.values);
    if (n == 0.0) throw DegenerateFingerprint("projected vector is zero");
    for (double& x : fp.values) x /= n;
    fp.normalized = true;
    return fp;
}

BitSignature simhash(const std::vector<double>& v, const HyperplaneSet& planes) {
    if (planes.normals.cols != v.size())
        throw ShapeError("hyperplane dimension != vector dimension");
    if (norm2(v) == 0.0) throw DegenerateFingerprint("cannot simhash the zero vector");
    BitSignature sig;
    sig.width = static_cast<int>(planes.normals.rows);
    sig.bytes.assign((sig.width + 7) / 8, 0);
    for (int i = 0; i < sig.width; ++i) {
        const double* row = planes.normals.row(static_cast<std::size_t>(i));
        double s = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) s += row[j] * v[j];
        if (s >= 0.0) sig.set_bit(i);
    }
    return sig;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw DegenerateFingerprint("cosine of a zero vector");
    double c = dot / (std::sqrt(na) * std::sqrt(nb));
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return c;
}

double signature_similarity(const BitSignature& a, const BitSignature& b) {
    if (a.width != b.width) throw ShapeError("signature width mismatch");
    int differing = 0;
    for (std::size_t i = 0; i < a.bytes.size(); ++i)
        differing += std::popcount(static_cast<unsigned>(a.bytes[i] ^ b.bytes[i]));
    return 1.0 - static_cast<double>(differing) / static_cast<double>(a.width);
}

double key_similarity(const Fingerprint& a, const Fingerprint& b) {
    if (a.index() != b.index()) throw KeyKindError();
    if (std::holds_alternative<DenseFingerprint>(a))
        return cosine_similarity(std::get<DenseFingerprint>(a).values,
                                 std::get<DenseFingerprint>(b).values);
    return signature_similarity(std::get<BitSignature>(a), std::get<BitSignature>(b));
}

std::size_t key_bytes(const Fingerprint& f) {
    if (std::holds_alternative<DenseFingerprint>(f))
        return std::get<DenseFingerprint>(f).values.size() * sizeof(double);
    return std::get<BitSignature>(f).bytes.size();
}

Fingerprint fingerprint(const TokenSeq& tokens, const ModelWeights& model,
                        const FingerprintContext& ctx) {
    if (tokens.empty()) throw EmptySequence();
    switch (ctx.config.scheme) {
        case FingerprintScheme::DenseMean: {
            const HiddenState h0 = embed(tokens, model);
            return reduce_dense(mean_pool(h0.values), ctx.projection);
        }
        case FingerprintScheme::DensePrefixAttention: {
            const HiddenState h0 = embed(tokens, model);
            MatF att(h0.values.rows, h0.values.cols);
            attention_sublayer(model, 1, h0.values, att);
            return reduce_dense(prefix_attention_stats(att, ctx.config.prefix_len),
                                ctx.projection);
        }
        case FingerprintScheme::SimHashOfMean: {
            const HiddenState h0 = embed(tokens, model);
            return simhash(mean_pool(h0.values), ctx.planes);
        }
    }
    throw ConfigError("unknown fingerprint scheme");
}

const char* scheme_name(FingerprintScheme s) {
    switch (s) {
        case FingerprintScheme::DenseMean: return "dense_mean";
        case FingerprintScheme::DensePrefixAttention: return "dense_prefix_attention";
        case FingerprintScheme::SimHashOfMean: return "simhash_of_mean";
    }
    return "?";
}

FingerprintScheme scheme_from_name(const std::string& name) {
    if (name == "dense_mean") return FingerprintScheme::DenseMean;
    if (name == "dense_prefix_attention") return FingerprintScheme::DensePrefixAttention;
    if (name == "simhash_of_mean") return FingerprintScheme::SimHashOfMean;
    throw ConfigError("unknown fingerprint scheme: " + name);
}

}  // namespace llmcache
