#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "llmcache/matrix.hpp"
#include "llmcache/types.hpp"

namespace llmcache {

struct ModelWeights;  // transformer.hpp

enum class FingerprintScheme {
    DenseMean,             // projected mean-pooled embeddings
    DensePrefixAttention,  // projected mean of the first k layer-1 attention rows
    SimHashOfMean,         // bit signature of mean-pooled embeddings
};

struct FingerprintConfig {
    FingerprintScheme scheme = FingerprintScheme::DenseMean;
    int dense_dim = 64;        // D
    int signature_bits = 128;  // B, multiple of 8
    int prefix_len = 16;       // k
    std::uint64_t seed = 0x5eed;

    void validate(std::size_t model_dim) const;
};

/// Unit-norm dense cache key.
struct DenseFingerprint {
    std::vector<double> values;
    bool normalized = false;

    friend bool operator==(const DenseFingerprint&, const DenseFingerprint&) = default;
};

/// Fixed-width bit signature; width is a multiple of 8 so bytes carry no padding.
struct BitSignature {
    int width = 0;
    std::vector<std::uint8_t> bytes;

    bool bit(int i) const { return (bytes[i >> 3] >> (i & 7)) & 1; }
    void set_bit(int i) { bytes[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7)); }

    friend bool operator==(const BitSignature&, const BitSignature&) = default;
};

using Fingerprint = std::variant<DenseFingerprint, BitSignature>;

/// One unit-norm hyperplane per signature bit; regenerating with the same
/// (bits, dim, seed) yields bit-identical normals.
struct HyperplaneSet {
    std::uint64_t seed = 0;
    MatD normals;  // B x d

    static HyperplaneSet generate(int bits, std::size_t dim, std::uint64_t seed);
};

/// Seeded Gaussian projection with unit-norm rows (out_dim x in_dim).
MatD gaussian_projection(std::size_t out_dim, std::size_t in_dim, std::uint64_t seed);

/// Everything a fingerprint call needs besides the input: the config plus the
/// projection/hyperplanes it implies, generated once.
struct FingerprintContext {
    FingerprintConfig config;
    MatD projection;      // D x d, dense schemes
    HyperplaneSet planes; // B x d, simhash scheme

    static FingerprintContext make(const FingerprintConfig& cfg, std::size_t model_dim);
};

// ---- operations -----------------------------------------------------------

/// Column means of an n x d matrix (double accumulation).
std::vector<double> mean_pool(const MatF& embeddings);

/// Mean over the first min(k, n) rows.
std::vector<double> prefix_attention_stats(const MatF& attention_outputs, int k);

/// normalize(projection * v); throws DegenerateFingerprint if the product is zero.
DenseFingerprint reduce_dense(const std::vector<double>& v, const MatD& projection);

/// Bit i = 1 iff dot(normals[i], v) >= 0.
BitSignature simhash(const std::vector<double>& v, const HyperplaneSet& planes);

/// dot(a,b)/(|a||b|), clamped into [-1, 1].
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

/// Hamming agreement: 1 - hamming(a,b)/B.
double signature_similarity(const BitSignature& a, const BitSignature& b);

/// Similarity between two keys of the same kind; throws KeyKindError otherwise.
double key_similarity(const Fingerprint& a, const Fingerprint& b);

std::size_t key_bytes(const Fingerprint& f);

/// Computes the configured fingerprint of a token sequence.
Fingerprint fingerprint(const TokenSeq& tokens, const ModelWeights& model,
                        const FingerprintContext& ctx);

const char* scheme_name(FingerprintScheme s);
FingerprintScheme scheme_from_name(const std::string& name);

}  // namespace llmcache
