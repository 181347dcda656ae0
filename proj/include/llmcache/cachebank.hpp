#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "llmcache/fingerprint.hpp"
#include "llmcache/matrix.hpp"

namespace llmcache {

enum class EvictionKind { Lru, Frequency, Staleness, DivergenceAware };

struct EvictionPolicy {
    EvictionKind kind = EvictionKind::Lru;
    std::uint64_t decay_half_life = 256;  // steps
    double staleness_floor = 0.05;
    double divergence_epsilon = 1e-3;  // relative L2
    double validation_rate = 0.05;

    void validate() const;
};

/// Activation payload: raw n x d values, or an n x c PCA projection when
/// compression is on. seq_len always carries the original n.
struct StoredActivation {
    MatF values;
    std::uint32_t seq_len = 0;
    bool compressed = false;

    std::size_t payload_bytes() const { return values.size() * sizeof(float); }
};

struct CacheEntry {
    std::uint64_t id = 0;  // monotone per bank; doubles as the final tie-break
    Fingerprint key;
    StoredActivation activation;
    std::uint64_t insert_step = 0;
    std::uint64_t last_hit_step = 0;
    std::uint64_t last_sweep_step = 0;
    std::uint64_t hit_count = 0;
    double decayed_match_rate = 1.0;
    double divergence_estimate = 0.0;
};

struct LookupResult {
    bool hit = false;
    std::uint64_t entry_id = 0;
    double similarity = 0.0;
};

enum class ValidationOutcome { Kept, Invalidated };

struct BankStats {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t evictions = 0;
    std::uint64_t invalidations = 0;
    std::size_t occupancy = 0;
    std::size_t estimated_bytes = 0;
};

/// Per-layer similarity-keyed activation store. Not internally synchronized:
/// callers get many concurrent readers or one writer, and lookup counts as a
/// writer (it touches recency metadata).
class CacheBank {
public:
    CacheBank(int layer_index, std::size_t capacity, EvictionPolicy policy);

    /// Scans entries whose sequence length matches n and returns the most
    /// similar one if its similarity reaches tau. Hits refresh recency,
    /// hit count and the decayed match rate. Ties on similarity go to the
    /// most recently inserted entry.
    LookupResult lookup(const Fingerprint& f, std::uint32_t n, double tau, std::uint64_t step);

    /// Inserts an entry, evicting first when at capacity. Returns the evicted key.
    std::optional<Fingerprint> insert(const Fingerprint& f, StoredActivation activation,
                                      std::uint64_t step);

    /// Removes one entry per policy: LRU = min last_hit_step, Frequency =
    /// min hit_count, Staleness = min decayed_match_rate, DivergenceAware =
    /// max divergence_estimate. Ties go to the oldest insert.
    Fingerprint evict_one(std::uint64_t step);

    /// Multiplies every entry's decayed_match_rate by 2^(-delta/half_life),
    /// delta measured from the entry's last sweep, then flushes entries below
    /// the staleness floor. Returns the number flushed.
    std::size_t decay_sweep(std::uint64_t step);

    ValidationOutcome validate_entry(std::uint64_t entry_id, const MatF& recomputed);
    /// Compression variant: the caller supplies the reconstructed cached values.
    ValidationOutcome validate_entry(std::uint64_t entry_id, const MatF& cached_values,
                                     const MatF& recomputed);

    BankStats stats() const;

    int layer_index() const { return layer_index_; }
    std::size_t capacity() const { return capacity_; }
    const EvictionPolicy& policy() const { return policy_; }
    std::size_t size() const { return entries_.size(); }
    std::uint64_t flushed() const { return flushed_; }

    const CacheEntry& entry(std::uint64_t id) const;
    CacheEntry& entry_mut(std::uint64_t id);
    const std::vector<CacheEntry>& entries() const { return entries_; }

    /// Optional exact lookup accelerator for signature keys: buckets entries
    /// by a 16-bit signature prefix and probes buckets in increasing prefix
    /// Hamming distance, cutting off once no remaining bucket can beat the
    /// best similarity found. Dense keys always use the scan.
    void set_lookup_accel(bool on);
    bool lookup_accel() const { return accel_; }

    /// Snapshot support: re-adds a fully populated entry (id reassigned).
    void restore_entry(CacheEntry e);

private:
    std::size_t slot_of(std::uint64_t id) const;
    void remove_slot(std::size_t slot);
    void apply_hit(CacheEntry& e, std::uint64_t step);
    LookupResult scan_lookup(const Fingerprint& f, std::uint32_t n, double tau,
                             std::uint64_t step);
    LookupResult bucket_lookup(const BitSignature& sig, std::uint32_t n, double tau,
                               std::uint64_t step);
    std::uint32_t bucket_prefix(const BitSignature& sig) const;
    void index_entry(const CacheEntry& e, std::size_t slot);
    void rebuild_buckets();

    int layer_index_;
    std::size_t capacity_;
    EvictionPolicy policy_;
    std::vector<CacheEntry> entries_;
    std::unordered_map<std::uint64_t, std::size_t> slot_by_id_;
    // (seq_len, prefix) -> entry ids; only maintained while accel_ is on
    std::unordered_map<std::uint64_t, std::vector<std::uint64_t>> buckets_;
    bool accel_ = false;
    std::uint64_t next_id_ = 1;
    std::uint64_t hits_ = 0, misses_ = 0, evictions_ = 0, invalidations_ = 0, flushed_ = 0;
};

/// Relative L2 divergence: |cached - recomputed|_2 / max(|recomputed|_2, 1e-12).
double relative_l2(const MatF& cached, const MatF& recomputed);

}  // namespace llmcache
