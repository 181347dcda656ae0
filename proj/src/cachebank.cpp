#include "llmcache/cachebank.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "llmcache/errors.hpp"

namespace llmcache {

namespace {

// All 16-bit masks grouped by popcount, for bucket probing in increasing
// prefix Hamming distance.
const std::vector<std::vector<std::uint32_t>>& masks_by_popcount() {
    static const auto table = [] {
        std::vector<std::vector<std::uint32_t>> t(17);
        for (std::uint32_t m = 0; m < 65536; ++m)
            t[static_cast<std::size_t>(std::popcount(m))].push_back(m);
        return t;
    }();
    return table;
}

}  // namespace

void EvictionPolicy::validate() const {
    if (decay_half_life < 1) throw ConfigError("decay_half_life must be >= 1");
    if (validation_rate < 0.0 || validation_rate > 1.0)
        throw ConfigError("validation_rate must be in [0, 1]");
    if (divergence_epsilon < 0.0) throw ConfigError("divergence_epsilon must be >= 0");
}

double relative_l2(const MatF& cached, const MatF& recomputed) {
    if (cached.rows != recomputed.rows || cached.cols != recomputed.cols)
        throw ShapeError("divergence: activation shape mismatch");
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < cached.data.size(); ++i) {
        const double d = static_cast<double>(cached.data[i]) - recomputed.data[i];
        diff += d * d;
        ref += static_cast<double>(recomputed.data[i]) * recomputed.data[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

CacheBank::CacheBank(int layer_index, std::size_t capacity, EvictionPolicy policy)
    : layer_index_(layer_index), capacity_(capacity), policy_(policy) {
    if (capacity_ == 0) throw ConfigError("bank capacity must be positive");
    policy_.validate();
}

std::size_t CacheBank::slot_of(std::uint64_t id) const {
    auto it = slot_by_id_.find(id);
    if (it == slot_by_id_.end()) throw Error("unknown cache entry id");
    return it->second;
}

const CacheEntry& CacheBank::entry(std::uint64_t id) const { return entries_[slot_of(id)]; }
CacheEntry& CacheBank::entry_mut(std::uint64_t id) { return entries_[slot_of(id)]; }

void CacheBank::apply_hit(CacheEntry& e, std::uint64_t step) {
    e.last_hit_step = step;
    e.hit_count += 1;
    e.decayed_match_rate += 1.0;
}

LookupResult CacheBank::lookup(const Fingerprint& f, std::uint32_t n, double tau,
                               std::uint64_t step) {
    if (accel_ && std::holds_alternative<BitSignature>(f))
        return bucket_lookup(std::get<BitSignature>(f), n, tau, step);
    return scan_lookup(f, n, tau, step);
}

LookupResult CacheBank::scan_lookup(const Fingerprint& f, std::uint32_t n, double tau,
                                    std::uint64_t step) {
    const CacheEntry* best = nullptr;
    double best_sim = 0.0;
    for (const CacheEntry& e : entries_) {
        if (e.activation.seq_len != n) continue;
        const double sim = key_similarity(f, e.key);
        if (best == nullptr || sim > best_sim ||
            (sim == best_sim && (e.insert_step > best->insert_step ||
                                 (e.insert_step == best->insert_step && e.id > best->id)))) {
            best = &e;
            best_sim = sim;
        }
    }
    if (best != nullptr && best_sim >= tau) {
        LookupResult r{true, best->id, best_sim};
        apply_hit(entry_mut(best->id), step);
        hits_ += 1;
        return r;
    }
    misses_ += 1;
    return LookupResult{};
}

std::uint32_t CacheBank::bucket_prefix(const BitSignature& sig) const {
    std::uint32_t p = sig.bytes[0];
    if (sig.width >= 16) p |= static_cast<std::uint32_t>(sig.bytes[1]) << 8;
    return p;
}

LookupResult CacheBank::bucket_lookup(const BitSignature& sig, std::uint32_t n, double tau,
                                      std::uint64_t step) {
    const int prefix_bits = std::min(16, sig.width);
    const double width = static_cast<double>(sig.width);
    const std::uint32_t qp = bucket_prefix(sig);
    const CacheEntry* best = nullptr;
    double best_sim = 0.0;
    for (int r = 0; r <= prefix_bits; ++r) {
        // Entries in buckets at prefix distance r have similarity <= 1 - r/B.
        // The break must be strict: at bound == best_sim a remaining entry
        // could still win the most-recent-insert tie-break.
        const double bound = 1.0 - static_cast<double>(r) / width;
        if (best != nullptr && best_sim > bound) break;
        if (bound < tau) break;
        for (std::uint32_t mask : masks_by_popcount()[static_cast<std::size_t>(r)]) {
            if (prefix_bits < 16 && (mask >> prefix_bits) != 0) continue;
            auto it = buckets_.find((static_cast<std::uint64_t>(n) << 16) | (qp ^ mask));
            if (it == buckets_.end()) continue;
            for (std::uint64_t id : it->second) {
                const CacheEntry& e = entries_[slot_of(id)];
                const double sim = signature_similarity(sig, std::get<BitSignature>(e.key));
                if (best == nullptr || sim > best_sim ||
                    (sim == best_sim &&
                     (e.insert_step > best->insert_step ||
                      (e.insert_step == best->insert_step && e.id > best->id)))) {
                    best = &e;
                    best_sim = sim;
                }
            }
        }
    }
    if (best != nullptr && best_sim >= tau) {
        LookupResult r{true, best->id, best_sim};
        apply_hit(entry_mut(best->id), step);
        hits_ += 1;
        return r;
    }
    misses_ += 1;
    return LookupResult{};
}

void CacheBank::index_entry(const CacheEntry& e, std::size_t slot) {
    slot_by_id_[e.id] = slot;
    if (accel_ && std::holds_alternative<BitSignature>(e.key)) {
        const auto& sig = std::get<BitSignature>(e.key);
        buckets_[(static_cast<std::uint64_t>(e.activation.seq_len) << 16) | bucket_prefix(sig)]
            .push_back(e.id);
    }
}

std::optional<Fingerprint> CacheBank::insert(const Fingerprint& f, StoredActivation activation,
                                             std::uint64_t step) {
    if (activation.values.rows != static_cast<std::size_t>(activation.seq_len))
        throw ShapeError("activation rows != tagged sequence length");
    std::optional<Fingerprint> evicted;
    if (entries_.size() == capacity_) evicted = evict_one(step);
    CacheEntry e;
    e.id = next_id_++;
    e.key = f;
    e.activation = std::move(activation);
    e.insert_step = e.last_hit_step = e.last_sweep_step = step;
    e.hit_count = 0;
    e.decayed_match_rate = 1.0;
    e.divergence_estimate = 0.0;
    entries_.push_back(std::move(e));
    index_entry(entries_.back(), entries_.size() - 1);
    return evicted;
}

Fingerprint CacheBank::evict_one(std::uint64_t step) {
    (void)step;
    if (entries_.empty()) throw EmptyBank();
    auto better_victim = [&](const CacheEntry& a, const CacheEntry& b) {
        // true if a should be evicted rather than b
        double ka = 0.0, kb = 0.0;
        switch (policy_.kind) {
            case EvictionKind::Lru:
                ka = static_cast<double>(a.last_hit_step);
                kb = static_cast<double>(b.last_hit_step);
                break;
            case EvictionKind::Frequency:
                ka = static_cast<double>(a.hit_count);
                kb = static_cast<double>(b.hit_count);
                break;
            case EvictionKind::Staleness:
                ka = a.decayed_match_rate;
                kb = b.decayed_match_rate;
                break;
            case EvictionKind::DivergenceAware:
                ka = -a.divergence_estimate;
                kb = -b.divergence_estimate;
                break;
        }
        if (ka != kb) return ka < kb;
        if (a.insert_step != b.insert_step) return a.insert_step < b.insert_step;
        return a.id < b.id;
    };
    std::size_t victim = 0;
    for (std::size_t i = 1; i < entries_.size(); ++i)
        if (better_victim(entries_[i], entries_[victim])) victim = i;
    Fingerprint key = entries_[victim].key;
    remove_slot(victim);
    evictions_ += 1;
    return key;
}

std::size_t CacheBank::decay_sweep(std::uint64_t step) {
    for (CacheEntry& e : entries_) {
        if (step > e.last_sweep_step) {
            const double delta = static_cast<double>(step - e.last_sweep_step);
            e.decayed_match_rate *=
                std::exp2(-delta / static_cast<double>(policy_.decay_half_life));
            e.last_sweep_step = step;
        }
    }
    std::size_t removed = 0;
    for (std::size_t i = entries_.size(); i-- > 0;) {
        if (entries_[i].decayed_match_rate < policy_.staleness_floor) {
            remove_slot(i);
            ++removed;
        }
    }
    flushed_ += removed;
    return removed;
}

ValidationOutcome CacheBank::validate_entry(std::uint64_t entry_id, const MatF& recomputed) {
    CacheEntry& e = entry_mut(entry_id);
    if (e.activation.compressed)
        throw ShapeError("compressed entry needs caller-reconstructed values to validate");
    return validate_entry(entry_id, e.activation.values, recomputed);
}

ValidationOutcome CacheBank::validate_entry(std::uint64_t entry_id, const MatF& cached_values,
                                            const MatF& recomputed) {
    const double divergence = relative_l2(cached_values, recomputed);
    CacheEntry& e = entry_mut(entry_id);
    e.divergence_estimate = divergence;
    if (divergence > policy_.divergence_epsilon) {
        remove_slot(slot_of(entry_id));
        invalidations_ += 1;
        return ValidationOutcome::Invalidated;
    }
    return ValidationOutcome::Kept;
}

void CacheBank::remove_slot(std::size_t slot) {
    const std::uint64_t id = entries_[slot].id;
    slot_by_id_.erase(id);
    if (accel_ && std::holds_alternative<BitSignature>(entries_[slot].key)) {
        const auto& sig = std::get<BitSignature>(entries_[slot].key);
        auto key = (static_cast<std::uint64_t>(entries_[slot].activation.seq_len) << 16) |
                   bucket_prefix(sig);
        auto it = buckets_.find(key);
        if (it != buckets_.end()) {
            auto& ids = it->second;
            ids.erase(std::remove(ids.begin(), ids.end(), id), ids.end());
            if (ids.empty()) buckets_.erase(it);
        }
    }
    if (slot != entries_.size() - 1) {
        entries_[slot] = std::move(entries_.back());
        slot_by_id_[entries_[slot].id] = slot;
    }
    entries_.pop_back();
}

BankStats CacheBank::stats() const {
    BankStats s;
    s.hits = hits_;
    s.misses = misses_;
    s.evictions = evictions_;
    s.invalidations = invalidations_;
    s.occupancy = entries_.size();
    std::size_t bytes = 0;
    for (const CacheEntry& e : entries_) bytes += e.activation.payload_bytes() + key_bytes(e.key);
    s.estimated_bytes = bytes;
    return s;
}

void CacheBank::set_lookup_accel(bool on) {
    if (on == accel_) return;
    accel_ = on;
    rebuild_buckets();
}

void CacheBank::rebuild_buckets() {
    buckets_.clear();
    if (!accel_) return;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const CacheEntry& e = entries_[i];
        if (std::holds_alternative<BitSignature>(e.key)) {
            const auto& sig = std::get<BitSignature>(e.key);
            buckets_[(static_cast<std::uint64_t>(e.activation.seq_len) << 16) |
                     bucket_prefix(sig)]
                .push_back(e.id);
        }
    }
}

void CacheBank::restore_entry(CacheEntry e) {
    if (entries_.size() == capacity_)
        throw Error("cannot restore entry into a full bank");
    e.id = next_id_++;
    entries_.push_back(std::move(e));
    index_entry(entries_.back(), entries_.size() - 1);
}

}  // namespace llmcache
