#pragma once

#include <string>
#include <vector>

#include "llmcache/cachebank.hpp"

namespace llmcache {

// Versioned binary snapshot of a bank set: magic "LLMC", u16 format version,
// then per-bank headers and entries. Counters are not persisted; a warm-start
// run reports its own statistics.

inline constexpr char kSnapshotMagic[4] = {'L', 'L', 'M', 'C'};
inline constexpr std::uint16_t kSnapshotVersion = 1;

void save_banks(const std::vector<CacheBank>& banks, const std::string& path);

/// Rebuilds banks exactly as serialized (layer index, capacity, policy,
/// entries with their step metadata). Returns the banks and the largest step
/// seen, so callers can resume their step counter past it.
struct LoadedSnapshot {
    std::vector<CacheBank> banks;
    std::uint64_t max_step = 0;
    bool any_compressed = false;
};
LoadedSnapshot load_banks(const std::string& path);

}  // namespace llmcache
