#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "llmcache/types.hpp"

namespace llmcache {

enum class WorkloadOrder { Grouped, Shuffled };

struct WorkloadSpec {
    std::uint32_t num_bases = 8;
    std::uint32_t variants_per_base = 4;
    double perturbation_rate = 0.05;  // rho: fraction of positions resampled
    std::uint32_t seq_len = 128;
    std::uint32_t vocab = 1024;
    std::uint64_t seed = 7;
    WorkloadOrder order = WorkloadOrder::Grouped;

    void validate() const;
};

struct WorkloadItem {
    TokenSeq tokens;
    std::uint32_t base_id = 0;
    double rho_applied = 0.0;
};

/// num_bases random base sequences, each emitted as variants_per_base copies
/// with ceil(rho * n) distinct positions resampled. Deterministic per seed.
std::vector<WorkloadItem> generate_workload(const WorkloadSpec& spec);

/// Whitespace-split words mapped to fnv1a64(word) % vocab; stable across
/// platforms. Throws EmptySequence when the text contains no words.
TokenSeq hashing_tokenizer(std::string_view text, std::uint32_t vocab);

/// One document per non-blank line, in order.
std::vector<std::string> load_corpus(const std::string& path);

}  // namespace llmcache
