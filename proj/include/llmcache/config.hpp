#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "llmcache/cachebank.hpp"
#include "llmcache/compression.hpp"
#include "llmcache/fingerprint.hpp"
#include "llmcache/transformer.hpp"
#include "llmcache/workload.hpp"

namespace llmcache {

struct CacheConfig {
    std::size_t capacity = 1024;
    EvictionPolicy policy;  // kind + decay/staleness/divergence/validation knobs
    std::uint64_t seed = 0x7a11d;

    void validate() const;
};

struct BenchProtocol {
    int iterations = 1;  // timed repeats per NoCache request
    int warmup = 3;      // untimed forward passes before each measured loop
    int parallel_workers = 0;  // 0 = serial measurement loop

    void validate() const;
};

inline constexpr double kDefaultTau = 0.85;

struct BenchConfig {
    ModelConfig model;
    FingerprintConfig fingerprint;
    CacheConfig cache;
    CompressionConfig compression;
    WorkloadSpec workload;
    std::vector<double> tau_schedule;  // empty -> constant kDefaultTau per layer
    BenchProtocol bench;
    std::string corpus_path;    // optional; replaces the generated workload
    std::string warm_start;     // optional bank snapshot loaded before the cached pass

    std::vector<double> effective_tau_schedule() const;
    void validate() const;
};

BenchConfig parse_config(const nlohmann::json& j);
BenchConfig load_config(const std::string& path);
nlohmann::json config_to_json(const BenchConfig& cfg);

const char* policy_name(EvictionKind k);
EvictionKind policy_from_name(const std::string& name);

}  // namespace llmcache
