#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "llmcache/config.hpp"
#include "llmcache/transformer.hpp"
#include "llmcache/workload.hpp"

namespace llmcache {

struct RequestRecord {
    std::uint32_t index = 0;
    std::uint32_t base_id = 0;
    std::uint64_t llmcache_ns = 0;
    std::uint64_t nocache_ns = 0;
    double fidelity_l2 = 0.0;   // relative L2 of final state vs the oracle
    double fidelity_cos = 1.0;  // cosine of flattened final states
    std::string decisions;      // one char per layer: 'H' or 'M'

    friend bool operator==(const RequestRecord&, const RequestRecord&) = default;
};

struct LayerHitRate {
    std::uint32_t layer = 0;  // 1-based
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    double rate_pct = 0.0;

    friend bool operator==(const LayerHitRate&, const LayerHitRate&) = default;
};

struct MetricsReport {
    nlohmann::json config_echo;
    std::string timestamp;
    bool parallel_mode = false;

    std::vector<RequestRecord> requests;
    std::vector<LayerHitRate> per_layer;

    double nocache_mean_ns = 0.0;
    double nocache_median_ns = 0.0;
    double llmcache_mean_ns = 0.0;
    double llmcache_median_ns = 0.0;
    double speedup = 0.0;

    std::uint64_t total_hits = 0;
    std::uint64_t total_misses = 0;
    double aggregate_hit_rate_pct = 0.0;
    std::uint64_t evictions = 0;
    std::uint64_t invalidations = 0;
    std::uint64_t cache_bytes = 0;
    std::uint64_t layer_calls = 0;
    std::uint64_t validation_recomputes = 0;
    double mean_fidelity_l2 = 0.0;
    double max_fidelity_l2 = 0.0;
    double mean_fidelity_cos = 1.0;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

enum class ReportFormat { Csv, Json };

/// Runs the workload through forward_nocache (baseline timing + fidelity
/// oracle, and the PCA warmup when compression is on), then through
/// llmcache_infer with fresh banks, and aggregates the metric suite.
MetricsReport run_benchmark(const BenchConfig& cfg);

/// One run_benchmark per tau, each from empty banks, reports in input order.
std::vector<std::pair<double, MetricsReport>> sweep_tau(const BenchConfig& cfg,
                                                        const std::vector<double>& taus);

/// One run_benchmark per bank capacity, each from empty banks.
std::vector<std::pair<std::size_t, MetricsReport>> sweep_capacity(
    const BenchConfig& cfg, const std::vector<std::size_t>& capacities);

nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

/// Long-format per-layer CSV; the header is part of the contract.
inline constexpr const char* kCsvHeader = "layer,hits,misses,rate";
std::string report_to_csv(const MetricsReport& report);

void report_emit(const MetricsReport& report, ReportFormat format, const std::string& path);

/// The workload a config describes: generated, or tokenized from a corpus
/// file (one document per line, truncated to workload.seq_len tokens).
std::vector<WorkloadItem> build_workload(const BenchConfig& cfg);

/// Strips timing fields (and the timestamp); what remains must be identical
/// across runs with equal seeds.
nlohmann::json deterministic_view(const nlohmann::json& report_json);

std::vector<CacheBank> make_banks(const BenchConfig& cfg);

}  // namespace llmcache
