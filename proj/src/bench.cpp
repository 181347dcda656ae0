#include "llmcache/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numeric>

#include "llmcache/errors.hpp"
#include "llmcache/snapshot.hpp"

namespace llmcache {

using nlohmann::json;

namespace {

using clock_type = std::chrono::steady_clock;

std::uint64_t elapsed_ns(clock_type::time_point t0, clock_type::time_point t1) {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
}

double mean_of(const std::vector<std::uint64_t>& xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (auto x : xs) s += static_cast<double>(x);
    return s / static_cast<double>(xs.size());
}

double median_of(std::vector<std::uint64_t> xs) {
    if (xs.empty()) return 0.0;
    const std::size_t mid = xs.size() / 2;
    std::nth_element(xs.begin(), xs.begin() + mid, xs.end());
    double hi = static_cast<double>(xs[mid]);
    if (xs.size() % 2 == 0) {
        std::nth_element(xs.begin(), xs.begin() + mid - 1, xs.begin() + mid);
        return (hi + static_cast<double>(xs[mid - 1])) / 2.0;
    }
    return hi;
}

double flat_cosine(const MatF& a, const MatF& b) {
    if (a.data == b.data) return 1.0;  // exact replay must read as exactly 1
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        dot += static_cast<double>(a.data[i]) * b.data[i];
        na += static_cast<double>(a.data[i]) * a.data[i];
        nb += static_cast<double>(b.data[i]) * b.data[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::string iso_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct PassOutcome {
    std::vector<RequestRecord> records;
    std::vector<LayerHitRate> per_layer;
    std::uint64_t evictions = 0, invalidations = 0, cache_bytes = 0;
    std::uint64_t layer_calls = 0, validation_recomputes = 0;
};

// Runs the cached pass over [first, last) with its own engine; used as a
// whole for the serial path and per shard in parallel mode.
PassOutcome run_cached_pass(const BenchConfig& cfg, const ModelWeights& weights,
                            const std::vector<WorkloadItem>& items,
                            const std::vector<MatF>& oracle_finals, std::size_t first,
                            std::size_t last, CompressionState* compression) {
    const std::uint32_t L = cfg.model.layers;
    FingerprintContext fp_ctx = FingerprintContext::make(cfg.fingerprint, cfg.model.dim);
    std::vector<CacheBank> banks;
    std::uint64_t start_step = 0;
    if (!cfg.warm_start.empty()) {
        LoadedSnapshot snap = load_banks(cfg.warm_start);
        if (snap.banks.size() != L)
            throw ConfigError("warm-start snapshot has " + std::to_string(snap.banks.size()) +
                              " banks, config expects " + std::to_string(L));
        if (snap.any_compressed && !cfg.compression.enabled)
            throw ConfigError("warm-start snapshot holds compressed entries; enable compression");
        banks = std::move(snap.banks);
        start_step = snap.max_step + 1;
    } else {
        banks = make_banks(cfg);
    }
    CacheEngine engine(weights, std::move(fp_ctx), std::move(banks),
                       cfg.effective_tau_schedule(), cfg.cache.seed);
    engine.set_next_step(start_step);
    if (compression != nullptr) engine.set_compression(compression);

    PassOutcome out;
    out.records.resize(last - first);
    out.per_layer.resize(L);
    for (std::uint32_t l = 0; l < L; ++l) out.per_layer[l].layer = l + 1;

    for (std::size_t i = first; i < last; ++i) {
        const auto t0 = clock_type::now();
        std::pair<HiddenState, InferenceTrace> result;
        try {
            result = engine.infer(items[i].tokens);
        } catch (const NumericsError& e) {
            throw NumericsError("request " + std::to_string(i) + ": " + e.what());
        }
        auto& [state, trace] = result;
        const auto t1 = clock_type::now();
        RequestRecord& rec = out.records[i - first];
        rec.index = static_cast<std::uint32_t>(i);
        rec.base_id = items[i].base_id;
        rec.llmcache_ns = elapsed_ns(t0, t1);
        rec.fidelity_l2 = relative_l2(state.values, oracle_finals[i]);
        rec.fidelity_cos = flat_cosine(state.values, oracle_finals[i]);
        rec.decisions.reserve(L);
        for (std::uint32_t l = 0; l < L; ++l) {
            rec.decisions.push_back(trace.decisions[l].hit ? 'H' : 'M');
            if (trace.decisions[l].hit)
                out.per_layer[l].hits += 1;
            else
                out.per_layer[l].misses += 1;
        }
    }
    for (const CacheBank& bank : engine.banks()) {
        const BankStats s = bank.stats();
        out.evictions += s.evictions;
        out.invalidations += s.invalidations;
        out.cache_bytes += s.estimated_bytes;
    }
    out.layer_calls = engine.stats().layer_calls;
    out.validation_recomputes = engine.stats().validation_recomputes;
    return out;
}

}  // namespace

std::vector<CacheBank> make_banks(const BenchConfig& cfg) {
    std::vector<CacheBank> banks;
    banks.reserve(cfg.model.layers);
    for (std::uint32_t l = 1; l <= cfg.model.layers; ++l)
        banks.emplace_back(static_cast<int>(l), cfg.cache.capacity, cfg.cache.policy);
    return banks;
}

std::vector<WorkloadItem> build_workload(const BenchConfig& cfg) {
    if (cfg.corpus_path.empty()) return generate_workload(cfg.workload);
    std::vector<WorkloadItem> items;
    const auto docs = load_corpus(cfg.corpus_path);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        WorkloadItem item;
        item.tokens = hashing_tokenizer(docs[i], cfg.workload.vocab);
        if (item.tokens.size() > cfg.workload.seq_len)
            item.tokens.resize(cfg.workload.seq_len);
        item.base_id = static_cast<std::uint32_t>(i);
        items.push_back(std::move(item));
    }
    if (items.empty()) throw ConfigError("corpus produced an empty workload");
    return items;
}

MetricsReport run_benchmark(const BenchConfig& cfg) {
    cfg.validate();
    const ModelWeights weights = ModelWeights::init(cfg.model);
    const std::vector<WorkloadItem> items = build_workload(cfg);
    const std::uint32_t L = cfg.model.layers;

    MetricsReport report;
    report.config_echo = config_to_json(cfg);
    report.timestamp = iso_timestamp();
    report.parallel_mode = cfg.bench.parallel_workers > 0;

    CompressionState compression(cfg.compression, L, cfg.model.dim);
    CompressionState* comp_ptr = cfg.compression.enabled ? &compression : nullptr;

    // Baseline + oracle pass. Also feeds the PCA warmup window in order.
    for (int i = 0; i < cfg.bench.warmup; ++i) (void)forward_nocache(items[0].tokens, weights);
    std::vector<MatF> oracle_finals(items.size());
    std::vector<std::uint64_t> nocache_ns(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        std::vector<std::uint64_t> samples(static_cast<std::size_t>(cfg.bench.iterations));
        ForwardResult fr;
        for (int it = 0; it < cfg.bench.iterations; ++it) {
            const auto t0 = clock_type::now();
            try {
                fr = forward_nocache(items[i].tokens, weights);
            } catch (const NumericsError& e) {
                throw NumericsError("request " + std::to_string(i) + ": " + e.what());
            }
            const auto t1 = clock_type::now();
            samples[static_cast<std::size_t>(it)] = elapsed_ns(t0, t1);
        }
        if (comp_ptr != nullptr)
            for (std::uint32_t l = 0; l < L; ++l) comp_ptr->observe(l, fr.per_layer[l]);
        oracle_finals[i] = std::move(fr.final.values);
        nocache_ns[i] = static_cast<std::uint64_t>(mean_of(samples));
    }

    if (comp_ptr != nullptr && cfg.bench.parallel_workers > 0 && !comp_ptr->all_ready())
        throw ConfigError(
            "compression warmup did not finish during the baseline pass; "
            "lower compression.warmup_samples or run without parallel workers");

    // Cached pass, fresh banks (or warm-started from a snapshot).
    for (int i = 0; i < cfg.bench.warmup; ++i) (void)forward_nocache(items[0].tokens, weights);
    std::vector<PassOutcome> outcomes;
    if (cfg.bench.parallel_workers > 0) {
        const int workers =
            std::min<int>(cfg.bench.parallel_workers, static_cast<int>(items.size()));
        outcomes.resize(static_cast<std::size_t>(workers));
        const std::size_t chunk = (items.size() + workers - 1) / workers;
#pragma omp parallel for schedule(static, 1)
        for (int w = 0; w < workers; ++w) {
            const std::size_t first = static_cast<std::size_t>(w) * chunk;
            const std::size_t last = std::min(items.size(), first + chunk);
            if (first < last)
                outcomes[static_cast<std::size_t>(w)] = run_cached_pass(
                    cfg, weights, items, oracle_finals, first, last, comp_ptr);
        }
    } else {
        outcomes.push_back(
            run_cached_pass(cfg, weights, items, oracle_finals, 0, items.size(), comp_ptr));
    }

    std::vector<std::uint64_t> llmcache_ns;
    llmcache_ns.reserve(items.size());
    for (PassOutcome& o : outcomes) {
        for (RequestRecord& rec : o.records) {
            rec.nocache_ns = nocache_ns[rec.index];
            llmcache_ns.push_back(rec.llmcache_ns);
            report.requests.push_back(std::move(rec));
        }
        if (report.per_layer.empty()) {
            report.per_layer = std::move(o.per_layer);
        } else {
            for (std::uint32_t l = 0; l < L; ++l) {
                report.per_layer[l].hits += o.per_layer[l].hits;
                report.per_layer[l].misses += o.per_layer[l].misses;
            }
        }
        report.evictions += o.evictions;
        report.invalidations += o.invalidations;
        report.cache_bytes += o.cache_bytes;
        report.layer_calls += o.layer_calls;
        report.validation_recomputes += o.validation_recomputes;
    }
    std::sort(report.requests.begin(), report.requests.end(),
              [](const RequestRecord& a, const RequestRecord& b) { return a.index < b.index; });

    for (LayerHitRate& l : report.per_layer) {
        const std::uint64_t total = l.hits + l.misses;
        l.rate_pct = total == 0 ? 0.0 : 100.0 * static_cast<double>(l.hits) / total;
        report.total_hits += l.hits;
        report.total_misses += l.misses;
    }
    const std::uint64_t total = report.total_hits + report.total_misses;
    report.aggregate_hit_rate_pct =
        total == 0 ? 0.0 : 100.0 * static_cast<double>(report.total_hits) / total;

    report.nocache_mean_ns = mean_of(nocache_ns);
    report.nocache_median_ns = median_of(nocache_ns);
    report.llmcache_mean_ns = mean_of(llmcache_ns);
    report.llmcache_median_ns = median_of(llmcache_ns);
    report.speedup =
        report.llmcache_mean_ns > 0.0 ? report.nocache_mean_ns / report.llmcache_mean_ns : 0.0;

    double sum_l2 = 0.0, sum_cos = 0.0;
    for (const RequestRecord& r : report.requests) {
        sum_l2 += r.fidelity_l2;
        sum_cos += r.fidelity_cos;
        report.max_fidelity_l2 = std::max(report.max_fidelity_l2, r.fidelity_l2);
    }
    if (!report.requests.empty()) {
        report.mean_fidelity_l2 = sum_l2 / static_cast<double>(report.requests.size());
        report.mean_fidelity_cos = sum_cos / static_cast<double>(report.requests.size());
    }
    return report;
}

std::vector<std::pair<double, MetricsReport>> sweep_tau(const BenchConfig& cfg,
                                                        const std::vector<double>& taus) {
    std::vector<std::pair<double, MetricsReport>> out;
    out.reserve(taus.size());
    for (double tau : taus) {
        BenchConfig c = cfg;
        c.tau_schedule.assign(c.model.layers, tau);
        c.warm_start.clear();  // every tau starts from empty banks
        out.emplace_back(tau, run_benchmark(c));
    }
    return out;
}

std::vector<std::pair<std::size_t, MetricsReport>> sweep_capacity(
    const BenchConfig& cfg, const std::vector<std::size_t>& capacities) {
    std::vector<std::pair<std::size_t, MetricsReport>> out;
    out.reserve(capacities.size());
    for (std::size_t cap : capacities) {
        BenchConfig c = cfg;
        c.cache.capacity = cap;
        c.warm_start.clear();
        out.emplace_back(cap, run_benchmark(c));
    }
    return out;
}

json report_to_json(const MetricsReport& r) {
    json j;
    j["config"] = r.config_echo;
    j["timestamp"] = r.timestamp;
    j["parallel_mode"] = r.parallel_mode;
    j["requests"] = json::array();
    for (const RequestRecord& rec : r.requests) {
        j["requests"].push_back({{"index", rec.index},
                                 {"base_id", rec.base_id},
                                 {"llmcache_ns", rec.llmcache_ns},
                                 {"nocache_ns", rec.nocache_ns},
                                 {"fidelity_l2", rec.fidelity_l2},
                                 {"fidelity_cos", rec.fidelity_cos},
                                 {"decisions", rec.decisions}});
    }
    j["per_layer"] = json::array();
    for (const LayerHitRate& l : r.per_layer)
        j["per_layer"].push_back(
            {{"layer", l.layer}, {"hits", l.hits}, {"misses", l.misses}, {"rate_pct", l.rate_pct}});
    j["latency"] = {{"nocache_mean_ns", r.nocache_mean_ns},
                    {"nocache_median_ns", r.nocache_median_ns},
                    {"llmcache_mean_ns", r.llmcache_mean_ns},
                    {"llmcache_median_ns", r.llmcache_median_ns},
                    {"speedup", r.speedup}};
    j["totals"] = {{"hits", r.total_hits},
                   {"misses", r.total_misses},
                   {"aggregate_hit_rate_pct", r.aggregate_hit_rate_pct},
                   {"evictions", r.evictions},
                   {"invalidations", r.invalidations},
                   {"cache_bytes", r.cache_bytes},
                   {"layer_calls", r.layer_calls},
                   {"validation_recomputes", r.validation_recomputes},
                   {"mean_fidelity_l2", r.mean_fidelity_l2},
                   {"max_fidelity_l2", r.max_fidelity_l2},
                   {"mean_fidelity_cos", r.mean_fidelity_cos}};
    return j;
}

MetricsReport report_from_json(const json& j) {
    MetricsReport r;
    r.config_echo = j.at("config");
    r.timestamp = j.at("timestamp").get<std::string>();
    r.parallel_mode = j.at("parallel_mode").get<bool>();
    for (const json& rec : j.at("requests")) {
        RequestRecord q;
        q.index = rec.at("index").get<std::uint32_t>();
        q.base_id = rec.at("base_id").get<std::uint32_t>();
        q.llmcache_ns = rec.at("llmcache_ns").get<std::uint64_t>();
        q.nocache_ns = rec.at("nocache_ns").get<std::uint64_t>();
        q.fidelity_l2 = rec.at("fidelity_l2").get<double>();
        q.fidelity_cos = rec.at("fidelity_cos").get<double>();
        q.decisions = rec.at("decisions").get<std::string>();
        r.requests.push_back(std::move(q));
    }
    for (const json& lj : j.at("per_layer")) {
        LayerHitRate l;
        l.layer = lj.at("layer").get<std::uint32_t>();
        l.hits = lj.at("hits").get<std::uint64_t>();
        l.misses = lj.at("misses").get<std::uint64_t>();
        l.rate_pct = lj.at("rate_pct").get<double>();
        r.per_layer.push_back(l);
    }
    const json& lat = j.at("latency");
    r.nocache_mean_ns = lat.at("nocache_mean_ns").get<double>();
    r.nocache_median_ns = lat.at("nocache_median_ns").get<double>();
    r.llmcache_mean_ns = lat.at("llmcache_mean_ns").get<double>();
    r.llmcache_median_ns = lat.at("llmcache_median_ns").get<double>();
    r.speedup = lat.at("speedup").get<double>();
    const json& t = j.at("totals");
    r.total_hits = t.at("hits").get<std::uint64_t>();
    r.total_misses = t.at("misses").get<std::uint64_t>();
    r.aggregate_hit_rate_pct = t.at("aggregate_hit_rate_pct").get<double>();
    r.evictions = t.at("evictions").get<std::uint64_t>();
    r.invalidations = t.at("invalidations").get<std::uint64_t>();
    r.cache_bytes = t.at("cache_bytes").get<std::uint64_t>();
    r.layer_calls = t.at("layer_calls").get<std::uint64_t>();
    r.validation_recomputes = t.at("validation_recomputes").get<std::uint64_t>();
    r.mean_fidelity_l2 = t.at("mean_fidelity_l2").get<double>();
    r.max_fidelity_l2 = t.at("max_fidelity_l2").get<double>();
    r.mean_fidelity_cos = t.at("mean_fidelity_cos").get<double>();
    return r;
}

std::string report_to_csv(const MetricsReport& r) {
    std::string out = kCsvHeader;
    out.push_back('\n');
    char line[128];
    for (const LayerHitRate& l : r.per_layer) {
        std::snprintf(line, sizeof(line), "%u,%llu,%llu,%.6f\n", l.layer,
                      static_cast<unsigned long long>(l.hits),
                      static_cast<unsigned long long>(l.misses), l.rate_pct);
        out += line;
    }
    return out;
}

void report_emit(const MetricsReport& report, ReportFormat format, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open report path for writing: " + path);
    if (format == ReportFormat::Json)
        out << report_to_json(report).dump(2) << '\n';
    else
        out << report_to_csv(report);
    if (!out) throw IoError("error writing report: " + path);
}

json deterministic_view(const json& report_json) {
    json j = report_json;
    j.erase("timestamp");
    j.erase("latency");
    for (json& rec : j.at("requests")) {
        rec.erase("llmcache_ns");
        rec.erase("nocache_ns");
    }
    return j;
}

}  // namespace llmcache
