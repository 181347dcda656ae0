#include <cstdio>
#include <exception>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "llmcache/bench.hpp"
#include "llmcache/errors.hpp"
#include "llmcache/snapshot.hpp"

namespace {

using llmcache::BenchConfig;
using llmcache::MetricsReport;

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (!part.empty()) out.push_back(std::stod(part));
    }
    if (out.empty()) throw llmcache::ConfigError("empty value list: " + csv);
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& csv) {
    std::vector<std::size_t> out;
    std::stringstream ss(csv);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (!part.empty()) out.push_back(static_cast<std::size_t>(std::stoull(part)));
    }
    if (out.empty()) throw llmcache::ConfigError("empty value list: " + csv);
    return out;
}

BenchConfig config_from(const std::string& path, const std::string& corpus,
                        const std::string& warm_start) {
    BenchConfig cfg =
        path.empty() ? llmcache::parse_config(nlohmann::json::object()) : llmcache::load_config(path);
    if (!corpus.empty()) cfg.corpus_path = corpus;
    if (!warm_start.empty()) cfg.warm_start = warm_start;
    return cfg;
}

void print_summary(const MetricsReport& r) {
    std::printf("requests            %zu\n", r.requests.size());
    std::printf("hit rate            %.2f %%  (%llu hits / %llu lookups)\n",
                r.aggregate_hit_rate_pct, static_cast<unsigned long long>(r.total_hits),
                static_cast<unsigned long long>(r.total_hits + r.total_misses));
    std::printf("nocache latency     mean %.3f ms, median %.3f ms\n", r.nocache_mean_ns / 1e6,
                r.nocache_median_ns / 1e6);
    std::printf("llmcache latency    mean %.3f ms, median %.3f ms\n", r.llmcache_mean_ns / 1e6,
                r.llmcache_median_ns / 1e6);
    std::printf("speedup             %.2fx%s\n", r.speedup,
                r.parallel_mode ? "  (parallel mode; not a latency comparison)" : "");
    std::printf("fidelity (rel L2)   mean %.3e, max %.3e\n", r.mean_fidelity_l2,
                r.max_fidelity_l2);
    std::printf("cache memory        %.2f MiB, evictions %llu, invalidations %llu\n",
                static_cast<double>(r.cache_bytes) / (1024.0 * 1024.0),
                static_cast<unsigned long long>(r.evictions),
                static_cast<unsigned long long>(r.invalidations));
    std::printf("per-layer hit rate  ");
    for (const auto& l : r.per_layer) std::printf("%s%.0f", l.layer == 1 ? "" : " ", l.rate_pct);
    std::printf(" %%\n");
}

void emit_if_requested(const MetricsReport& r, const std::string& out,
                       const std::string& format) {
    if (out.empty()) return;
    const auto fmt = format == "csv" ? llmcache::ReportFormat::Csv : llmcache::ReportFormat::Json;
    llmcache::report_emit(r, fmt, out);
    std::printf("report written to %s (%s)\n", out.c_str(), format.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"llmcache: layer-wise activation-reuse benchmark harness"};
    app.require_subcommand(1);

    std::string config_path, out_path, corpus_path, warm_start;
    std::string format = "json";
    std::string taus_csv = "0.80,0.82,0.84,0.86,0.88,0.90";
    std::string caps_csv = "4,16,64,256";

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path,
                        "JSON config file; omitted keys use built-in defaults "
                        "(model: vocab 1024, dim 256, layers 12, ffn 4*dim; tau 0.85; "
                        "cache: capacity 1024, lru; workload: 8 bases x 4 variants, "
                        "rho 0.05, seq_len 128; bench: 1 iteration, 3 warmup)");
        sub->add_option("--corpus", corpus_path,
                        "plain-text corpus, one document per line (replaces the "
                        "generated workload)");
    };

    CLI::App* run = app.add_subcommand("run", "run NoCache vs LLMCache over one workload");
    add_common(run);
    run->add_option("--out", out_path, "write the metrics report here");
    run->add_option("--format", format, "report format: json or csv")
        ->check(CLI::IsMember({"json", "csv"}));
    run->add_option("--warm-start", warm_start, "load a bank snapshot before the cached pass");

    CLI::App* sweep_tau_cmd =
        app.add_subcommand("sweep-tau", "rerun the benchmark across similarity thresholds");
    add_common(sweep_tau_cmd);
    sweep_tau_cmd->add_option("--taus", taus_csv, "comma-separated tau values");
    sweep_tau_cmd->add_option("--out", out_path, "write a JSON array of (tau, report)");

    CLI::App* sweep_cap_cmd =
        app.add_subcommand("sweep-capacity", "rerun the benchmark across bank capacities");
    add_common(sweep_cap_cmd);
    sweep_cap_cmd->add_option("--capacities", caps_csv, "comma-separated capacities");
    sweep_cap_cmd->add_option("--out", out_path, "write a JSON array of (capacity, report)");

    CLI::App* snapshot_cmd = app.add_subcommand(
        "snapshot", "run the workload through the cache and save the banks");
    add_common(snapshot_cmd);
    snapshot_cmd->add_option("--out", out_path, "snapshot file to write")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const BenchConfig cfg = config_from(config_path, corpus_path, warm_start);
            const MetricsReport report = llmcache::run_benchmark(cfg);
            print_summary(report);
            emit_if_requested(report, out_path, format);
        } else if (sweep_tau_cmd->parsed()) {
            const BenchConfig cfg = config_from(config_path, corpus_path, "");
            const auto results = llmcache::sweep_tau(cfg, parse_doubles(taus_csv));
            std::printf("%-8s %-10s %-14s %-12s\n", "tau", "hit rate", "fidelity", "speedup");
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& [tau, report] : results) {
                std::printf("%-8.3f %-10.2f %-14.3e %-12.2f\n", tau,
                            report.aggregate_hit_rate_pct, report.mean_fidelity_l2,
                            report.speedup);
                arr.push_back({{"tau", tau}, {"report", llmcache::report_to_json(report)}});
            }
            if (!out_path.empty()) {
                std::ofstream out(out_path);
                if (!out) throw llmcache::IoError("cannot write " + out_path);
                out << arr.dump(2) << '\n';
            }
        } else if (sweep_cap_cmd->parsed()) {
            const BenchConfig cfg = config_from(config_path, corpus_path, "");
            const auto results = llmcache::sweep_capacity(cfg, parse_sizes(caps_csv));
            std::printf("%-10s %-10s %-14s %-12s\n", "capacity", "hit rate", "memory MiB",
                        "evictions");
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& [cap, report] : results) {
                std::printf("%-10zu %-10.2f %-14.3f %-12llu\n", cap,
                            report.aggregate_hit_rate_pct,
                            static_cast<double>(report.cache_bytes) / (1024.0 * 1024.0),
                            static_cast<unsigned long long>(report.evictions));
                arr.push_back(
                    {{"capacity", cap}, {"report", llmcache::report_to_json(report)}});
            }
            if (!out_path.empty()) {
                std::ofstream out(out_path);
                if (!out) throw llmcache::IoError("cannot write " + out_path);
                out << arr.dump(2) << '\n';
            }
        } else if (snapshot_cmd->parsed()) {
            BenchConfig cfg = config_from(config_path, corpus_path, "");
            const llmcache::ModelWeights weights = llmcache::ModelWeights::init(cfg.model);
            auto items = llmcache::build_workload(cfg);
            llmcache::CompressionState compression(cfg.compression, cfg.model.layers,
                                                   cfg.model.dim);
            llmcache::CacheEngine engine(
                weights, llmcache::FingerprintContext::make(cfg.fingerprint, cfg.model.dim),
                llmcache::make_banks(cfg), cfg.effective_tau_schedule(), cfg.cache.seed);
            if (cfg.compression.enabled) engine.set_compression(&compression);
            for (const auto& item : items) (void)engine.infer(item.tokens);
            llmcache::save_banks(engine.banks(), out_path);
            std::printf("snapshot of %zu banks written to %s\n", engine.banks().size(),
                        out_path.c_str());
        }
    } catch (const llmcache::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
