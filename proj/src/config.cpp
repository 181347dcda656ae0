#include "llmcache/config.hpp"

#include <fstream>

#include "llmcache/errors.hpp"

namespace llmcache {

using nlohmann::json;

void CacheConfig::validate() const {
    if (capacity == 0) throw ConfigError("cache.capacity must be positive");
    policy.validate();
    if (policy.staleness_floor < 0.0) throw ConfigError("cache.staleness_floor must be >= 0");
}

void BenchProtocol::validate() const {
    if (iterations < 1) throw ConfigError("bench.iterations must be >= 1");
    if (warmup < 0) throw ConfigError("bench.warmup must be >= 0");
    if (parallel_workers < 0) throw ConfigError("bench.parallel_workers must be >= 0");
}

std::vector<double> BenchConfig::effective_tau_schedule() const {
    if (!tau_schedule.empty()) return tau_schedule;
    return std::vector<double>(model.layers, kDefaultTau);
}

void BenchConfig::validate() const {
    model.validate();
    fingerprint.validate(model.dim);
    cache.validate();
    compression.validate();
    workload.validate();
    bench.validate();
    if (!tau_schedule.empty() && tau_schedule.size() != model.layers)
        throw ConfigError("tau_schedule length must equal model.layers");
    if (workload.vocab > model.vocab)
        throw ConfigError("workload.vocab must be <= model.vocab");
    if (compression.enabled &&
        static_cast<std::uint32_t>(compression.components) > model.dim)
        throw ConfigError("compression.components must be <= model.dim");
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

}  // namespace

const char* policy_name(EvictionKind k) {
    switch (k) {
        case EvictionKind::Lru: return "lru";
        case EvictionKind::Frequency: return "frequency";
        case EvictionKind::Staleness: return "staleness";
        case EvictionKind::DivergenceAware: return "divergence_aware";
    }
    return "?";
}

EvictionKind policy_from_name(const std::string& name) {
    if (name == "lru") return EvictionKind::Lru;
    if (name == "frequency") return EvictionKind::Frequency;
    if (name == "staleness") return EvictionKind::Staleness;
    if (name == "divergence_aware") return EvictionKind::DivergenceAware;
    throw ConfigError("unknown eviction policy: " + name);
}

BenchConfig parse_config(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    BenchConfig cfg;

    if (j.contains("model")) {
        const json& m = j.at("model");
        read_field(m, "vocab", cfg.model.vocab);
        read_field(m, "dim", cfg.model.dim);
        read_field(m, "layers", cfg.model.layers);
        read_field(m, "ffn_dim", cfg.model.ffn_dim);
        read_field(m, "seed", cfg.model.seed);
    }
    if (j.contains("fingerprint")) {
        const json& f = j.at("fingerprint");
        if (f.contains("scheme"))
            cfg.fingerprint.scheme = scheme_from_name(f.at("scheme").get<std::string>());
        read_field(f, "dense_dim", cfg.fingerprint.dense_dim);
        read_field(f, "signature_bits", cfg.fingerprint.signature_bits);
        read_field(f, "prefix_len", cfg.fingerprint.prefix_len);
        read_field(f, "seed", cfg.fingerprint.seed);
    }
    if (j.contains("cache")) {
        const json& c = j.at("cache");
        read_field(c, "capacity", cfg.cache.capacity);
        if (c.contains("policy"))
            cfg.cache.policy.kind = policy_from_name(c.at("policy").get<std::string>());
        read_field(c, "decay_half_life", cfg.cache.policy.decay_half_life);
        read_field(c, "staleness_floor", cfg.cache.policy.staleness_floor);
        read_field(c, "divergence_epsilon", cfg.cache.policy.divergence_epsilon);
        read_field(c, "validation_rate", cfg.cache.policy.validation_rate);
        read_field(c, "seed", cfg.cache.seed);
    }
    if (j.contains("compression")) {
        const json& c = j.at("compression");
        read_field(c, "enabled", cfg.compression.enabled);
        read_field(c, "components", cfg.compression.components);
        read_field(c, "warmup_samples", cfg.compression.warmup_samples);
    }
    bool workload_vocab_given = false;
    if (j.contains("workload")) {
        const json& w = j.at("workload");
        read_field(w, "num_bases", cfg.workload.num_bases);
        read_field(w, "variants_per_base", cfg.workload.variants_per_base);
        read_field(w, "perturbation_rate", cfg.workload.perturbation_rate);
        read_field(w, "seq_len", cfg.workload.seq_len);
        if (w.contains("vocab")) {
            read_field(w, "vocab", cfg.workload.vocab);
            workload_vocab_given = true;
        }
        read_field(w, "seed", cfg.workload.seed);
        if (w.contains("order")) {
            const auto name = w.at("order").get<std::string>();
            if (name == "grouped") cfg.workload.order = WorkloadOrder::Grouped;
            else if (name == "shuffled") cfg.workload.order = WorkloadOrder::Shuffled;
            else throw ConfigError("workload.order must be 'grouped' or 'shuffled'");
        }
    }
    if (!workload_vocab_given) cfg.workload.vocab = cfg.model.vocab;

    if (j.contains("tau") && j.contains("tau_schedule"))
        throw ConfigError("give either 'tau' or 'tau_schedule', not both");
    if (j.contains("tau")) {
        const double tau = j.at("tau").get<double>();
        cfg.tau_schedule.assign(cfg.model.layers, tau);
    }
    if (j.contains("tau_schedule"))
        cfg.tau_schedule = j.at("tau_schedule").get<std::vector<double>>();

    if (j.contains("bench")) {
        const json& b = j.at("bench");
        read_field(b, "iterations", cfg.bench.iterations);
        read_field(b, "warmup", cfg.bench.warmup);
        read_field(b, "parallel_workers", cfg.bench.parallel_workers);
    }

    cfg.validate();
    return cfg;
}

BenchConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

json config_to_json(const BenchConfig& cfg) {
    json j;
    j["model"] = {{"vocab", cfg.model.vocab},
                  {"dim", cfg.model.dim},
                  {"layers", cfg.model.layers},
                  {"ffn_dim", cfg.model.effective_ffn()},
                  {"seed", cfg.model.seed}};
    j["fingerprint"] = {{"scheme", scheme_name(cfg.fingerprint.scheme)},
                        {"dense_dim", cfg.fingerprint.dense_dim},
                        {"signature_bits", cfg.fingerprint.signature_bits},
                        {"prefix_len", cfg.fingerprint.prefix_len},
                        {"seed", cfg.fingerprint.seed}};
    j["cache"] = {{"capacity", cfg.cache.capacity},
                  {"policy", policy_name(cfg.cache.policy.kind)},
                  {"decay_half_life", cfg.cache.policy.decay_half_life},
                  {"staleness_floor", cfg.cache.policy.staleness_floor},
                  {"divergence_epsilon", cfg.cache.policy.divergence_epsilon},
                  {"validation_rate", cfg.cache.policy.validation_rate},
                  {"seed", cfg.cache.seed}};
    j["compression"] = {{"enabled", cfg.compression.enabled},
                        {"components", cfg.compression.components},
                        {"warmup_samples", cfg.compression.warmup_samples}};
    j["workload"] = {{"num_bases", cfg.workload.num_bases},
                     {"variants_per_base", cfg.workload.variants_per_base},
                     {"perturbation_rate", cfg.workload.perturbation_rate},
                     {"seq_len", cfg.workload.seq_len},
                     {"vocab", cfg.workload.vocab},
                     {"seed", cfg.workload.seed},
                     {"order", cfg.workload.order == WorkloadOrder::Grouped ? "grouped"
                                                                            : "shuffled"}};
    j["tau_schedule"] = cfg.effective_tau_schedule();
    j["bench"] = {{"iterations", cfg.bench.iterations},
                  {"warmup", cfg.bench.warmup},
                  {"parallel_workers", cfg.bench.parallel_workers}};
    if (!cfg.corpus_path.empty()) j["corpus"] = cfg.corpus_path;
    return j;
}

}  // namespace llmcache
