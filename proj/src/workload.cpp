#include "llmcache/workload.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>

#include "llmcache/errors.hpp"
#include "llmcache/rng.hpp"

namespace llmcache {

void WorkloadSpec::validate() const {
    if (num_bases == 0 || variants_per_base == 0)
        throw ConfigError("workload counts must be positive");
    if (perturbation_rate < 0.0 || perturbation_rate > 1.0)
        throw ConfigError("workload perturbation_rate must be in [0, 1]");
    if (seq_len == 0) throw ConfigError("workload seq_len must be positive");
    if (vocab < 2) throw ConfigError("workload vocab must be >= 2");
}

std::vector<WorkloadItem> generate_workload(const WorkloadSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::uint32_t n = spec.seq_len;
    const auto perturb_count = static_cast<std::uint32_t>(
        std::ceil(spec.perturbation_rate * static_cast<double>(n)));

    std::vector<WorkloadItem> items;
    items.reserve(static_cast<std::size_t>(spec.num_bases) * spec.variants_per_base);
    std::vector<std::uint32_t> positions(n);
    for (std::uint32_t b = 0; b < spec.num_bases; ++b) {
        TokenSeq base(n);
        for (auto& t : base) t = static_cast<TokenId>(rng.next_below(spec.vocab));
        for (std::uint32_t v = 0; v < spec.variants_per_base; ++v) {
            WorkloadItem item;
            item.tokens = base;
            item.base_id = b;
            item.rho_applied = spec.perturbation_rate;
            if (perturb_count > 0) {
                // Partial Fisher-Yates picks perturb_count distinct positions.
                std::iota(positions.begin(), positions.end(), 0u);
                for (std::uint32_t i = 0; i < perturb_count; ++i) {
                    const auto j = i + static_cast<std::uint32_t>(rng.next_below(n - i));
                    std::swap(positions[i], positions[j]);
                }
                for (std::uint32_t i = 0; i < perturb_count; ++i)
                    item.tokens[positions[i]] =
                        static_cast<TokenId>(rng.next_below(spec.vocab));
            }
            items.push_back(std::move(item));
        }
    }
    if (spec.order == WorkloadOrder::Shuffled) {
        for (std::size_t i = items.size(); i > 1; --i)
            std::swap(items[i - 1], items[rng.next_below(i)]);
    }
    return items;
}

TokenSeq hashing_tokenizer(std::string_view text, std::uint32_t vocab) {
    if (vocab < 2) throw ConfigError("tokenizer vocab must be >= 2");
    TokenSeq tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start)
            tokens.push_back(static_cast<TokenId>(fnv1a64(text.data() + start, i - start) % vocab));
    }
    if (tokens.empty()) throw EmptySequence("text contains no words");
    return tokens;
}

std::vector<std::string> load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);
    std::vector<std::string> docs;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const bool blank = std::all_of(line.begin(), line.end(), [](unsigned char c) {
            return std::isspace(c) != 0;
        });
        if (!blank) docs.push_back(line);
    }
    if (in.bad()) throw IoError("error reading corpus file: " + path);
    return docs;
}

}  // namespace llmcache
