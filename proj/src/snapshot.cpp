#include "llmcache/snapshot.hpp"

#include <cstring>
#include <fstream>

#include "llmcache/errors.hpp"

namespace llmcache {

namespace {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("truncated snapshot");
}

void write_key(std::ostream& out, const Fingerprint& key) {
    if (std::holds_alternative<DenseFingerprint>(key)) {
        const auto& d = std::get<DenseFingerprint>(key);
        write_pod<std::uint8_t>(out, 0);
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d.values.size()));
        write_pod<std::uint8_t>(out, d.normalized ? 1 : 0);
        out.write(reinterpret_cast<const char*>(d.values.data()),
                  static_cast<std::streamsize>(d.values.size() * sizeof(double)));
    } else {
        const auto& s = std::get<BitSignature>(key);
        write_pod<std::uint8_t>(out, 1);
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.width));
        out.write(reinterpret_cast<const char*>(s.bytes.data()),
                  static_cast<std::streamsize>(s.bytes.size()));
    }
}

Fingerprint read_key(std::istream& in) {
    std::uint8_t kind = 0;
    read_pod(in, kind);
    if (kind == 0) {
        DenseFingerprint d;
        std::uint32_t dim = 0;
        std::uint8_t normalized = 0;
        read_pod(in, dim);
        read_pod(in, normalized);
        d.values.resize(dim);
        d.normalized = normalized != 0;
        in.read(reinterpret_cast<char*>(d.values.data()),
                static_cast<std::streamsize>(dim * sizeof(double)));
        if (!in) throw IoError("truncated snapshot key");
        return d;
    }
    if (kind == 1) {
        BitSignature s;
        std::uint32_t width = 0;
        read_pod(in, width);
        s.width = static_cast<int>(width);
        s.bytes.resize((width + 7) / 8);
        in.read(reinterpret_cast<char*>(s.bytes.data()),
                static_cast<std::streamsize>(s.bytes.size()));
        if (!in) throw IoError("truncated snapshot key");
        return s;
    }
    throw IoError("snapshot has unknown key kind");
}

}  // namespace

void save_banks(const std::vector<CacheBank>& banks, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open snapshot for writing: " + path);
    out.write(kSnapshotMagic, 4);
    write_pod(out, kSnapshotVersion);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(banks.size()));
    for (const CacheBank& bank : banks) {
        write_pod<std::int32_t>(out, bank.layer_index());
        write_pod<std::uint64_t>(out, bank.capacity());
        const EvictionPolicy& p = bank.policy();
        write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(p.kind));
        write_pod<std::uint64_t>(out, p.decay_half_life);
        write_pod<double>(out, p.staleness_floor);
        write_pod<double>(out, p.divergence_epsilon);
        write_pod<double>(out, p.validation_rate);
        write_pod<std::uint64_t>(out, bank.size());
        for (const CacheEntry& e : bank.entries()) {
            write_key(out, e.key);
            write_pod<std::uint8_t>(out, e.activation.compressed ? 1 : 0);
            write_pod<std::uint32_t>(out, e.activation.seq_len);
            write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.activation.values.rows));
            write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.activation.values.cols));
            out.write(reinterpret_cast<const char*>(e.activation.values.data.data()),
                      static_cast<std::streamsize>(e.activation.values.size() * sizeof(float)));
            write_pod(out, e.insert_step);
            write_pod(out, e.last_hit_step);
            write_pod(out, e.last_sweep_step);
            write_pod(out, e.hit_count);
            write_pod(out, e.decayed_match_rate);
            write_pod(out, e.divergence_estimate);
        }
    }
    if (!out) throw IoError("error writing snapshot: " + path);
}

LoadedSnapshot load_banks(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open snapshot: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kSnapshotMagic, 4) != 0)
        throw IoError("not a bank snapshot (bad magic)");
    std::uint16_t version = 0;
    read_pod(in, version);
    if (version != kSnapshotVersion)
        throw IoError("unsupported snapshot version " + std::to_string(version));

    LoadedSnapshot result;
    std::uint32_t bank_count = 0;
    read_pod(in, bank_count);
    result.banks.reserve(bank_count);
    for (std::uint32_t b = 0; b < bank_count; ++b) {
        std::int32_t layer_index = 0;
        std::uint64_t capacity = 0;
        std::uint8_t kind = 0;
        EvictionPolicy policy;
        read_pod(in, layer_index);
        read_pod(in, capacity);
        read_pod(in, kind);
        read_pod(in, policy.decay_half_life);
        read_pod(in, policy.staleness_floor);
        read_pod(in, policy.divergence_epsilon);
        read_pod(in, policy.validation_rate);
        if (kind > static_cast<std::uint8_t>(EvictionKind::DivergenceAware))
            throw IoError("snapshot has unknown eviction policy");
        policy.kind = static_cast<EvictionKind>(kind);
        CacheBank bank(layer_index, capacity, policy);
        std::uint64_t entry_count = 0;
        read_pod(in, entry_count);
        for (std::uint64_t i = 0; i < entry_count; ++i) {
            CacheEntry e;
            e.key = read_key(in);
            std::uint8_t compressed = 0;
            std::uint32_t rows = 0, cols = 0;
            read_pod(in, compressed);
            read_pod(in, e.activation.seq_len);
            read_pod(in, rows);
            read_pod(in, cols);
            e.activation.compressed = compressed != 0;
            e.activation.values = MatF(rows, cols);
            in.read(reinterpret_cast<char*>(e.activation.values.data.data()),
                    static_cast<std::streamsize>(e.activation.values.size() * sizeof(float)));
            if (!in) throw IoError("truncated snapshot entry");
            read_pod(in, e.insert_step);
            read_pod(in, e.last_hit_step);
            read_pod(in, e.last_sweep_step);
            read_pod(in, e.hit_count);
            read_pod(in, e.decayed_match_rate);
            read_pod(in, e.divergence_estimate);
            result.max_step = std::max({result.max_step, e.insert_step, e.last_hit_step});
            result.any_compressed = result.any_compressed || e.activation.compressed;
            bank.restore_entry(std::move(e));
        }
        result.banks.push_back(std::move(bank));
    }
    return result;
}

}  // namespace llmcache
