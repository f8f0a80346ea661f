#pragma once

// Versioned binary checkpoints: length-prefixed named double arrays
// plus a module identity, step count, and a config snapshot. Fixed
// little-endian layout; reload -> resave is byte-identical.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "scenediff/errors.hpp"

namespace scenediff {

struct CheckpointFile {
    static constexpr uint32_t kVersion = 1;
    std::string module;  // "autoencoder" or "denoiser"
    uint64_t step = 0;
    std::string config_snapshot;
    // Insertion-ordered on write; map keeps lookup simple, names sorted.
    std::map<std::string, std::vector<double>> arrays;

    const std::vector<double>& array(const std::string& name) const {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw DataError("checkpoint: missing array: " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return arrays.count(name) > 0; }
};

namespace detail {

inline void write_u32(std::ostream& o, uint32_t v) { o.write(reinterpret_cast<char*>(&v), 4); }
inline void write_u64(std::ostream& o, uint64_t v) { o.write(reinterpret_cast<char*>(&v), 8); }
inline void write_str(std::ostream& o, const std::string& s) {
    write_u64(o, s.size());
    o.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline uint32_t read_u32(std::istream& i) {
    uint32_t v = 0;
    i.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline uint64_t read_u64(std::istream& i) {
    uint64_t v = 0;
    i.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
inline std::string read_str(std::istream& i) {
    uint64_t n = read_u64(i);
    if (n > (1ull << 32)) throw DataError("checkpoint: corrupt string length");
    std::string s(n, '\0');
    i.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

}  // namespace detail

inline void write_checkpoint(const std::string& path, const CheckpointFile& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out.write("SDCP", 4);
    detail::write_u32(out, CheckpointFile::kVersion);
    detail::write_str(out, ckpt.module);
    detail::write_u64(out, ckpt.step);
    detail::write_str(out, ckpt.config_snapshot);
    detail::write_u64(out, ckpt.arrays.size());
    for (const auto& [name, data] : ckpt.arrays) {
        detail::write_str(out, name);
        detail::write_u64(out, data.size());
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * sizeof(double)));
    }
    if (!out) throw DataError("write failed: " + path);
}

inline CheckpointFile read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SDCP", 4) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    uint32_t version = detail::read_u32(in);
    if (version != CheckpointFile::kVersion)
        throw DataError("checkpoint: unrecognized version in " + path);
    CheckpointFile ckpt;
    ckpt.module = detail::read_str(in);
    ckpt.step = detail::read_u64(in);
    ckpt.config_snapshot = detail::read_str(in);
    uint64_t count = detail::read_u64(in);
    for (uint64_t a = 0; a < count; ++a) {
        std::string name = detail::read_str(in);
        uint64_t len = detail::read_u64(in);
        std::vector<double> data(len);
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(len * sizeof(double)));
        if (!in) throw DataError("checkpoint: truncated array data in " + path);
        ckpt.arrays.emplace(std::move(name), std::move(data));
    }
    return ckpt;
}

}  // namespace scenediff
