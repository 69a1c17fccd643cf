#pragma once

// Container for trained weights: "MCW1" magic, uint32 LE header length, JSON
// header, then a flat little-endian IEEE-754 float64 array.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mcot/common.hpp"

namespace mcot {

inline void write_weights(const std::string& path, const nlohmann::json& header,
                          const std::vector<double>& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("write_weights: cannot open " + path);
    const std::string h = header.dump();
    const std::uint32_t len = static_cast<std::uint32_t>(h.size());
    unsigned char len_le[4] = {static_cast<unsigned char>(len & 0xff),
                               static_cast<unsigned char>((len >> 8) & 0xff),
                               static_cast<unsigned char>((len >> 16) & 0xff),
                               static_cast<unsigned char>((len >> 24) & 0xff)};
    out.write("MCW1", 4);
    out.write(reinterpret_cast<const char*>(len_le), 4);
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    // doubles are IEEE-754 little-endian on every supported target
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!out) throw ValidationError("write_weights: short write to " + path);
}

inline std::pair<nlohmann::json, std::vector<double>> read_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("read_weights: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MCW1", 4) != 0) throw ParseError("read_weights: bad magic");
    unsigned char len_le[4];
    in.read(reinterpret_cast<char*>(len_le), 4);
    if (!in) throw ParseError("read_weights: truncated header length");
    const std::uint32_t len = static_cast<std::uint32_t>(len_le[0]) |
                              (static_cast<std::uint32_t>(len_le[1]) << 8) |
                              (static_cast<std::uint32_t>(len_le[2]) << 16) |
                              (static_cast<std::uint32_t>(len_le[3]) << 24);
    std::string h(len, '\0');
    in.read(h.data(), static_cast<std::streamsize>(len));
    if (!in) throw ParseError("read_weights: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(h);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("read_weights: header JSON: ") + e.what());
    }
    std::vector<double> values;
    double v = 0.0;
    while (in.read(reinterpret_cast<char*>(&v), sizeof v)) values.push_back(v);
    return {header, values};
}

}  // namespace mcot
