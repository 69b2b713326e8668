#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "sbgc/common.hpp"
#include "sbgc/sde.hpp"

// Binary container shared by model checkpoints and dataset files:
//   magic "SBGC" | u32 format version | u64 metadata length | metadata JSON |
//   u64 payload length (bytes) | little-endian payload.
// The metadata block is self-describing; payloads are raw row-major arrays.

namespace sbgc {

using json = nlohmann::json;

constexpr uint32_t kContainerVersion = 1;

inline void write_container(const std::string& path, const json& meta,
                            const void* payload, size_t payload_bytes) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "write_container: cannot open " + path);
    f.write("SBGC", 4);
    uint32_t ver = kContainerVersion;
    f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
    std::string m = meta.dump();
    uint64_t mlen = m.size();
    f.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    f.write(m.data(), static_cast<std::streamsize>(mlen));
    uint64_t plen = payload_bytes;
    f.write(reinterpret_cast<const char*>(&plen), sizeof(plen));
    if (payload_bytes > 0) f.write(reinterpret_cast<const char*>(payload), static_cast<std::streamsize>(plen));
    require(f.good(), "write_container: write failed for " + path);
}

struct Container {
    json meta;
    std::vector<uint8_t> payload;
};

inline Container read_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "read_container: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    require(f.good() && std::memcmp(magic, "SBGC", 4) == 0, "read_container: bad magic in " + path);
    uint32_t ver = 0;
    f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
    require(ver == kContainerVersion, "read_container: unsupported format version");
    uint64_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    std::string m(mlen, '\0');
    f.read(m.data(), static_cast<std::streamsize>(mlen));
    Container c;
    c.meta = json::parse(m);
    uint64_t plen = 0;
    f.read(reinterpret_cast<char*>(&plen), sizeof(plen));
    c.payload.resize(plen);
    if (plen > 0) f.read(reinterpret_cast<char*>(c.payload.data()), static_cast<std::streamsize>(plen));
    require(f.good(), "read_container: truncated file " + path);
    return c;
}

inline json sde_to_json(const SdeSpec& s) {
    return json{{"kind", to_string(s.kind)},
                {"beta_min", s.beta_min},
                {"beta_max", s.beta_max},
                {"t_max", s.t_max},
                {"t_eps", s.t_eps}};
}

inline SdeSpec sde_from_json(const json& j) {
    SdeSpec s;
    std::string kind = j.value("kind", "vp");
    require(kind == "vp" || kind == "subvp", "sde_from_json: unknown kind " + kind);
    s.kind = kind == "vp" ? SdeKind::VP : SdeKind::SubVP;
    s.beta_min = j.value("beta_min", s.beta_min);
    s.beta_max = j.value("beta_max", s.beta_max);
    s.t_max = j.value("t_max", s.t_max);
    s.t_eps = j.value("t_eps", s.t_eps);
    s.validate();
    return s;
}

}  // namespace sbgc
