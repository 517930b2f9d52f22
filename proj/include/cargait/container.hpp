#pragma once

// Shared checkpoint container: magic | u32 version | u32 header_len | header u32s |
// u64 count | count f32 parameters, plus a JSON metadata sidecar at <path>.json.

#include "cargait/binary_io.hpp"
#include "cargait/error.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cargait {

inline constexpr std::uint32_t container_version = 1;

struct CheckpointMeta {
    std::uint64_t iteration = 0;
    double val_loss = 0.0;
    std::uint64_t seed = 0;
    nlohmann::json extra = nlohmann::json::object();

    bool operator==(const CheckpointMeta&) const = default;
};

inline nlohmann::json to_json(const CheckpointMeta& m) {
    nlohmann::json j = m.extra;
    j["iteration"] = m.iteration;
    j["val_loss"] = m.val_loss;
    j["seed"] = m.seed;
    return j;
}

inline CheckpointMeta meta_from_json(const nlohmann::json& j) {
    CheckpointMeta m;
    m.iteration = j.value("iteration", std::uint64_t{0});
    m.val_loss = j.value("val_loss", 0.0);
    m.seed = j.value("seed", std::uint64_t{0});
    m.extra = j;
    m.extra.erase("iteration");
    m.extra.erase("val_loss");
    m.extra.erase("seed");
    return m;
}

namespace detail {

struct Container {
    std::vector<std::uint32_t> header;
    std::vector<float> values;
    CheckpointMeta meta;
};

inline void save_container(const std::string& path, std::string_view magic, std::span<const std::uint32_t> header,
                           std::span<const float> values, const CheckpointMeta& meta) {
    ByteWriter w;
    w.bytes(magic);
    w.u32(container_version);
    w.u32(static_cast<std::uint32_t>(header.size()));
    for (auto h : header) {
        w.u32(h);
    }
    w.u64(values.size());
    for (float v : values) {
        w.f32(v);
    }
    w.write_to(path);

    std::ofstream out(path + ".json", std::ios::trunc);
    if (!out) {
        fail(ErrorKind::io, "cannot write checkpoint metadata for '" + path + "'");
    }
    out << to_json(meta).dump(2) << '\n';
}

inline Container load_container(const std::string& path, std::string_view magic) {
    auto r = ByteReader::from_file(path);
    if (r.remaining() < magic.size() || r.bytes(magic.size()) != magic) {
        fail(ErrorKind::format, "'" + path + "' is not a " + std::string(magic) + " checkpoint (bad magic)");
    }
    if (const auto version = r.u32(); version != container_version) {
        fail(ErrorKind::format, "'" + path + "' has unsupported version " + std::to_string(version));
    }
    Container c;
    c.header.resize(r.u32());
    for (auto& h : c.header) {
        h = r.u32();
    }
    const std::uint64_t count = r.u64();
    if (count * 4 != r.remaining()) {
        fail(ErrorKind::truncated, "'" + path + "' declares " + std::to_string(count) + " parameters but holds " +
                                       std::to_string(r.remaining()) + " payload bytes");
    }
    c.values.resize(count);
    for (auto& v : c.values) {
        v = r.f32();
    }
    const auto meta_path = path + ".json";
    if (std::filesystem::exists(meta_path)) {
        std::ifstream in(meta_path);
        try {
            c.meta = meta_from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& ex) {
            fail(ErrorKind::format, "malformed checkpoint metadata '" + meta_path + "': " + ex.what());
        }
    }
    return c;
}

} // namespace detail
} // namespace cargait
