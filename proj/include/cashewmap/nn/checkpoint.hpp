#pragma once

// Checkpoint container: "CMCK", u32 version, the ModelConfig as JSON, schema hash,
// phase tag, head description, frozen flags and every parameter blob (f64). A JSON
// manifest is written next to it as `<path>.json`.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "cashewmap/error.hpp"
#include "cashewmap/nn/unet.hpp"
#include "cashewmap/util.hpp"

namespace cashewmap::nn {

namespace checkpoint_detail {

constexpr std::uint32_t kVersion = 1;

template <typename V>
void put(std::ostream& o, const V& v) {
    o.write(reinterpret_cast<const char*>(&v), sizeof(V));
}
inline void put_str(std::ostream& o, const std::string& s) {
    put<std::uint64_t>(o, s.size());
    o.write(s.data(), static_cast<std::streamsize>(s.size()));
}
template <typename V>
V get(std::istream& in) {
    V v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!in) throw DataError("truncated checkpoint");
    return v;
}
inline std::string get_str(std::istream& in) {
    auto n = get<std::uint64_t>(in);
    if (n > (1u << 26)) throw DataError("corrupt checkpoint string");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw DataError("truncated checkpoint");
    return s;
}

}  // namespace checkpoint_detail

struct CheckpointInfo {
    std::uint64_t schema_hash = 0;
    int phase = 0;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const SegModel<T>& m, std::uint64_t schema_hash) {
    using namespace checkpoint_detail;
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write checkpoint: " + path.string());
        out.write("CMCK", 4);
        put<std::uint32_t>(out, kVersion);
        put_str(out, to_json(m.cfg).dump());
        put<std::uint64_t>(out, schema_hash);
        put<std::int32_t>(out, m.phase);
        put<std::uint8_t>(out, m.head_type == HeadType::Softmax ? 0 : 1);
        put<std::int32_t>(out, m.head_channels);
        put<std::uint8_t>(out, m.trained ? 1 : 0);
        for (int g = 0; g < kParamGroups; ++g) put<std::uint8_t>(out, m.params.frozen(static_cast<ParamGroup>(g)) ? 1 : 0);
        put<std::uint64_t>(out, m.params.count());
        for (const auto& p : m.params.info()) {
            put_str(out, p.name);
            put<std::int32_t>(out, static_cast<std::int32_t>(p.group));
            put<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.size()));
            for (int d : p.shape) put<std::int32_t>(out, d);
            put<std::uint64_t>(out, p.size);
            for (std::size_t i = 0; i < p.size; ++i) put<double>(out, static_cast<double>(m.params.values()[p.offset + i]));
        }
        if (!out) throw DataError("short write: " + path.string());
    }
    std::filesystem::rename(tmp, path);

    nlohmann::json manifest = {{"format", "cashewmap-checkpoint"},
                               {"version", kVersion},
                               {"model", to_json(m.cfg)},
                               {"schema_hash", hex64(schema_hash)},
                               {"phase", m.phase},
                               {"head", to_string(m.head_type)},
                               {"head_channels", m.head_channels},
                               {"trained", m.trained},
                               {"parameters", m.params.total_size()},
                               {"encoder_hash", hex64(encoder_hash(m))},
                               {"data_hash", hash_file(path)}};
    auto side = path;
    side += ".json";
    write_file_atomic(side, manifest.dump(2) + "\n");
}

template <typename T>
SegModel<T> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr) {
    using namespace checkpoint_detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("missing file: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CMCK", 4) != 0) throw DataError("not a checkpoint: " + path.string());
    if (get<std::uint32_t>(in) != kVersion) throw DataError("unsupported checkpoint version: " + path.string());
    ModelConfig cfg;
    try {
        cfg = model_config_from_json(nlohmann::json::parse(get_str(in)));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("corrupt checkpoint config: ") + e.what());
    }
    SegModel<T> m = build_model<T>(cfg);
    CheckpointInfo ci;
    ci.schema_hash = get<std::uint64_t>(in);
    m.phase = ci.phase = get<std::int32_t>(in);
    const auto head = get<std::uint8_t>(in);
    const auto channels = get<std::int32_t>(in);
    set_head(m, head == 0 ? HeadType::Softmax : HeadType::Sigmoid, channels, 0);
    m.trained = get<std::uint8_t>(in) != 0;
    for (int g = 0; g < kParamGroups; ++g) m.params.set_frozen(static_cast<ParamGroup>(g), get<std::uint8_t>(in) != 0);
    const auto n = get<std::uint64_t>(in);
    if (n != m.params.count()) throw DataError("checkpoint parameter count does not match its configuration");
    for (std::size_t k = 0; k < n; ++k) {
        const auto& p = m.params.info(static_cast<int>(k));
        const auto name = get_str(in);
        const auto group = get<std::int32_t>(in);
        const auto ndim = get<std::uint32_t>(in);
        std::vector<int> shape;
        for (std::uint32_t d = 0; d < ndim && d < 8; ++d) shape.push_back(get<std::int32_t>(in));
        const auto size = get<std::uint64_t>(in);
        if (name != p.name || group != static_cast<int>(p.group) || shape != p.shape || size != p.size)
            throw DataError("checkpoint parameter '" + name + "' does not match the model layout");
        for (std::size_t i = 0; i < size; ++i) m.params.values()[p.offset + i] = static_cast<T>(get<double>(in));
    }
    if (info) *info = ci;
    return m;
}

}  // namespace cashewmap::nn
