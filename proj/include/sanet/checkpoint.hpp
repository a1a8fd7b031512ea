#pragma once

// Checkpoint file layout (all integers little-endian uint32):
//   "SANETCKP" | version | config length | config JSON bytes |
//   parameter count | per parameter: name length, name, rank, extents...,
//   values as IEEE-754 binary32 little-endian.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sanet/network.hpp"

namespace sanet {

inline nlohmann::json to_json(const NetworkConfig& c) {
    return {{"widths", c.widths},           {"first_stride", c.first_stride}, {"input_size", c.input_size},
            {"seed", c.seed},               {"attention", to_string(c.attention)},
            {"fusion", to_string(c.fusion)}};
}

inline NetworkConfig network_config_from_json(const nlohmann::json& j) {
    NetworkConfig c;
    c.widths = j.at("widths").get<std::vector<std::size_t>>();
    c.first_stride = j.at("first_stride").get<std::size_t>();
    c.input_size = j.at("input_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.attention = parse_attention(j.at("attention").get<std::string>());
    c.fusion = parse_fusion(j.at("fusion").get<std::string>());
    return c;
}

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace ckpt_detail {

inline constexpr char kMagic[8] = {'S', 'A', 'N', 'E', 'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
    }
    std::string bytes_;
    std::size_t pos_ = 0;
};

}  // namespace ckpt_detail

// Serialized bytes; parameters are stored as binary32 regardless of T.
template <class T>
std::string encode_checkpoint(const Model<T>& m) {
    using namespace ckpt_detail;
    std::string out(kMagic, kMagic + 8);
    put_u32(out, kVersion);
    const std::string cfg = to_json(m.config).dump();
    put_u32(out, static_cast<std::uint32_t>(cfg.size()));
    out += cfg;
    put_u32(out, static_cast<std::uint32_t>(m.params.entries.size()));
    for (const auto& [name, t] : m.params.entries) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (T v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

template <class T>
Model<T> decode_checkpoint(std::string bytes) {
    using namespace ckpt_detail;
    Reader in(std::move(bytes));
    if (in.str(8) != std::string(kMagic, 8)) throw CheckpointError("not a checkpoint (bad magic)");
    if (const auto v = in.u32(); v != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(v));
    Model<T> m;
    try {
        m.config = network_config_from_json(nlohmann::json::parse(in.str(in.u32())));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint config: ") + e.what());
    }
    const std::uint32_t count = in.u32();
    for (std::uint32_t k = 0; k < count; ++k) {
        std::string name = in.str(in.u32());
        Shape shape(in.u32());
        for (auto& d : shape) d = in.u32();
        Tensor<T> t(shape);
        for (auto& v : t.data) v = static_cast<T>(std::bit_cast<float>(in.u32()));
        m.params.entries.emplace_back(std::move(name), std::move(t));
    }
    if (!in.done()) throw CheckpointError("trailing bytes after checkpoint");

    // Parameter names and shapes must be exactly those the config implies.
    const Model<T> expected = init_model<T>(m.config);
    if (expected.params.entries.size() != m.params.entries.size())
        throw CheckpointError("checkpoint parameters do not match its network config");
    for (std::size_t k = 0; k < m.params.entries.size(); ++k)
        if (expected.params.entries[k].first != m.params.entries[k].first ||
            expected.params.entries[k].second.shape != m.params.entries[k].second.shape)
            throw CheckpointError("checkpoint parameter " + m.params.entries[k].first +
                                  " does not match its network config");
    return m;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot write " + path.string());
    const std::string bytes = encode_checkpoint(m);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <class T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint<T>(std::move(bytes));
}

}  // namespace sanet
