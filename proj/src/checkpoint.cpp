#include "spikegan/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "spikegan/errors.hpp"

namespace spikegan {

namespace {

constexpr char kMagic[8] = {'S', 'G', 'A', 'D', 'C', 'K', 'P', 'T'};

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t get_u32(const uint8_t* p) {
    return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["meta"] = ckpt.meta;
    nlohmann::json tensors = nlohmann::json::object();
    int64_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        nlohmann::json entry;
        entry["shape"] = t.shape();
        entry["offset"] = offset;
        entry["count"] = t.size();
        tensors[name] = entry;
        offset += t.size() * static_cast<int64_t>(sizeof(float));
    }
    header["tensors"] = tensors;
    const std::string header_str = header.dump();

    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u16(out, kCheckpointVersion);
    put_u32(out, static_cast<uint32_t>(header_str.size()));
    out += header_str;
    // Raw f32 payload; this writer targets little-endian hosts.
    for (const auto& [name, t] : ckpt.tensors) {
        (void)name;
        const size_t bytes = static_cast<size_t>(t.size()) * sizeof(float);
        const size_t base = out.size();
        out.resize(base + bytes);
        std::memcpy(out.data() + base, t.data(), bytes);
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (bytes.size() < sizeof(kMagic) + 6) throw CheckpointError(path + ": truncated checkpoint header");
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError(path + ": bad checkpoint magic");
    const uint16_t version = get_u16(bytes.data() + 8);
    if (version != kCheckpointVersion)
        throw CheckpointError(path + ": unsupported checkpoint version " + std::to_string(version));
    const uint32_t header_len = get_u32(bytes.data() + 10);
    const size_t payload_at = 14 + header_len;
    if (bytes.size() < payload_at) throw CheckpointError(path + ": truncated checkpoint header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 14, bytes.begin() + static_cast<int64_t>(payload_at));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path + ": malformed checkpoint header: " + e.what());
    }

    Checkpoint ckpt;
    if (header.contains("meta")) ckpt.meta = header["meta"];
    if (!header.contains("tensors") || !header["tensors"].is_object())
        throw CheckpointError(path + ": checkpoint header lacks tensor table");
    for (const auto& [name, entry] : header["tensors"].items()) {
        const Shape shape = entry.at("shape").get<Shape>();
        const int64_t offset = entry.at("offset").get<int64_t>();
        const int64_t count = entry.at("count").get<int64_t>();
        if (count != numel(shape)) throw CheckpointError(path + ": inconsistent entry for '" + name + "'");
        const size_t begin = payload_at + static_cast<size_t>(offset);
        const size_t end = begin + static_cast<size_t>(count) * sizeof(float);
        if (offset < 0 || end > bytes.size())
            throw CheckpointError(path + ": truncated payload for '" + name + "'");
        Tensor<float> t(shape);
        std::memcpy(t.data(), bytes.data() + begin, static_cast<size_t>(count) * sizeof(float));
        ckpt.tensors.emplace(name, std::move(t));
    }
    return ckpt;
}

void store_params(Checkpoint& ckpt, const std::vector<Parameter<float>*>& params) {
    for (const Parameter<float>* p : params) ckpt.tensors[p->name] = p->value;
}

void load_params(const Checkpoint& ckpt, const std::vector<Parameter<float>*>& params) {
    for (Parameter<float>* p : params) {
        auto it = ckpt.tensors.find(p->name);
        if (it == ckpt.tensors.end())
            throw CheckpointError("checkpoint is missing parameter '" + p->name + "'");
        if (it->second.shape() != p->value.shape())
            throw CheckpointError("checkpoint shape " + shape_str(it->second.shape()) + " for '" + p->name +
                                  "' does not match model shape " + shape_str(p->value.shape()));
        p->value = it->second;
    }
}

}  // namespace spikegan
