#include "rclip/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

#include "rclip/errors.hpp"
#include "rclip/hash.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace rclip {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'R', 'C', 'L', 'I', 'P', 'C', 'K', 'P'};
constexpr uint32_t kFormatVersion = 1;

template <typename V>
void put(std::string& out, const V& v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(const std::string& bytes, size_t& pos) {
    if (pos + sizeof(V) > bytes.size()) throw Error("checkpoint: truncated file");
    V v;
    std::memcpy(&v, bytes.data() + pos, sizeof(V));
    pos += sizeof(V);
    return v;
}

}  // namespace

const NamedBlob* Checkpoint::find(const std::string& name) const {
    for (const auto& b : blobs)
        if (b.name == name) return &b;
    return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                     const std::vector<NamedBlob>& blobs) {
    json jmeta;
    jmeta["model_config"] = json::parse(meta.model_config_json);
    jmeta["step"] = meta.step;
    jmeta["extras"] = meta.extras;
    const std::string meta_str = jmeta.dump();

    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put(out, kFormatVersion);
    put(out, static_cast<uint64_t>(meta_str.size()));
    out.append(meta_str);
    put(out, static_cast<uint32_t>(blobs.size()));
    for (const auto& b : blobs) {
        put(out, static_cast<uint32_t>(b.name.size()));
        out.append(b.name);
        put(out, static_cast<uint32_t>(b.shape.size()));
        for (int64_t d : b.shape) put(out, static_cast<uint64_t>(d));
        put(out, static_cast<uint64_t>(b.data.size() * sizeof(float)));
        out.append(reinterpret_cast<const char*>(b.data.data()), b.data.size() * sizeof(float));
    }
    put(out, fnv1a64_bytes(out.data(), out.size()));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("checkpoint: cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("checkpoint: cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < sizeof(kMagic) + 12 + 8) throw Error("checkpoint: file too small");
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw Error("checkpoint: bad magic in " + path.string());

    const size_t body_len = bytes.size() - 8;
    uint64_t stored;
    std::memcpy(&stored, bytes.data() + body_len, 8);
    if (stored != fnv1a64_bytes(bytes.data(), body_len))
        throw Error("checkpoint: checksum mismatch in " + path.string());

    size_t pos = sizeof(kMagic);
    const uint32_t version = get<uint32_t>(bytes, pos);
    if (version != kFormatVersion) throw Error("checkpoint: unsupported format version");
    const uint64_t meta_len = get<uint64_t>(bytes, pos);
    if (pos + meta_len > body_len) throw Error("checkpoint: truncated meta");
    json jmeta = json::parse(bytes.substr(pos, meta_len));
    pos += meta_len;

    Checkpoint ckpt;
    ckpt.meta.model_config_json = jmeta.at("model_config").dump();
    ckpt.meta.step = jmeta.at("step");
    for (auto& [k, v] : jmeta.at("extras").items()) ckpt.meta.extras[k] = v.get<std::string>();

    const uint32_t n = get<uint32_t>(bytes, pos);
    ckpt.blobs.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        NamedBlob b;
        const uint32_t name_len = get<uint32_t>(bytes, pos);
        if (pos + name_len > body_len) throw Error("checkpoint: truncated blob name");
        b.name = bytes.substr(pos, name_len);
        pos += name_len;
        const uint32_t ndim = get<uint32_t>(bytes, pos);
        int64_t numel = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            b.shape.push_back(static_cast<int64_t>(get<uint64_t>(bytes, pos)));
            numel *= b.shape.back();
        }
        const uint64_t data_len = get<uint64_t>(bytes, pos);
        if (data_len != static_cast<uint64_t>(numel) * sizeof(float))
            throw Error("checkpoint: blob size mismatch for " + b.name);
        if (pos + data_len > body_len) throw Error("checkpoint: truncated blob data");
        b.data.resize(static_cast<size_t>(numel));
        std::memcpy(b.data.data(), bytes.data() + pos, data_len);
        pos += data_len;
        ckpt.blobs.push_back(std::move(b));
    }
    return ckpt;
}

std::vector<NamedBlob> blobs_from_params(const ParamStore<float>& params) {
    std::vector<NamedBlob> out;
    out.reserve(params.entries().size());
    for (const auto& e : params.entries())
        out.push_back(NamedBlob{e.name, e.value.shape, e.value.data});
    return out;
}

void restore_params(ParamStore<float>& params, const Checkpoint& ckpt) {
    for (auto& e : params.entries()) {
        const NamedBlob* b = ckpt.find(e.name);
        if (!b) throw Error("checkpoint: missing parameter blob " + e.name);
        if (b->shape != e.value.shape)
            throw ProfileMismatch("parameter shape for " + e.name);
        e.value.data = b->data;
    }
}

int load_matching_params(ParamStore<float>& params, const Checkpoint& ckpt) {
    int loaded = 0;
    for (auto& e : params.entries()) {
        const NamedBlob* b = ckpt.find(e.name);
        if (!b) continue;
        if (b->shape != e.value.shape)
            throw ProfileMismatch("weight shape for " + e.name);
        e.value.data = b->data;
        ++loaded;
    }
    return loaded;
}

}  // namespace rclip
