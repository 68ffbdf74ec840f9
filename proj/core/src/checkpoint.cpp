#include "hfw/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "hfw/io_util.hpp"
#include "json_detail.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

namespace hfw {

namespace {

constexpr char kMagic[8] = {'H', 'F', 'W', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

uint8_t dtype_tag(Dtype d) { return d == Dtype::Float32 ? 0 : 1; }

Dtype dtype_from_tag(uint8_t t, size_t offset) {
    if (t == 0) return Dtype::Float32;
    if (t == 1) return Dtype::Float64;
    throw FormatError("unknown dtype tag " + std::to_string(t) + " at offset " + std::to_string(offset));
}

size_t dtype_size(Dtype d) { return d == Dtype::Float32 ? 4 : 8; }

std::vector<uint8_t> encode_records(const std::vector<TensorRecord>& tensors) {
    std::vector<uint8_t> body;
    for (const auto& rec : tensors) {
        io::put_str(body, rec.name);
        body.push_back(dtype_tag(rec.dtype));
        io::put_u32(body, static_cast<uint32_t>(rec.shape.size()));
        for (int64_t e : rec.shape) io::put_i64(body, e);
        io::put_u64(body, rec.bytes.size());
        body.insert(body.end(), rec.bytes.begin(), rec.bytes.end());
    }
    return body;
}

nlohmann::json meta_to_json(const CheckpointMeta& meta) {
    return nlohmann::json{{"format_version", meta.format_version}, {"config", nlohmann::json::parse(meta.config_json)},
                          {"epoch", meta.epoch},                   {"best_val_acc", meta.best_val_acc},
                          {"seed", meta.seed},                     {"config_digest", meta.config_digest}};
}

CheckpointMeta meta_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
    }
    CheckpointMeta m;
    m.format_version = j.value("format_version", 0u);
    m.config_json = j.contains("config") ? j.at("config").dump() : "{}";
    m.epoch = j.value("epoch", int64_t(0));
    m.best_val_acc = j.value("best_val_acc", 0.0);
    m.seed = j.value("seed", uint64_t(0));
    m.config_digest = j.value("config_digest", "");
    return m;
}

}  // namespace

void write_checkpoint_file(const std::string& path, const CheckpointMeta& meta,
                           const std::vector<TensorRecord>& tensors) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    io::put_u32(out, kVersion);
    io::put_str(out, meta_to_json(meta).dump());
    io::put_u32(out, static_cast<uint32_t>(tensors.size()));
    const std::vector<uint8_t> body = encode_records(tensors);
    out.insert(out.end(), body.begin(), body.end());
    io::put_u32(out, crc32(body));
    io::write_file(path, out);
}

CheckpointFile read_checkpoint_file(const std::string& path) {
    const std::vector<uint8_t> buf = io::read_file(path);
    io::Reader r{buf, 0};
    auto magic = r.bytes(8);
    if (!std::equal(magic.begin(), magic.end(), kMagic))
        throw FormatError("'" + path + "' is not a checkpoint (bad magic at offset 0)");
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (want " +
                          std::to_string(kVersion) + ")");
    CheckpointFile f;
    f.meta = meta_from_json(r.str());
    const uint32_t count = r.u32();
    const size_t body_start = r.pos;
    if (buf.size() < body_start + 4) throw FormatError("truncated checkpoint '" + path + "'");
    const size_t body_end = buf.size() - 4;
    for (uint32_t i = 0; i < count; ++i) {
        TensorRecord rec;
        rec.name = r.str();
        const size_t tag_off = r.pos;
        rec.dtype = dtype_from_tag(r.bytes(1)[0], tag_off);
        const uint32_t rank = r.u32();
        for (uint32_t k = 0; k < rank; ++k) rec.shape.push_back(r.i64());
        const uint64_t len = r.u64();
        if (len != static_cast<uint64_t>(shape_numel(rec.shape)) * dtype_size(rec.dtype))
            throw FormatError("tensor '" + rec.name + "' payload length " + std::to_string(len) +
                              " does not match shape " + shape_str(rec.shape) + " at offset " +
                              std::to_string(r.pos));
        auto payload = r.bytes(static_cast<size_t>(len));
        rec.bytes.assign(payload.begin(), payload.end());
        f.tensors.push_back(std::move(rec));
    }
    if (r.pos != body_end)
        throw FormatError("unexpected bytes at offset " + std::to_string(r.pos) + " in '" + path + "'");
    const uint32_t want = io::Reader{buf, body_end}.u32();
    const uint32_t got = crc32(std::span<const uint8_t>(buf).subspan(body_start, body_end - body_start));
    if (want != got)
        throw FormatError("checkpoint checksum mismatch in '" + path + "' (record section at offset " +
                          std::to_string(body_start) + ")");
    return f;
}

std::vector<uint8_t> checkpoint_tensor_section(const std::string& path) {
    const std::vector<uint8_t> buf = io::read_file(path);
    io::Reader r{buf, 0};
    r.bytes(8);
    r.u32();
    r.str();
    r.u32();
    const size_t body_start = r.pos;
    if (buf.size() < body_start + 4) throw FormatError("truncated checkpoint '" + path + "'");
    return std::vector<uint8_t>(buf.begin() + static_cast<std::ptrdiff_t>(body_start), buf.end() - 4);
}

template <typename T>
std::vector<TensorRecord> snapshot_params(const ParamStore<T>& store) {
    std::vector<TensorRecord> out;
    out.reserve(store.items().size());
    for (const auto& [name, t] : store.items()) {
        TensorRecord rec;
        rec.name = name;
        rec.dtype = dtype_of<T>();
        rec.shape = t.shape();
        rec.bytes.resize(static_cast<size_t>(t.numel()) * sizeof(T));
        std::memcpy(rec.bytes.data(), t.values().data(), rec.bytes.size());
        out.push_back(std::move(rec));
    }
    return out;
}

template <typename T>
void restore_params(ParamStore<T>& store, const std::vector<TensorRecord>& records) {
    size_t matched = 0;
    for (const auto& rec : records) {
        const Tensor<T>* found = store.find(rec.name);
        if (!found) throw SchemaError("checkpoint tensor '" + rec.name + "' has no matching parameter");
        Tensor<T> t = *found;
        if (rec.dtype != dtype_of<T>())
            throw SchemaError("tensor '" + rec.name + "' stored as " + dtype_name(rec.dtype) + ", model wants " +
                              dtype_name(dtype_of<T>()));
        if (rec.shape != t.shape())
            throw SchemaError("tensor '" + rec.name + "' stored with shape " + shape_str(rec.shape) +
                              ", model wants " + shape_str(t.shape()));
        std::memcpy(t.values().data(), rec.bytes.data(), rec.bytes.size());
        ++matched;
    }
    if (matched != store.items().size())
        throw SchemaError("checkpoint covers " + std::to_string(matched) + " of " +
                          std::to_string(store.items().size()) + " parameters");
}

template <typename T>
std::string model_config_json(const Model<T>& model) {
    nlohmann::json j;
    j["seed"] = model.seed();
    if (model.kind() == ModelKind::Flat) {
        j["kind"] = "flat";
        j["flat"] = jsondetail::flat_to_json(model.flat_config());
    } else {
        j["kind"] = "hier";
        j["hier"] = jsondetail::hier_to_json(model.hier_config());
    }
    return j.dump();
}

template <typename T>
void save_model(const std::string& path, const Model<T>& model, CheckpointMeta meta) {
    meta.config_json = model_config_json(model);
    meta.seed = model.seed();
    write_checkpoint_file(path, meta, snapshot_params(model.params()));
}

template <typename T>
Model<T> load_model(const std::string& path, CheckpointMeta* meta_out) {
    CheckpointFile f = read_checkpoint_file(path);
    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(f.meta.config_json);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint model config is not valid JSON: ") + e.what());
    }
    const std::string kind = cfg.value("kind", "");
    const uint64_t seed = cfg.value("seed", uint64_t(0));
    Model<T> model = [&] {
        if (kind == "flat") return Model<T>::flat(jsondetail::flat_from_json(cfg.at("flat"), "config.flat"), seed);
        if (kind == "hier") return Model<T>::hier(jsondetail::hier_from_json(cfg.at("hier"), "config.hier"), seed);
        throw SchemaError("checkpoint model kind '" + kind + "' unknown");
    }();
    restore_params(model.params(), f.tensors);
    if (meta_out) *meta_out = f.meta;
    return model;
}

template std::vector<TensorRecord> snapshot_params<float>(const ParamStore<float>&);
template std::vector<TensorRecord> snapshot_params<double>(const ParamStore<double>&);
template void restore_params<float>(ParamStore<float>&, const std::vector<TensorRecord>&);
template void restore_params<double>(ParamStore<double>&, const std::vector<TensorRecord>&);
template std::string model_config_json<float>(const Model<float>&);
template std::string model_config_json<double>(const Model<double>&);
template void save_model<float>(const std::string&, const Model<float>&, CheckpointMeta);
template void save_model<double>(const std::string&, const Model<double>&, CheckpointMeta);
template Model<float> load_model<float>(const std::string&, CheckpointMeta*);
template Model<double> load_model<double>(const std::string&, CheckpointMeta*);

}  // namespace hfw
