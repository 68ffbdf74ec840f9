#pragma once

// Checkpoint container: 8-byte magic, u32 version, length-prefixed JSON
// metadata, per-tensor records (name, dtype, extents, raw little-endian
// payload), trailing CRC-32 of the record section. Only learned parameters
// are stored; fast memory never appears in a checkpoint.

#include <cstdint>
#include <string>
#include <vector>

#include "hfw/backbones.hpp"
#include "hfw/params.hpp"

namespace hfw {

inline constexpr const char* kCheckpointExt = ".hfwckpt";

struct TensorRecord {
    std::string name;
    Dtype dtype = Dtype::Float32;
    Shape shape;
    std::vector<uint8_t> bytes;
};

struct CheckpointMeta {
    uint32_t format_version = 1;
    std::string config_json;  // resolved model configuration
    int64_t epoch = 0;
    double best_val_acc = 0.0;
    uint64_t seed = 0;
    std::string config_digest;
};

struct CheckpointFile {
    CheckpointMeta meta;
    std::vector<TensorRecord> tensors;
};

void write_checkpoint_file(const std::string& path, const CheckpointMeta& meta,
                           const std::vector<TensorRecord>& tensors);
CheckpointFile read_checkpoint_file(const std::string& path);

// Raw bytes of the tensor-record section (metadata excluded), for
// episode-history independence audits.
std::vector<uint8_t> checkpoint_tensor_section(const std::string& path);

template <typename T>
std::vector<TensorRecord> snapshot_params(const ParamStore<T>& store);

// Strict: every record must match a parameter (name, dtype, shape) and every
// parameter must be covered, else SchemaError.
template <typename T>
void restore_params(ParamStore<T>& store, const std::vector<TensorRecord>& records);

template <typename T>
std::string model_config_json(const Model<T>& model);

template <typename T>
void save_model(const std::string& path, const Model<T>& model, CheckpointMeta meta);

template <typename T>
Model<T> load_model(const std::string& path, CheckpointMeta* meta_out = nullptr);

}  // namespace hfw
