#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rclip/param_store.hpp"
#include "rclip/tensor.hpp"

namespace rclip {

// Self-describing container: magic, version, JSON meta (model config echo,
// step counter, free-form extras), named float32 little-endian blobs and a
// trailing content checksum. Model parameters and optimizer state share the
// same blob table; optimizer blobs carry an "opt." prefix.
struct CheckpointMeta {
    std::string model_config_json;
    uint64_t step = 0;
    std::map<std::string, std::string> extras;
};

struct NamedBlob {
    std::string name;
    std::vector<int64_t> shape;
    std::vector<float> data;
};

struct Checkpoint {
    CheckpointMeta meta;
    std::vector<NamedBlob> blobs;

    const NamedBlob* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                     const std::vector<NamedBlob>& blobs);

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Helpers between ParamStore<float> and the blob table.
std::vector<NamedBlob> blobs_from_params(const ParamStore<float>& params);
void restore_params(ParamStore<float>& params, const Checkpoint& ckpt);

// Weight-loading hook: copies every blob whose name and shape match an
// existing parameter (e.g. externally converted encoder weights); other
// parameters keep their current values. Returns the number of tensors loaded.
int load_matching_params(ParamStore<float>& params, const Checkpoint& ckpt);

}  // namespace rclip
