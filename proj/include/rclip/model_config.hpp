#pragma once

#include <cstdint>
#include <string>

namespace rclip {

struct VitConfig {
    int image_size = 32;
    int patch = 8;
    int width = 64;
    int layers = 2;
    int heads = 4;
    int in_channels = 4;

    int grid() const { return image_size / patch; }
    int n_patches() const { return grid() * grid(); }
    int tokens() const { return n_patches() + 1; }  // + class token
    int patch_dim() const { return in_channels * patch * patch; }
};

struct TextConfig {
    int context_len = 16;
    int vocab = 0;  // filled from the tokenizer by the profile helpers
    int layers = 2;
    int heads = 4;
};

// The text transformer width equals embed_dim: injected action embeddings
// live in token-embedding space, so the two dimensions cannot differ.
struct ModelConfig {
    std::string profile = "toy";
    int embed_dim = 64;
    VitConfig image;
    VitConfig adapter;
    TextConfig text;
    uint64_t init_seed = 1;

    std::string to_json() const;
    static ModelConfig from_json(const std::string& json);
    void validate() const;
};

ModelConfig toy_profile(uint64_t init_seed);
ModelConfig paper_profile(uint64_t init_seed);
ModelConfig profile_by_name(const std::string& name, uint64_t init_seed);

}  // namespace rclip
