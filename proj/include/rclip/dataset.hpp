#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "rclip/dataprep.hpp"
#include "rclip/rng.hpp"
#include "rclip/tensor.hpp"

namespace rclip {

struct Manifest {
    std::vector<ManifestEntry> entries;

    static Manifest load(const std::filesystem::path& path);

    // Indices of entries usable for training: unflagged, >= 2 frames.
    std::vector<size_t> eligible() const;
    const ManifestEntry* by_id(const std::string& video_id) const;
};

// Uniform draw over admissible ordered pairs t1 < t2 with t2 - t1 > min_gap.
std::pair<int, int> sample_frame_pair(int num_frames, Rng& rng, int min_gap = 0);

struct SplitResult {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
};

// Assignment by salted hash of video_id: stable under manifest reordering
// and corpus growth. train_ratio + val_ratio must sum to 1.
SplitResult split(const Manifest& manifest, double train_ratio, double val_ratio,
                  const std::string& salt);

struct BatchConfig {
    int context_len = 16;
    int image_size = 32;
    int min_gap = 0;
};

struct Batch {
    Tensor<float> images1;      // [B,4,H,W]
    Tensor<float> images2;      // [B,4,H,W]
    Tensor<int32_t> tokens;     // [B,L]
    Tensor<float> action_mask;  // [B,L]
    std::vector<std::string> video_ids;
    std::vector<std::pair<int, int>> frame_pairs;
};

// Loads one RGBA frame of a manifest entry at the requested resolution.
RGBAFrame load_rgba_frame(const ManifestEntry& entry, int frame_index, int image_size);

Batch make_batch(const Manifest& manifest, const std::vector<size_t>& indices, Rng& rng,
                 const BatchConfig& cfg);

// Deterministic shuffled batch plan for one epoch; remainder entries are
// dropped. Contents depend only on (seed, epoch, pool).
std::vector<std::vector<size_t>> plan_epoch(const std::vector<size_t>& pool, int batch_size,
                                            uint64_t seed, int epoch);

// Generator for the per-batch frame-pair draws: function of (seed, epoch, batch).
Rng batch_rng(uint64_t seed, int epoch, int batch_index);

}  // namespace rclip
