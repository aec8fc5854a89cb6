#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace rclip {

// Procedural action corpus: a colored shape moves linearly toward a named
// target marker; prompts read "move <color> <shape> to <target>". Used by the
// end-to-end tests and the quickstart demo.
struct SynthConfig {
    int n_videos = 64;
    int frames_per_video = 10;
    int image_size = 32;
    uint64_t seed = 7;
    std::string dataset_name = "synth";
};

void generate_synth_corpus(const std::filesystem::path& corpus_root, const SynthConfig& cfg);

}  // namespace rclip
