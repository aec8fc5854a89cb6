#pragma once

namespace rclip {

inline constexpr const char* kVersion = "0.1.0";

// Bumped whenever preprocessing semantics change; feeds manifest fingerprints.
inline constexpr const char* kPrepPipelineVersion = "prep-1";

}  // namespace rclip
