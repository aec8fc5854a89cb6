#pragma once

#include <cstdio>
#include <string>

namespace rclip {

// Fixed 6-significant-digit float formatting for everything serialized to
// JSON/JSONL; keeps logs and manifests byte-stable.
inline std::string fmt_g6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace rclip
