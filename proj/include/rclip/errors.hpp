#pragma once

#include <stdexcept>
#include <string>

namespace rclip {

// Domain errors map to CLI exit code 1 (user error); anything else that
// escapes to the CLI is treated as internal (exit 2).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyPrompt : Error {
    EmptyPrompt() : Error("prompt is empty after whitespace trimming") {}
};

struct TaggerFailure : Error {
    explicit TaggerFailure(const std::string& why) : Error("tagger failure: " + why) {}
};

struct SegmenterFailure : Error {
    explicit SegmenterFailure(const std::string& why) : Error("segmenter failure: " + why) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& why) : Error("shape mismatch: " + why) {}
};

struct NoRecords : Error {
    explicit NoRecords(const std::string& why) : Error("no records: " + why) {}
};

struct TooFewFrames : Error {
    explicit TooFewFrames(const std::string& why) : Error("too few frames: " + why) {}
};

struct DuplicateVideoInBatch : Error {
    explicit DuplicateVideoInBatch(const std::string& id)
        : Error("duplicate video in batch: " + id) {}
};

struct IneligibleEntry : Error {
    explicit IneligibleEntry(const std::string& why) : Error("ineligible entry: " + why) {}
};

struct ZeroNormEmbedding : Error {
    explicit ZeroNormEmbedding(const std::string& why) : Error("zero-norm embedding: " + why) {}
};

struct ProfileMismatch : Error {
    explicit ProfileMismatch(const std::string& why) : Error("profile mismatch: " + why) {}
};

// Numeric blowup during training. Internal, not a usage error: exit 2.
struct NonFiniteLoss : std::runtime_error {
    explicit NonFiniteLoss(const std::string& why)
        : std::runtime_error("non-finite loss: " + why) {}
};

}  // namespace rclip
