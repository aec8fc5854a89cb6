#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rclip/png_io.hpp"

namespace rclip {

struct RawVideoRecord {
    std::string video_id;
    std::string source_dataset;
    std::string prompt;
    std::filesystem::path video_dir;
    std::vector<std::filesystem::path> frame_paths;  // temporal order
    int num_frames = 0;
};

struct PromptAnnotation {
    std::string prompt;
    std::vector<int32_t> tokens;             // [BOS, words..., EOS]
    std::vector<std::string> objects;        // noun phrases with their modifiers
    std::vector<std::string> actions;        // canonical verb stems
    std::vector<uint8_t> action_mask;        // same length as tokens
};

// One video frame as model input: planar RGBA float in [0,1].
struct RGBAFrame {
    int h = 0;
    int w = 0;
    std::vector<float> pix;  // 4 * h * w, channel-major (R,G,B,alpha)

    RGBAFrame() = default;
    RGBAFrame(int h_, int w_) : h(h_), w(w_), pix(static_cast<size_t>(4) * h_ * w_, 0.f) {}
    float at(int c, int y, int x) const {
        return pix[(static_cast<size_t>(c) * h + y) * w + x];
    }
    float& at(int c, int y, int x) { return pix[(static_cast<size_t>(c) * h + y) * w + x]; }
};

struct BinaryMask {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> m;  // 0/1

    BinaryMask() = default;
    BinaryMask(int h_, int w_) : h(h_), w(w_), m(static_cast<size_t>(h_) * w_, 0) {}
    bool all_zero() const {
        for (uint8_t v : m)
            if (v) return false;
        return true;
    }
};

enum class PosTag { Noun, Verb, Adjective, Stop };

class PosTagger {
  public:
    virtual ~PosTagger() = default;
    // One tag per word; must return exactly words.size() tags.
    virtual std::vector<PosTag> tag(const std::vector<std::string>& words) const = 0;
    virtual std::string name() const = 0;
};

// Lexicon-driven tagger with light verb stemming.
class RuleTagger : public PosTagger {
  public:
    std::vector<PosTag> tag(const std::vector<std::string>& words) const override;
    std::string name() const override { return "rule"; }
};

// Adapter for externally produced tags: reads "word<TAB>TAG" lines (one per
// word, in order) from a sidecar file next to the prompt. TAGs follow UPOS
// coarse labels; unknown tags degrade to Stop.
class FileTagger : public PosTagger {
  public:
    explicit FileTagger(std::filesystem::path pos_file) : pos_file_(std::move(pos_file)) {}
    std::vector<PosTag> tag(const std::vector<std::string>& words) const override;
    std::string name() const override { return "external"; }

  private:
    std::filesystem::path pos_file_;
};

struct FrameContext {
    std::string video_id;
    std::filesystem::path video_dir;
    int frame_index = 0;
};

class Segmenter {
  public:
    virtual ~Segmenter() = default;
    virtual BinaryMask segment_object(const ImageU8& frame, const std::string& object,
                                      const FrameContext& ctx) const = 0;
    virtual std::string describe() const = 0;  // feeds the manifest fingerprint
};

class FullImageSegmenter : public Segmenter {
  public:
    BinaryMask segment_object(const ImageU8& frame, const std::string& object,
                              const FrameContext& ctx) const override;
    std::string describe() const override { return "stub-full"; }
};

// Deterministic box derived from the object name; a stand-in for a real
// open-vocabulary detector+segmenter.
class BoxStubSegmenter : public Segmenter {
  public:
    BinaryMask segment_object(const ImageU8& frame, const std::string& object,
                              const FrameContext& ctx) const override;
    std::string describe() const override { return "stub-box"; }
};

// Reads per-frame masks produced by an external tool from
// <video_dir>/<subdir>/%06d.png; the file holds the union over objects.
class FileMaskSegmenter : public Segmenter {
  public:
    explicit FileMaskSegmenter(std::string subdir) : subdir_(std::move(subdir)) {}
    BinaryMask segment_object(const ImageU8& frame, const std::string& object,
                              const FrameContext& ctx) const override;
    std::string describe() const override { return "external:" + subdir_; }

  private:
    std::string subdir_;
};

// ---- operations ----

PromptAnnotation extract_queries(const std::string& prompt, const PosTagger& tagger);

// Token-position mask over [BOS, words..., EOS] for the given action stems.
std::vector<uint8_t> action_mask_for(const std::vector<std::string>& words,
                                     const std::vector<std::string>& actions);

// Pixelwise union of per-object masks; empty object list yields all zeros.
BinaryMask generate_alpha_mask(const ImageU8& frame, const std::vector<std::string>& objects,
                               const Segmenter& segmenter, const FrameContext& ctx = {});

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b);

// Color resampled by exact box-filter area averaging, alpha by nearest
// neighbour (keeps binary masks binary). out_h/out_w default to the input.
RGBAFrame assemble_rgba(const ImageU8& frame, const BinaryMask& mask, int out_h = 0,
                        int out_w = 0);

// ---- manifest pipeline ----

struct PrepConfig {
    std::string segmenter = "stub-full";  // stub-full | stub-box | external
    std::string tagger = "rule";          // rule | external
    std::string external_mask_subdir = "ext_masks";
    uint64_t seed = 0;

    std::string fingerprint() const;  // hash of every preprocessing decision
};

struct ManifestEntry {
    std::string video_id;
    std::string source_dataset;
    std::string prompt;
    std::vector<std::string> objects;
    std::vector<std::string> actions;
    std::string frame_dir;
    std::string mask_dir;
    int num_frames = 0;
    std::vector<std::string> flags;  // "degraded", "zero_mask"
    std::string fingerprint;

    bool eligible() const { return flags.empty() && num_frames >= 2; }
    std::string to_jsonl() const;
    static ManifestEntry from_jsonl(const std::string& line);
};

struct CorpusStats {
    struct Source {
        int64_t videos = 0;
        std::set<std::string> action_categories;
    };
    std::map<std::string, Source> per_source;

    int64_t total_videos() const;
    int64_t total_action_categories() const;
    std::string to_json() const;
};

struct SkippedRecord {
    std::string video_id;
    std::string reason;
};

struct PrepResult {
    int64_t entries_written = 0;
    CorpusStats stats;
    std::vector<SkippedRecord> skipped;
};

// <root>/<dataset>/<video_id>/{frames/%06d.png, prompt.txt}
std::vector<RawVideoRecord> scan_corpus(const std::filesystem::path& corpus_root);

std::unique_ptr<Segmenter> make_segmenter(const PrepConfig& cfg);

// Writes one JSONL line per video (sorted by video_id), masks into the corpus
// tree, stats to <out>.stats.json and a skip report to <out>.skips.json.
PrepResult build_manifest(const std::filesystem::path& corpus_root,
                          const std::filesystem::path& manifest_out, const PrepConfig& cfg);

}  // namespace rclip
