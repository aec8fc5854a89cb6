#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rclip/checkpoint.hpp"
#include "rclip/dataset.hpp"
#include "rclip/model.hpp"

namespace rclip {

struct SimilarityCurve {
    std::string video_id;
    std::string prompt;
    std::vector<double> values;  // cosine(p, v_t) per frame
    double tau = 0.0;            // Kendall tau between frame index and similarity
    bool degenerate = false;     // constant curve; tau reported as 0
};

// Rebuilds a model from a checkpoint's config echo and parameter blobs.
DualEncoderModel<float> model_from_checkpoint(const Checkpoint& ckpt);

// Per-frame text similarity for one video. The prompt branch uses the action
// embedding computed from the (first, last) frame pair.
SimilarityCurve similarity_curve(const DualEncoderModel<float>& model, const ManifestEntry& entry);

struct AblationRow {
    std::string video_id;
    double tau_with = 0, tau_without = 0;
    double final_with = 0, final_without = 0;
};

struct AblationReport {
    std::vector<AblationRow> rows;
    double mean_tau_with = 0, mean_tau_without = 0;
    double mean_final_with = 0, mean_final_without = 0;
    double sign_p_tau = 1.0;  // exact sign test over per-video tau differences
    std::string to_json() const;
};

// Compares two checkpoints (trained with and without the triplet term) on an
// evaluation id set. Throws ProfileMismatch on differing model configs and
// Error on an empty eval set.
AblationReport ablation_compare(const Checkpoint& with_triplet, const Checkpoint& without_triplet,
                                const Manifest& manifest, const std::vector<std::string>& eval_ids);

struct ExportResult {
    std::filesystem::path file;
    std::filesystem::path index;
    int64_t count = 0;
    int64_t dim = 0;
};

// Raw row-major float32 little-endian embeddings plus a JSON index sidecar.
// Image inputs run through the image encoder; prompts through the plain text
// encoder (no action injection).
ExportResult export_features(const DualEncoderModel<float>& model,
                             const std::vector<std::filesystem::path>& image_paths,
                             const std::vector<std::string>& prompts,
                             const std::filesystem::path& out_file);

// Round-trip reader for the export format.
Tensor<float> read_export(const std::filesystem::path& file);

struct AnalyzeRunResult {
    std::filesystem::path curves_csv;
    std::filesystem::path report_json;
    int64_t videos = 0;
    double mean_tau = 0;
};

// Runs similarity curves over manifest entries (optionally restricted to ids)
// and writes curves.csv + report.json under out_dir.
AnalyzeRunResult analyze_manifest(const DualEncoderModel<float>& model, const Manifest& manifest,
                                  const std::optional<std::vector<std::string>>& ids,
                                  const std::filesystem::path& out_dir);

}  // namespace rclip
