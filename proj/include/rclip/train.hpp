#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rclip/checkpoint.hpp"
#include "rclip/dataset.hpp"
#include "rclip/loss.hpp"
#include "rclip/model.hpp"

namespace rclip {

// Flat key=value config; unknown keys are rejected.
struct TrainConfig {
    uint64_t seed = 1;
    int epochs = 1;
    int max_steps = 0;  // 0 = bounded by epochs only
    int batch_size = 8;
    double lr = 1e-4;
    std::string optimizer = "adam";      // adam | sgd
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::string lr_schedule = "cosine";  // cosine | constant
    LossConfig loss;
    std::string model_profile = "toy";   // toy | paper-shape
    int checkpoint_every = 0;            // steps; 0 = init + final only
    int min_gap = 0;
    double val_fraction = 0.0;
    std::string split_salt = "split";

    static TrainConfig parse_text(const std::string& text);
    static TrainConfig parse_file(const std::filesystem::path& path);
    std::string echo() const;  // canonical key=value form
    void validate() const;
};

struct FreezeBlobReport {
    std::string name;
    bool equal = false;
};

struct FreezeReport {
    std::vector<FreezeBlobReport> blobs;
    bool encoders_match = false;
    bool adapter_changed = false;
    uint64_t steps_before = 0;
    uint64_t steps_after = 0;
    bool pass = false;
};

// Byte-compares encoder and adapter parameter blobs of two checkpoints from
// the same profile. Encoders must match; the adapter must differ once the
// later checkpoint has taken at least one step.
FreezeReport verify_freeze(const Checkpoint& before, const Checkpoint& after);

class Trainer {
  public:
    Trainer(const TrainConfig& cfg, Manifest manifest);
    static Trainer resume(const TrainConfig& cfg, Manifest manifest,
                          const std::filesystem::path& checkpoint_path);

    struct StepResult {
        LossReport<float> report;
        double lr = 0;
        uint64_t step = 0;  // 1-based after the update
    };

    StepResult train_step(const Batch& batch);

    // Weight hook: overwrite matching parameter tensors (typically the frozen
    // encoders) from an externally converted checkpoint before training.
    int load_initial_weights(const std::filesystem::path& weights_path);

    struct RunResult {
        std::filesystem::path final_checkpoint;
        std::filesystem::path metrics_log;
        uint64_t steps = 0;
        double first_total = 0;
        double last_total = 0;
    };

    RunResult run(const std::filesystem::path& out_dir);

    void save(const std::filesystem::path& path) const;

    DualEncoderModel<float>& model() { return model_; }
    const DualEncoderModel<float>& model() const { return model_; }
    uint64_t step() const { return step_; }
    const std::vector<size_t>& train_pool() const { return pool_; }
    int64_t total_steps() const { return total_steps_; }
    double lr_at(uint64_t step) const;

  private:
    TrainConfig cfg_;
    Manifest manifest_;
    DualEncoderModel<float> model_;
    std::map<std::string, Tensor<float>> adam_m_, adam_v_;
    std::vector<size_t> pool_;
    uint64_t step_ = 0;
    int64_t steps_per_epoch_ = 0;
    int64_t total_steps_ = 0;

    void apply_update(const std::map<std::string, Tensor<float>>& grads, double lr);
};

}  // namespace rclip
