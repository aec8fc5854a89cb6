#include "rclip/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "rclip/analyze.hpp"
#include "rclip/dataprep.hpp"
#include "rclip/dataset.hpp"
#include "rclip/errors.hpp"
#include "rclip/format.hpp"
#include "rclip/synth.hpp"
#include "rclip/train.hpp"
#include "rclip/version.hpp"

namespace rclip {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Seed precedence: --seed flag > ROBOTIC_CLIP_SEED env > config/default.
std::optional<uint64_t> env_seed() {
    const char* v = std::getenv("ROBOTIC_CLIP_SEED");
    if (!v || !*v) return std::nullopt;
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw Error("ROBOTIC_CLIP_SEED is not an integer");
    }
}

void emit(bool as_json, const ordered_json& summary, const std::string& human) {
    if (as_json)
        std::cout << summary.dump() << std::endl;
    else
        std::cerr << human << std::endl;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
    CLI::App app{"action-aware dual-encoder fine-tuning toolkit"};
    app.set_version_flag("--version", std::string("rclip ") + kVersion + " (" +
                                          kPrepPipelineVersion + ")");
    app.require_subcommand(1);
    bool as_json = false;
    app.add_flag("--json", as_json, "print a machine-readable summary on stdout");

    // ---- prepare ----
    auto* prepare = app.add_subcommand("prepare", "build a corpus manifest with masks");
    std::string prep_corpus, prep_out;
    PrepConfig prep_cfg;
    std::optional<uint64_t> prep_seed;
    prepare->add_option("--corpus", prep_corpus, "corpus root directory")->required();
    prepare->add_option("--out", prep_out, "manifest output path")->required();
    prepare->add_option("--segmenter", prep_cfg.segmenter, "stub-full | stub-box | external")
        ->check(CLI::IsMember({"stub-full", "stub-box", "external"}));
    prepare->add_option("--tagger", prep_cfg.tagger, "rule | external")
        ->check(CLI::IsMember({"rule", "external"}));
    prepare->add_option("--ext-mask-subdir", prep_cfg.external_mask_subdir,
                        "per-video subdirectory holding external masks");
    prepare->add_option("--seed", prep_seed, "preparation seed");

    // ---- train ----
    auto* train = app.add_subcommand("train", "fine-tune the adapter");
    std::string train_config, train_manifest, train_out, train_resume, train_weights;
    std::optional<uint64_t> train_seed;
    train->add_option("--config", train_config, "flat key=value config file")->required();
    train->add_option("--manifest", train_manifest, "manifest path")->required();
    train->add_option("--out", train_out, "output directory")->required();
    train->add_option("--resume", train_resume, "checkpoint to resume from");
    train->add_option("--init-weights", train_weights,
                      "load matching parameter tensors before training");
    train->add_option("--seed", train_seed, "seed override");

    // ---- analyze ----
    auto* analyze = app.add_subcommand("analyze", "text-frame similarity curves");
    std::string an_ckpt, an_manifest, an_out, an_ids;
    analyze->add_option("--checkpoint", an_ckpt, "checkpoint path")->required();
    analyze->add_option("--manifest", an_manifest, "manifest path")->required();
    analyze->add_option("--out", an_out, "output directory")->required();
    analyze->add_option("--ids", an_ids, "file with one video id per line");

    // ---- export ----
    auto* exp = app.add_subcommand("export", "export embeddings for downstream use");
    std::string ex_ckpt, ex_images, ex_prompts, ex_out;
    exp->add_option("--checkpoint", ex_ckpt, "checkpoint path")->required();
    exp->add_option("--images", ex_images, "directory of PNG images");
    exp->add_option("--prompts", ex_prompts, "file with one prompt per line");
    exp->add_option("--out", ex_out, "output embedding file")->required();

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a procedural demo corpus");
    std::string sy_out;
    SynthConfig sy_cfg;
    std::optional<uint64_t> sy_seed;
    synth->add_option("--out", sy_out, "corpus root to create")->required();
    synth->add_option("--videos", sy_cfg.n_videos, "number of videos");
    synth->add_option("--frames", sy_cfg.frames_per_video, "frames per video");
    synth->add_option("--size", sy_cfg.image_size, "frame edge length");
    synth->add_option("--seed", sy_seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (prepare->parsed()) {
            prep_cfg.seed = prep_seed ? *prep_seed : env_seed().value_or(0);
            const PrepResult res = build_manifest(prep_corpus, prep_out, prep_cfg);
            ordered_json j{{"manifest", prep_out},
                           {"entries", res.entries_written},
                           {"skipped", res.skipped.size()},
                           {"stats", ordered_json::parse(res.stats.to_json())}};
            emit(as_json, j,
                 "wrote " + std::to_string(res.entries_written) + " entries to " + prep_out +
                     " (" + std::to_string(res.skipped.size()) + " skipped)");
            return 0;
        }
        if (train->parsed()) {
            TrainConfig cfg = TrainConfig::parse_file(train_config);
            if (auto s = env_seed()) cfg.seed = *s;
            if (train_seed) cfg.seed = *train_seed;
            Manifest manifest = Manifest::load(train_manifest);
            Trainer trainer = train_resume.empty()
                                  ? Trainer(cfg, std::move(manifest))
                                  : Trainer::resume(cfg, std::move(manifest), train_resume);
            if (!train_weights.empty()) {
                const int n = trainer.load_initial_weights(train_weights);
                std::cerr << "loaded " << n << " weight tensors from " << train_weights
                          << std::endl;
            }
            const auto res = trainer.run(train_out);
            ordered_json j{{"final_checkpoint", res.final_checkpoint.string()},
                           {"metrics_log", res.metrics_log.string()},
                           {"steps", res.steps},
                           {"first_total", res.first_total},
                           {"last_total", res.last_total}};
            emit(as_json, j,
                 "trained " + std::to_string(res.steps) + " steps; final checkpoint at " +
                     res.final_checkpoint.string());
            return 0;
        }
        if (analyze->parsed()) {
            const Checkpoint ckpt = load_checkpoint(an_ckpt);
            const DualEncoderModel<float> model = model_from_checkpoint(ckpt);
            const Manifest manifest = Manifest::load(an_manifest);
            std::optional<std::vector<std::string>> ids;
            if (!an_ids.empty()) ids = read_lines(an_ids);
            const auto res = analyze_manifest(model, manifest, ids, an_out);
            ordered_json j{{"curves_csv", res.curves_csv.string()},
                           {"report_json", res.report_json.string()},
                           {"videos", res.videos},
                           {"mean_tau", res.mean_tau}};
            emit(as_json, j,
                 "analyzed " + std::to_string(res.videos) + " videos; mean tau " +
                     fmt_g6(res.mean_tau));
            return 0;
        }
        if (exp->parsed()) {
            const Checkpoint ckpt = load_checkpoint(ex_ckpt);
            const DualEncoderModel<float> model = model_from_checkpoint(ckpt);
            std::vector<fs::path> images;
            if (!ex_images.empty()) {
                if (!fs::is_directory(ex_images)) throw Error("not a directory: " + ex_images);
                for (const auto& e : fs::directory_iterator(ex_images))
                    if (e.path().extension() == ".png") images.push_back(e.path());
                std::sort(images.begin(), images.end());
            }
            std::vector<std::string> prompts;
            if (!ex_prompts.empty()) prompts = read_lines(ex_prompts);
            const auto res = export_features(model, images, prompts, ex_out);
            ordered_json j{{"file", res.file.string()},
                           {"index", res.index.string()},
                           {"count", res.count},
                           {"dim", res.dim}};
            emit(as_json, j,
                 "exported " + std::to_string(res.count) + " embeddings of dim " +
                     std::to_string(res.dim));
            return 0;
        }
        if (synth->parsed()) {
            if (sy_seed)
                sy_cfg.seed = *sy_seed;
            else if (auto s = env_seed())
                sy_cfg.seed = *s;
            generate_synth_corpus(sy_out, sy_cfg);
            ordered_json j{{"corpus", sy_out},
                           {"videos", sy_cfg.n_videos},
                           {"frames_per_video", sy_cfg.frames_per_video}};
            emit(as_json, j, "generated " + std::to_string(sy_cfg.n_videos) + " videos under " + sy_out);
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << std::endl;
        return 2;
    }
    return 1;
}

}  // namespace rclip
