#include "rclip/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "rclip/errors.hpp"
#include "rclip/png_io.hpp"
#include "rclip/rng.hpp"

namespace rclip {

namespace fs = std::filesystem;

namespace {

struct Palette {
    const char* name;
    uint8_t r, g, b;
};

constexpr std::array<Palette, 6> kColors = {{{"red", 210, 40, 40},
                                             {"green", 40, 200, 60},
                                             {"blue", 50, 80, 220},
                                             {"yellow", 220, 200, 40},
                                             {"white", 235, 235, 235},
                                             {"purple", 160, 50, 200}}};

constexpr std::array<const char*, 3> kShapes = {"block", "ball", "ring"};

struct Target {
    const char* name;
    double fx, fy;  // fractional position
};

constexpr std::array<Target, 4> kTargets = {{{"plate", 0.2, 0.2},
                                             {"mat", 0.8, 0.2},
                                             {"bin", 0.2, 0.8},
                                             {"tray", 0.8, 0.8}}};

void draw_target(ImageU8& img, double cx, double cy) {
    // hollow gray square marker
    const int half = std::max(2, img.w / 10);
    const int x0 = static_cast<int>(cx) - half, x1 = static_cast<int>(cx) + half;
    const int y0 = static_cast<int>(cy) - half, y1 = static_cast<int>(cy) + half;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            if (y < 0 || y >= img.h || x < 0 || x >= img.w) continue;
            if (y != y0 && y != y1 && x != x0 && x != x1) continue;
            img.at(y, x, 0) = 140;
            img.at(y, x, 1) = 140;
            img.at(y, x, 2) = 140;
        }
}

void draw_shape(ImageU8& img, const char* shape, const Palette& color, double cx, double cy) {
    const double radius = std::max(3.0, img.w / 7.0);
    const std::string kind(shape);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double r2 = dx * dx + dy * dy;
            bool inside;
            if (kind == "ball")
                inside = r2 <= radius * radius;
            else if (kind == "ring")
                inside = r2 <= radius * radius && r2 >= 0.25 * radius * radius;
            else
                inside = std::fabs(dx) <= radius && std::fabs(dy) <= radius;
            if (!inside) continue;
            img.at(y, x, 0) = color.r;
            img.at(y, x, 1) = color.g;
            img.at(y, x, 2) = color.b;
        }
}

}  // namespace

void generate_synth_corpus(const fs::path& corpus_root, const SynthConfig& cfg) {
    if (cfg.n_videos < 1 || cfg.frames_per_video < 2 || cfg.image_size < 16)
        throw Error("synth: need >= 1 video, >= 2 frames, image size >= 16");

    const fs::path ds_root = corpus_root / cfg.dataset_name;
    fs::create_directories(ds_root);

    const size_t n_combos = kColors.size() * kShapes.size() * kTargets.size();
    if (static_cast<size_t>(cfg.n_videos) > n_combos)
        throw Error("synth: at most " + std::to_string(n_combos) +
                    " videos with distinct prompts");

    // distinct (color, shape, target) per video so prompts never collide
    // inside a contrastive batch
    std::vector<size_t> combos(n_combos);
    for (size_t i = 0; i < n_combos; ++i) combos[i] = i;
    Rng base(cfg.seed);
    {
        Rng combo_rng = base.fork("combos");
        shuffle(combos, combo_rng);
    }

    for (int vi = 0; vi < cfg.n_videos; ++vi) {
        Rng rng = base.fork(static_cast<uint64_t>(vi));
        const size_t combo = combos[static_cast<size_t>(vi)];
        const Palette& color = kColors[combo % kColors.size()];
        const char* shape = kShapes[(combo / kColors.size()) % kShapes.size()];
        const Target& target = kTargets[combo / (kColors.size() * kShapes.size())];

        const double tx = target.fx * cfg.image_size;
        const double ty = target.fy * cfg.image_size;
        double sx = 0, sy = 0;
        const double min_dist = cfg.image_size * 0.4;
        for (int attempt = 0; attempt < 64; ++attempt) {
            sx = 4 + rng.uniform() * (cfg.image_size - 8);
            sy = 4 + rng.uniform() * (cfg.image_size - 8);
            const double d = std::hypot(sx - tx, sy - ty);
            if (d >= min_dist) break;
        }

        char vid[32];
        std::snprintf(vid, sizeof(vid), "vid%04d", vi);
        const fs::path vdir = ds_root / vid;
        const fs::path frames = vdir / "frames";
        fs::create_directories(frames);

        std::ofstream pf(vdir / "prompt.txt", std::ios::trunc);
        pf << "move " << color.name << " " << shape << " to " << target.name << "\n";
        pf.close();

        // per-video background hue: distinct scenes must stay separable for a
        // randomly initialized encoder
        const uint8_t bg_r = static_cast<uint8_t>(10 + rng.below(80));
        const uint8_t bg_g = static_cast<uint8_t>(10 + rng.below(80));
        const uint8_t bg_b = static_cast<uint8_t>(10 + rng.below(80));

        const int n = cfg.frames_per_video;
        for (int t = 0; t < n; ++t) {
            ImageU8 img;
            img.h = cfg.image_size;
            img.w = cfg.image_size;
            img.channels = 3;
            img.pix.assign(static_cast<size_t>(img.h) * img.w * 3, 0);
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x) {
                    img.at(y, x, 0) = bg_r;
                    img.at(y, x, 1) = bg_g;
                    img.at(y, x, 2) = bg_b;
                }
            draw_target(img, tx, ty);
            const double f = static_cast<double>(t) / (n - 1);
            draw_shape(img, shape, color, sx + (tx - sx) * f, sy + (ty - sy) * f);

            char name[32];
            std::snprintf(name, sizeof(name), "%06d.png", t);
            write_png(frames / name, img);
        }
    }
}

}  // namespace rclip
