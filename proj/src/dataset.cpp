#include "rclip/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "rclip/errors.hpp"
#include "rclip/hash.hpp"
#include "rclip/tokenizer.hpp"

namespace rclip {

namespace fs = std::filesystem;

Manifest Manifest::load(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open manifest " + path.string());
    Manifest m;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        m.entries.push_back(ManifestEntry::from_jsonl(line));
    }
    if (m.entries.empty()) throw NoRecords("manifest is empty: " + path.string());
    return m;
}

std::vector<size_t> Manifest::eligible() const {
    std::vector<size_t> out;
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].eligible()) out.push_back(i);
    return out;
}

const ManifestEntry* Manifest::by_id(const std::string& video_id) const {
    for (const auto& e : entries)
        if (e.video_id == video_id) return &e;
    return nullptr;
}

std::pair<int, int> sample_frame_pair(int num_frames, Rng& rng, int min_gap) {
    if (num_frames < 2) throw TooFewFrames("need at least 2 frames, have " +
                                           std::to_string(num_frames));
    int64_t total = 0;
    for (int t1 = 0; t1 < num_frames; ++t1) {
        const int c = num_frames - t1 - 1 - min_gap;
        if (c > 0) total += c;
    }
    if (total == 0)
        throw TooFewFrames("no admissible pair with min_gap=" + std::to_string(min_gap));
    int64_t r = static_cast<int64_t>(rng.below(static_cast<uint64_t>(total)));
    for (int t1 = 0; t1 < num_frames; ++t1) {
        const int c = num_frames - t1 - 1 - min_gap;
        if (c <= 0) continue;
        if (r < c) return {t1, t1 + min_gap + 1 + static_cast<int>(r)};
        r -= c;
    }
    throw Error("sample_frame_pair: unreachable");
}

SplitResult split(const Manifest& manifest, double train_ratio, double val_ratio,
                  const std::string& salt) {
    if (std::fabs(train_ratio + val_ratio - 1.0) > 1e-9)
        throw Error("split: ratios must sum to 1");
    SplitResult out;
    for (const auto& e : manifest.entries) {
        // finalizer on top of FNV: raw FNV high bits avalanche poorly on
        // short similar ids
        const uint64_t h = hash_mix(fnv1a64(salt + ":" + e.video_id), 0x5bd1e995);
        const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
        if (u < train_ratio)
            out.train_ids.push_back(e.video_id);
        else
            out.val_ids.push_back(e.video_id);
    }
    return out;
}

RGBAFrame load_rgba_frame(const ManifestEntry& entry, int frame_index, int image_size) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.png", frame_index);
    const ImageU8 frame = read_png(fs::path(entry.frame_dir) / name);
    const ImageU8 mask_img = read_png(fs::path(entry.mask_dir) / name);
    if (mask_img.h != frame.h || mask_img.w != frame.w)
        throw ShapeMismatch("mask/frame dims for " + entry.video_id);
    BinaryMask mask(mask_img.h, mask_img.w);
    for (int y = 0; y < mask_img.h; ++y)
        for (int x = 0; x < mask_img.w; ++x)
            mask.m[static_cast<size_t>(y) * mask_img.w + x] = mask_img.at(y, x, 0) > 127 ? 1 : 0;
    return assemble_rgba(frame, mask, image_size, image_size);
}

namespace {

void copy_frame(Tensor<float>& dst, int64_t b, const RGBAFrame& f) {
    std::copy(f.pix.begin(), f.pix.end(), dst.ptr() + b * static_cast<int64_t>(f.pix.size()));
}

}  // namespace

Batch make_batch(const Manifest& manifest, const std::vector<size_t>& indices, Rng& rng,
                 const BatchConfig& cfg) {
    const int64_t bsz = static_cast<int64_t>(indices.size());
    if (bsz == 0) throw Error("make_batch: empty index list");

    std::set<std::string> seen;
    for (size_t idx : indices) {
        if (idx >= manifest.entries.size()) throw Error("make_batch: index out of range");
        const ManifestEntry& e = manifest.entries[idx];
        if (!seen.insert(e.video_id).second) throw DuplicateVideoInBatch(e.video_id);
        if (!e.eligible())
            throw IneligibleEntry(e.video_id + (e.flags.empty() ? " (too few frames)"
                                                                : " (flagged)"));
    }

    Batch batch;
    const int hw = cfg.image_size;
    batch.images1 = Tensor<float>({bsz, 4, hw, hw});
    batch.images2 = Tensor<float>({bsz, 4, hw, hw});
    batch.tokens = Tensor<int32_t>({bsz, cfg.context_len});
    batch.action_mask = Tensor<float>({bsz, cfg.context_len});

    // Pair draws happen serially so batch contents are independent of any
    // loader parallelism below.
    for (int64_t b = 0; b < bsz; ++b) {
        const ManifestEntry& e = manifest.entries[indices[static_cast<size_t>(b)]];
        batch.video_ids.push_back(e.video_id);
        batch.frame_pairs.push_back(sample_frame_pair(e.num_frames, rng, cfg.min_gap));
    }

    // loader workers must not leak exceptions across the parallel region
    std::exception_ptr load_error;
#pragma omp parallel for schedule(dynamic)
    for (int64_t b = 0; b < bsz; ++b) {
        try {
            const ManifestEntry& e = manifest.entries[indices[static_cast<size_t>(b)]];
            const auto [t1, t2] = batch.frame_pairs[static_cast<size_t>(b)];
            copy_frame(batch.images1, b, load_rgba_frame(e, t1, hw));
            copy_frame(batch.images2, b, load_rgba_frame(e, t2, hw));

            const std::vector<std::string> words = Tokenizer::words(e.prompt);
            const std::vector<int32_t> ids = Tokenizer::instance().encode_words(words);
            const std::vector<uint8_t> mask = action_mask_for(words, e.actions);
            const std::vector<int32_t> fitted = fit_tokens(ids, cfg.context_len);
            const std::vector<uint8_t> fitted_mask = fit_mask(mask, ids.size(), cfg.context_len);
            for (int i = 0; i < cfg.context_len; ++i) {
                batch.tokens[b * cfg.context_len + i] = fitted[static_cast<size_t>(i)];
                batch.action_mask[b * cfg.context_len + i] =
                    fitted_mask[static_cast<size_t>(i)] ? 1.f : 0.f;
            }
        } catch (...) {
#pragma omp critical(rclip_batch_error)
            if (!load_error) load_error = std::current_exception();
        }
    }
    if (load_error) std::rethrow_exception(load_error);

    for (const auto& [t1, t2] : batch.frame_pairs)
        if (t1 >= t2) throw Error("make_batch: frame pair ordering violated");
    return batch;
}

std::vector<std::vector<size_t>> plan_epoch(const std::vector<size_t>& pool, int batch_size,
                                            uint64_t seed, int epoch) {
    std::vector<size_t> order = pool;
    Rng rng = Rng(seed).fork("shuffle").fork(static_cast<uint64_t>(epoch));
    shuffle(order, rng);
    std::vector<std::vector<size_t>> batches;
    for (size_t i = 0; i + batch_size <= order.size(); i += batch_size)
        batches.emplace_back(order.begin() + static_cast<long>(i),
                             order.begin() + static_cast<long>(i + batch_size));
    return batches;
}

Rng batch_rng(uint64_t seed, int epoch, int batch_index) {
    return Rng(seed).fork("pairs").fork(static_cast<uint64_t>(epoch)).fork(
        static_cast<uint64_t>(batch_index));
}

}  // namespace rclip
