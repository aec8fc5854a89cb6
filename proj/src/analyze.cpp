#include "rclip/analyze.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "rclip/errors.hpp"
#include "rclip/format.hpp"
#include "rclip/stats.hpp"
#include "rclip/tokenizer.hpp"

namespace rclip {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

DualEncoderModel<float> model_from_checkpoint(const Checkpoint& ckpt) {
    const ModelConfig cfg = ModelConfig::from_json(ckpt.meta.model_config_json);
    DualEncoderModel<float> model = DualEncoderModel<float>::random_init(cfg);
    restore_params(model.params, ckpt);
    return model;
}

namespace {

double cosine(const float* a, const float* b, int64_t d) {
    double dot = 0, na = 0, nb = 0;
    for (int64_t i = 0; i < d; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na <= 0 || nb <= 0) throw ZeroNormEmbedding("similarity curve");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

Tensor<float> frames_tensor(const ManifestEntry& entry, int image_size,
                            const std::vector<int>& indices) {
    const int64_t n = static_cast<int64_t>(indices.size());
    Tensor<float> out({n, 4, image_size, image_size});
    const int64_t stride = static_cast<int64_t>(4) * image_size * image_size;
    for (int64_t i = 0; i < n; ++i) {
        const RGBAFrame f = load_rgba_frame(entry, indices[static_cast<size_t>(i)], image_size);
        std::copy(f.pix.begin(), f.pix.end(), out.ptr() + i * stride);
    }
    return out;
}

// Tokens/mask for one prompt at the model's context length.
void prompt_inputs(const ManifestEntry& entry, int context_len, Tensor<int32_t>& tokens,
                   Tensor<float>& mask) {
    const std::vector<std::string> words = Tokenizer::words(entry.prompt);
    const std::vector<int32_t> ids = Tokenizer::instance().encode_words(words);
    const std::vector<uint8_t> m = action_mask_for(words, entry.actions);
    const std::vector<int32_t> fitted = fit_tokens(ids, context_len);
    const std::vector<uint8_t> fitted_mask = fit_mask(m, ids.size(), context_len);
    tokens = Tensor<int32_t>({1, context_len});
    mask = Tensor<float>({1, context_len});
    for (int i = 0; i < context_len; ++i) {
        tokens[i] = fitted[static_cast<size_t>(i)];
        mask[i] = fitted_mask[static_cast<size_t>(i)] ? 1.f : 0.f;
    }
}

}  // namespace

SimilarityCurve similarity_curve(const DualEncoderModel<float>& model, const ManifestEntry& entry) {
    if (entry.num_frames < 1) throw TooFewFrames("similarity_curve needs frames");
    const int hw = model.cfg.image.image_size;

    std::vector<int> all(static_cast<size_t>(entry.num_frames));
    for (int i = 0; i < entry.num_frames; ++i) all[static_cast<size_t>(i)] = i;
    const Tensor<float> frames = frames_tensor(entry, hw, all);
    const Tensor<float> v = model.encode_image(frames);  // [N,D]

    const Tensor<float> ends = frames_tensor(entry, hw, {0, entry.num_frames - 1});
    Tensor<float> first({1, 4, hw, hw}), last({1, 4, hw, hw});
    const int64_t stride = static_cast<int64_t>(4) * hw * hw;
    std::copy(ends.ptr(), ends.ptr() + stride, first.ptr());
    std::copy(ends.ptr() + stride, ends.ptr() + 2 * stride, last.ptr());
    const Tensor<float> e_action = model.action_embedding(first, last);

    Tensor<int32_t> tokens;
    Tensor<float> mask;
    prompt_inputs(entry, model.cfg.text.context_len, tokens, mask);
    const Tensor<float> p = model.encode_prompt_with_action(tokens, mask, e_action);

    SimilarityCurve curve;
    curve.video_id = entry.video_id;
    curve.prompt = entry.prompt;
    const int64_t d = model.cfg.embed_dim;
    for (int i = 0; i < entry.num_frames; ++i)
        curve.values.push_back(cosine(v.ptr() + i * d, p.ptr(), d));
    const stats::TauResult tr = stats::kendall_tau_indexed(curve.values);
    curve.tau = tr.tau;
    curve.degenerate = tr.degenerate;
    return curve;
}

std::string AblationReport::to_json() const {
    ordered_json rows_json = ordered_json::array();
    for (const auto& r : rows) {
        rows_json.push_back(ordered_json{{"video_id", r.video_id},
                                         {"tau_with", r.tau_with},
                                         {"tau_without", r.tau_without},
                                         {"final_with", r.final_with},
                                         {"final_without", r.final_without}});
    }
    ordered_json j{{"rows", rows_json},
                   {"mean_tau_with", mean_tau_with},
                   {"mean_tau_without", mean_tau_without},
                   {"mean_final_with", mean_final_with},
                   {"mean_final_without", mean_final_without},
                   {"sign_p_tau", sign_p_tau}};
    return j.dump();
}

AblationReport ablation_compare(const Checkpoint& with_triplet, const Checkpoint& without_triplet,
                                const Manifest& manifest,
                                const std::vector<std::string>& eval_ids) {
    if (eval_ids.empty()) throw Error("ablation_compare: empty evaluation set");
    if (with_triplet.meta.model_config_json != without_triplet.meta.model_config_json)
        throw ProfileMismatch("ablation checkpoints use different model configs");

    const DualEncoderModel<float> model_with = model_from_checkpoint(with_triplet);
    const DualEncoderModel<float> model_without = model_from_checkpoint(without_triplet);

    AblationReport rep;
    std::vector<double> tau_diffs;
    for (const std::string& id : eval_ids) {
        const ManifestEntry* e = manifest.by_id(id);
        if (!e) throw Error("ablation_compare: id not in manifest: " + id);
        const SimilarityCurve a = similarity_curve(model_with, *e);
        const SimilarityCurve b = similarity_curve(model_without, *e);
        AblationRow row;
        row.video_id = id;
        row.tau_with = a.tau;
        row.tau_without = b.tau;
        row.final_with = a.values.back();
        row.final_without = b.values.back();
        rep.rows.push_back(row);
        rep.mean_tau_with += a.tau;
        rep.mean_tau_without += b.tau;
        rep.mean_final_with += row.final_with;
        rep.mean_final_without += row.final_without;
        tau_diffs.push_back(a.tau - b.tau);
    }
    const double n = static_cast<double>(rep.rows.size());
    rep.mean_tau_with /= n;
    rep.mean_tau_without /= n;
    rep.mean_final_with /= n;
    rep.mean_final_without /= n;
    rep.sign_p_tau = stats::sign_test_pvalue(tau_diffs);
    return rep;
}

ExportResult export_features(const DualEncoderModel<float>& model,
                             const std::vector<fs::path>& image_paths,
                             const std::vector<std::string>& prompts,
                             const fs::path& out_file) {
    const int64_t d = model.cfg.embed_dim;
    const int hw = model.cfg.image.image_size;
    std::vector<float> rows;
    std::vector<std::string> names;

    for (const auto& path : image_paths) {
        const ImageU8 img = read_png(path);
        BinaryMask mask(img.h, img.w);
        if (img.channels == 4) {
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x)
                    mask.m[static_cast<size_t>(y) * img.w + x] = img.at(y, x, 3) > 127 ? 1 : 0;
        } else {
            std::fill(mask.m.begin(), mask.m.end(), uint8_t(1));
        }
        const RGBAFrame f = assemble_rgba(img, mask, hw, hw);
        Tensor<float> im({1, 4, hw, hw});
        std::copy(f.pix.begin(), f.pix.end(), im.ptr());
        const Tensor<float> v = model.encode_image(im);
        rows.insert(rows.end(), v.data.begin(), v.data.end());
        names.push_back(path.string());
    }

    const int context = model.cfg.text.context_len;
    for (const std::string& prompt : prompts) {
        const std::vector<int32_t> ids = Tokenizer::instance().encode(prompt);
        const std::vector<int32_t> fitted = fit_tokens(ids, context);
        Tensor<int32_t> tokens({1, context});
        for (int i = 0; i < context; ++i) tokens[i] = fitted[static_cast<size_t>(i)];
        const Tensor<float> p = model.encode_prompt_plain(tokens);
        rows.insert(rows.end(), p.data.begin(), p.data.end());
        names.push_back(prompt);
    }

    if (names.empty()) throw Error("export_features: no inputs");

    if (out_file.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(out_file.parent_path(), ec);
    }
    std::ofstream f(out_file, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + out_file.string());
    f.write(reinterpret_cast<const char*>(rows.data()),
            static_cast<std::streamsize>(rows.size() * sizeof(float)));
    f.close();

    ExportResult res;
    res.file = out_file;
    res.index = out_file.string() + ".index.json";
    res.count = static_cast<int64_t>(names.size());
    res.dim = d;
    ordered_json j{{"dim", d}, {"count", res.count}, {"names", names}};
    std::ofstream idx(res.index, std::ios::trunc);
    idx << j.dump() << "\n";
    return res;
}

Tensor<float> read_export(const fs::path& file) {
    std::ifstream idx(file.string() + ".index.json");
    if (!idx) throw Error("missing export index for " + file.string());
    ordered_json j = ordered_json::parse(idx);
    const int64_t dim = j.at("dim");
    const int64_t count = j.at("count");
    std::ifstream f(file, std::ios::binary);
    if (!f) throw Error("cannot open " + file.string());
    Tensor<float> out({count, dim});
    f.read(reinterpret_cast<char*>(out.ptr()),
           static_cast<std::streamsize>(out.numel() * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(out.numel() * sizeof(float)))
        throw Error("export file truncated: " + file.string());
    return out;
}

AnalyzeRunResult analyze_manifest(const DualEncoderModel<float>& model, const Manifest& manifest,
                                  const std::optional<std::vector<std::string>>& ids,
                                  const fs::path& out_dir) {
    std::vector<const ManifestEntry*> targets;
    if (ids.has_value()) {
        for (const auto& id : *ids) {
            const ManifestEntry* e = manifest.by_id(id);
            if (!e) throw Error("analyze: id not in manifest: " + id);
            targets.push_back(e);
        }
    } else {
        for (const auto& e : manifest.entries) targets.push_back(&e);
    }
    if (targets.empty()) throw Error("analyze: nothing to analyze");

    std::error_code ec;
    fs::create_directories(out_dir, ec);

    std::vector<SimilarityCurve> curves(targets.size());
    const int64_t n = static_cast<int64_t>(targets.size());
    std::exception_ptr curve_error;
#pragma omp parallel for schedule(dynamic)
    for (int64_t i = 0; i < n; ++i) {
        try {
            curves[static_cast<size_t>(i)] =
                similarity_curve(model, *targets[static_cast<size_t>(i)]);
        } catch (...) {
#pragma omp critical(rclip_curve_error)
            if (!curve_error) curve_error = std::current_exception();
        }
    }
    if (curve_error) std::rethrow_exception(curve_error);

    AnalyzeRunResult res;
    res.curves_csv = out_dir / "curves.csv";
    res.report_json = out_dir / "report.json";

    std::ofstream csv(res.curves_csv, std::ios::trunc);
    csv << "video_id,frame_index,similarity\n";
    ordered_json rows = ordered_json::array();
    double tau_sum = 0;
    for (const auto& c : curves) {
        for (size_t t = 0; t < c.values.size(); ++t)
            csv << c.video_id << "," << t << "," << fmt_g6(c.values[t]) << "\n";
        rows.push_back(ordered_json{{"video_id", c.video_id},
                                    {"tau", c.tau},
                                    {"degenerate", c.degenerate},
                                    {"first", c.values.front()},
                                    {"last", c.values.back()}});
        tau_sum += c.tau;
    }
    res.videos = static_cast<int64_t>(curves.size());
    res.mean_tau = tau_sum / static_cast<double>(curves.size());

    ordered_json j{{"videos", res.videos}, {"mean_tau", res.mean_tau}, {"rows", rows}};
    std::ofstream rf(res.report_json, std::ios::trunc);
    rf << j.dump() << "\n";
    return res;
}

}  // namespace rclip
