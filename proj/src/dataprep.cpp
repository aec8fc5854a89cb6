#include "rclip/dataprep.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rclip/errors.hpp"
#include "rclip/hash.hpp"
#include "rclip/lexicon.hpp"
#include "rclip/tokenizer.hpp"
#include "rclip/version.hpp"

namespace rclip {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// ---- taggers ----------------------------------------------------------------

std::vector<PosTag> RuleTagger::tag(const std::vector<std::string>& words) const {
    std::vector<PosTag> tags;
    tags.reserve(words.size());
    for (const auto& w : words) {
        if (lexicon::verb_stem(w).has_value())
            tags.push_back(PosTag::Verb);
        else if (lexicon::is_adjective(w))
            tags.push_back(PosTag::Adjective);
        else if (lexicon::is_stopword(w))
            tags.push_back(PosTag::Stop);
        else
            tags.push_back(PosTag::Noun);
    }
    return tags;
}

std::vector<PosTag> FileTagger::tag(const std::vector<std::string>& words) const {
    std::ifstream f(pos_file_);
    if (!f) throw TaggerFailure("cannot open " + pos_file_.string());
    std::vector<PosTag> tags;
    std::string line;
    size_t i = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) throw TaggerFailure("malformed line in " + pos_file_.string());
        const std::string word = line.substr(0, tab);
        const std::string tagname = line.substr(tab + 1);
        if (i >= words.size() || word != words[i])
            throw TaggerFailure("word sequence mismatch at line " + std::to_string(i + 1));
        if (tagname == "NOUN" || tagname == "PROPN")
            tags.push_back(PosTag::Noun);
        else if (tagname == "VERB")
            tags.push_back(PosTag::Verb);
        else if (tagname == "ADJ")
            tags.push_back(PosTag::Adjective);
        else
            tags.push_back(PosTag::Stop);
        ++i;
    }
    if (i != words.size()) throw TaggerFailure("tag count does not match word count");
    return tags;
}

// ---- query extraction --------------------------------------------------------

std::vector<uint8_t> action_mask_for(const std::vector<std::string>& words,
                                     const std::vector<std::string>& actions) {
    std::vector<uint8_t> m(words.size() + 2, 0);  // BOS ... EOS
    if (actions.empty()) return m;
    for (size_t i = 0; i < words.size(); ++i) {
        for (const std::string& cand : lexicon::stem_candidates(words[i])) {
            if (std::find(actions.begin(), actions.end(), cand) != actions.end()) {
                m[i + 1] = 1;
                break;
            }
        }
    }
    return m;
}

PromptAnnotation extract_queries(const std::string& prompt, const PosTagger& tagger) {
    const std::vector<std::string> words = Tokenizer::words(prompt);
    if (words.empty()) throw EmptyPrompt();

    std::vector<PosTag> tags;
    try {
        tags = tagger.tag(words);
    } catch (const TaggerFailure&) {
        throw;
    } catch (const std::exception& e) {
        throw TaggerFailure(e.what());
    }
    if (tags.size() != words.size()) throw TaggerFailure("tag/word count mismatch");

    PromptAnnotation ann;
    ann.prompt = prompt;

    for (size_t i = 0; i < words.size(); ++i) {
        if (tags[i] != PosTag::Verb) continue;
        const std::string stem = lexicon::verb_stem(words[i]).value_or(words[i]);
        if (std::find(ann.actions.begin(), ann.actions.end(), stem) == ann.actions.end())
            ann.actions.push_back(stem);
    }

    // Noun phrases: maximal Adjective*/Noun runs containing at least one noun.
    size_t i = 0;
    while (i < words.size()) {
        if (tags[i] == PosTag::Adjective || tags[i] == PosTag::Noun) {
            size_t j = i;
            bool has_noun = false;
            std::string phrase;
            while (j < words.size() && (tags[j] == PosTag::Adjective || tags[j] == PosTag::Noun)) {
                if (!phrase.empty()) phrase += " ";
                phrase += words[j];
                has_noun = has_noun || tags[j] == PosTag::Noun;
                ++j;
            }
            if (has_noun) ann.objects.push_back(phrase);
            i = j;
        } else {
            ++i;
        }
    }

    ann.tokens = Tokenizer::instance().encode_words(words);
    ann.action_mask = action_mask_for(words, ann.actions);
    return ann;
}

// ---- segmenters ----------------------------------------------------------------

BinaryMask FullImageSegmenter::segment_object(const ImageU8& frame, const std::string&,
                                              const FrameContext&) const {
    BinaryMask m(frame.h, frame.w);
    std::fill(m.m.begin(), m.m.end(), uint8_t(1));
    return m;
}

BinaryMask BoxStubSegmenter::segment_object(const ImageU8& frame, const std::string& object,
                                            const FrameContext&) const {
    BinaryMask m(frame.h, frame.w);
    const uint64_t h = fnv1a64(object);
    const double fx = static_cast<double>(h & 0xffff) / 65536.0;
    const double fy = static_cast<double>((h >> 16) & 0xffff) / 65536.0;
    const double fsz = static_cast<double>((h >> 32) & 0xffff) / 65536.0;
    const double cx = frame.w * (0.2 + 0.6 * fx);
    const double cy = frame.h * (0.2 + 0.6 * fy);
    const double half = std::min(frame.h, frame.w) * (0.10 + 0.15 * fsz);
    const int y0 = std::max(0, static_cast<int>(cy - half));
    const int y1 = std::min(frame.h, static_cast<int>(cy + half) + 1);
    const int x0 = std::max(0, static_cast<int>(cx - half));
    const int x1 = std::min(frame.w, static_cast<int>(cx + half) + 1);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.m[static_cast<size_t>(y) * frame.w + x] = 1;
    return m;
}

BinaryMask FileMaskSegmenter::segment_object(const ImageU8& frame, const std::string&,
                                             const FrameContext& ctx) const {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.png", ctx.frame_index);
    const fs::path p = ctx.video_dir / subdir_ / name;
    ImageU8 img;
    try {
        img = read_png(p);
    } catch (const std::exception& e) {
        throw SegmenterFailure(e.what());
    }
    if (img.h != frame.h || img.w != frame.w)
        throw SegmenterFailure("external mask size mismatch for " + p.string());
    BinaryMask m(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            m.m[static_cast<size_t>(y) * img.w + x] = img.at(y, x, 0) > 127 ? 1 : 0;
    return m;
}

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
    if (a.h != b.h || a.w != b.w) throw ShapeMismatch("mask union dims");
    BinaryMask out(a.h, a.w);
    for (size_t i = 0; i < out.m.size(); ++i) out.m[i] = (a.m[i] | b.m[i]) ? 1 : 0;
    return out;
}

BinaryMask generate_alpha_mask(const ImageU8& frame, const std::vector<std::string>& objects,
                               const Segmenter& segmenter, const FrameContext& ctx) {
    BinaryMask acc(frame.h, frame.w);
    for (const std::string& obj : objects) {
        BinaryMask m;
        try {
            m = segmenter.segment_object(frame, obj, ctx);
        } catch (const SegmenterFailure&) {
            throw;
        } catch (const std::exception& e) {
            throw SegmenterFailure(e.what());
        }
        acc = mask_union(acc, m);
    }
    return acc;
}

// ---- RGBA assembly -------------------------------------------------------------

RGBAFrame assemble_rgba(const ImageU8& frame, const BinaryMask& mask, int out_h, int out_w) {
    if (frame.h != mask.h || frame.w != mask.w)
        throw ShapeMismatch("assemble_rgba: frame " + std::to_string(frame.h) + "x" +
                            std::to_string(frame.w) + " vs mask " + std::to_string(mask.h) + "x" +
                            std::to_string(mask.w));
    if (out_h <= 0) out_h = frame.h;
    if (out_w <= 0) out_w = frame.w;

    RGBAFrame out(out_h, out_w);
    const double sy = static_cast<double>(frame.h) / out_h;
    const double sx = static_cast<double>(frame.w) / out_w;

    auto channel_of = [&](int c, int y, int x) -> double {
        if (frame.channels >= 3) return frame.at(y, x, c);
        return frame.at(y, x, 0);  // grayscale replicated
    };

    for (int y = 0; y < out_h; ++y) {
        const double y0 = y * sy, y1 = (y + 1) * sy;
        for (int x = 0; x < out_w; ++x) {
            const double x0 = x * sx, x1 = (x + 1) * sx;
            double acc[3] = {0, 0, 0};
            double area = 0;
            for (int yi = static_cast<int>(y0); yi < frame.h && yi < y1; ++yi) {
                const double wy = std::min<double>(y1, yi + 1) - std::max<double>(y0, yi);
                if (wy <= 0) continue;
                for (int xi = static_cast<int>(x0); xi < frame.w && xi < x1; ++xi) {
                    const double wx = std::min<double>(x1, xi + 1) - std::max<double>(x0, xi);
                    if (wx <= 0) continue;
                    const double w = wy * wx;
                    for (int c = 0; c < 3; ++c) acc[c] += w * channel_of(c, yi, xi);
                    area += w;
                }
            }
            for (int c = 0; c < 3; ++c)
                out.at(c, y, x) = static_cast<float>(acc[c] / (area * 255.0));
            const int ny = std::min(frame.h - 1, static_cast<int>((y + 0.5) * sy));
            const int nx = std::min(frame.w - 1, static_cast<int>((x + 0.5) * sx));
            out.at(3, y, x) = mask.m[static_cast<size_t>(ny) * frame.w + nx] ? 1.f : 0.f;
        }
    }
    return out;
}

// ---- manifest ------------------------------------------------------------------

std::string PrepConfig::fingerprint() const {
    std::string desc = std::string(kPrepPipelineVersion) + "|seg=" + segmenter +
                       "|tag=" + tagger + "|ext=" + external_mask_subdir +
                       "|seed=" + std::to_string(seed) + "|resample=area+nearest";
    return hex64(fnv1a64(desc));
}

std::string ManifestEntry::to_jsonl() const {
    ordered_json j;
    j["video_id"] = video_id;
    j["source_dataset"] = source_dataset;
    j["prompt"] = prompt;
    j["objects"] = objects;
    j["actions"] = actions;
    j["frame_dir"] = frame_dir;
    j["mask_dir"] = mask_dir;
    j["num_frames"] = num_frames;
    j["flags"] = flags;
    j["fingerprint"] = fingerprint;
    return j.dump();
}

ManifestEntry ManifestEntry::from_jsonl(const std::string& line) {
    ordered_json j = ordered_json::parse(line);
    ManifestEntry e;
    e.video_id = j.at("video_id");
    e.source_dataset = j.at("source_dataset");
    e.prompt = j.at("prompt");
    e.objects = j.at("objects").get<std::vector<std::string>>();
    e.actions = j.at("actions").get<std::vector<std::string>>();
    e.frame_dir = j.at("frame_dir");
    e.mask_dir = j.at("mask_dir");
    e.num_frames = j.at("num_frames");
    e.flags = j.at("flags").get<std::vector<std::string>>();
    e.fingerprint = j.at("fingerprint");
    return e;
}

int64_t CorpusStats::total_videos() const {
    int64_t n = 0;
    for (const auto& [_, s] : per_source) n += s.videos;
    return n;
}

int64_t CorpusStats::total_action_categories() const {
    std::set<std::string> all;
    for (const auto& [_, s] : per_source)
        all.insert(s.action_categories.begin(), s.action_categories.end());
    return static_cast<int64_t>(all.size());
}

std::string CorpusStats::to_json() const {
    ordered_json sources;
    for (const auto& [name, s] : per_source) {
        sources[name] = ordered_json{{"videos", s.videos},
                                     {"action_categories", s.action_categories.size()}};
    }
    ordered_json j{{"sources", sources},
                   {"total_videos", total_videos()},
                   {"total_action_categories", total_action_categories()}};
    return j.dump();
}

std::vector<RawVideoRecord> scan_corpus(const fs::path& corpus_root) {
    if (!fs::is_directory(corpus_root)) throw NoRecords("corpus root is not a directory");
    std::vector<fs::path> datasets;
    for (const auto& d : fs::directory_iterator(corpus_root))
        if (d.is_directory()) datasets.push_back(d.path());
    std::sort(datasets.begin(), datasets.end());

    std::vector<RawVideoRecord> records;
    for (const auto& ds : datasets) {
        std::vector<fs::path> videos;
        for (const auto& v : fs::directory_iterator(ds))
            if (v.is_directory()) videos.push_back(v.path());
        std::sort(videos.begin(), videos.end());
        for (const auto& vd : videos) {
            RawVideoRecord rec;
            rec.video_id = vd.filename().string();
            rec.source_dataset = ds.filename().string();
            rec.video_dir = vd;
            std::ifstream pf(vd / "prompt.txt");
            if (pf) {
                std::stringstream ss;
                ss << pf.rdbuf();
                rec.prompt = ss.str();
                while (!rec.prompt.empty() &&
                       (rec.prompt.back() == '\n' || rec.prompt.back() == '\r'))
                    rec.prompt.pop_back();
            }
            const fs::path frames = vd / "frames";
            if (fs::is_directory(frames)) {
                std::vector<fs::path> fps;
                for (const auto& f : fs::directory_iterator(frames))
                    if (f.path().extension() == ".png") fps.push_back(f.path());
                std::sort(fps.begin(), fps.end());
                rec.frame_paths = std::move(fps);
                rec.num_frames = static_cast<int>(rec.frame_paths.size());
            }
            records.push_back(std::move(rec));
        }
    }
    return records;
}

std::unique_ptr<Segmenter> make_segmenter(const PrepConfig& cfg) {
    if (cfg.segmenter == "stub-full") return std::make_unique<FullImageSegmenter>();
    if (cfg.segmenter == "stub-box") return std::make_unique<BoxStubSegmenter>();
    if (cfg.segmenter == "external")
        return std::make_unique<FileMaskSegmenter>(cfg.external_mask_subdir);
    throw Error("unknown segmenter: " + cfg.segmenter);
}

namespace {

std::string frame_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d.png", i);
    return buf;
}

struct VideoOutcome {
    std::optional<ManifestEntry> entry;
    std::optional<SkippedRecord> skipped;
};

VideoOutcome process_video(const RawVideoRecord& rec, const PrepConfig& cfg,
                           const Segmenter& segmenter) {
    VideoOutcome out;
    auto skip = [&](const std::string& reason) {
        out.skipped = SkippedRecord{rec.video_id, reason};
        return out;
    };

    if (rec.num_frames == 0) return skip("no frames");
    for (int i = 0; i < rec.num_frames; ++i)
        if (rec.frame_paths[static_cast<size_t>(i)].filename().string() != frame_name(i))
            return skip("frame files do not follow %06d.png numbering from 0");

    PromptAnnotation ann;
    try {
        std::unique_ptr<PosTagger> file_tagger;
        const PosTagger* tagger;
        if (cfg.tagger == "rule") {
            static const RuleTagger rule;
            tagger = &rule;
        } else if (cfg.tagger == "external") {
            file_tagger = std::make_unique<FileTagger>(rec.video_dir / "prompt.pos");
            tagger = file_tagger.get();
        } else {
            throw Error("unknown tagger: " + cfg.tagger);
        }
        ann = extract_queries(rec.prompt, *tagger);
    } catch (const EmptyPrompt& e) {
        return skip(e.what());
    } catch (const TaggerFailure& e) {
        return skip(e.what());
    }

    ManifestEntry entry;
    entry.video_id = rec.video_id;
    entry.source_dataset = rec.source_dataset;
    entry.prompt = rec.prompt;
    entry.objects = ann.objects;
    entry.actions = ann.actions;
    entry.num_frames = rec.num_frames;
    entry.fingerprint = cfg.fingerprint();

    const fs::path mask_dir = rec.video_dir / "masks";
    std::error_code ec;
    fs::create_directories(mask_dir, ec);

    bool degraded = false, zero_mask = false;
    BinaryMask prev;
    bool have_prev = false;
    for (int i = 0; i < rec.num_frames; ++i) {
        ImageU8 frame;
        try {
            frame = read_png(rec.frame_paths[static_cast<size_t>(i)]);
        } catch (const std::exception& e) {
            return skip(std::string("frame read failed: ") + e.what());
        }
        BinaryMask mask;
        FrameContext ctx{rec.video_id, rec.video_dir, i};
        try {
            mask = generate_alpha_mask(frame, entry.objects, segmenter, ctx);
        } catch (const SegmenterFailure&) {
            degraded = true;
            mask = have_prev ? prev : BinaryMask(frame.h, frame.w);
        }
        if (mask.all_zero()) zero_mask = true;

        ImageU8 img;
        img.h = mask.h;
        img.w = mask.w;
        img.channels = 1;
        img.pix.resize(mask.m.size());
        for (size_t k = 0; k < mask.m.size(); ++k) img.pix[k] = mask.m[k] ? 255 : 0;
        write_png(mask_dir / frame_name(i), img);

        prev = std::move(mask);
        have_prev = true;
    }
    if (degraded) entry.flags.push_back("degraded");
    if (zero_mask) entry.flags.push_back("zero_mask");

    entry.frame_dir = fs::weakly_canonical(rec.video_dir / "frames").string();
    entry.mask_dir = fs::weakly_canonical(mask_dir).string();
    out.entry = std::move(entry);
    return out;
}

}  // namespace

PrepResult build_manifest(const fs::path& corpus_root, const fs::path& manifest_out,
                          const PrepConfig& cfg) {
    const std::vector<RawVideoRecord> records = scan_corpus(corpus_root);
    if (records.empty()) throw NoRecords("corpus contains no video directories");

    const std::unique_ptr<Segmenter> segmenter = make_segmenter(cfg);

    std::vector<VideoOutcome> outcomes(records.size());
    const int64_t n = static_cast<int64_t>(records.size());
    // exceptions may not cross the parallel region; unexpected ones become
    // per-record skips
#pragma omp parallel for schedule(dynamic)
    for (int64_t i = 0; i < n; ++i) {
        const RawVideoRecord& rec = records[static_cast<size_t>(i)];
        try {
            outcomes[static_cast<size_t>(i)] = process_video(rec, cfg, *segmenter);
        } catch (const std::exception& e) {
            outcomes[static_cast<size_t>(i)].skipped = SkippedRecord{rec.video_id, e.what()};
        }
    }

    PrepResult result;
    std::vector<ManifestEntry> entries;
    for (auto& o : outcomes) {
        if (o.entry) entries.push_back(std::move(*o.entry));
        if (o.skipped) result.skipped.push_back(std::move(*o.skipped));
    }
    if (entries.empty())
        throw NoRecords("no record survived preparation (" +
                        std::to_string(result.skipped.size()) + " skipped)");

    std::sort(entries.begin(), entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.video_id < b.video_id; });

    if (manifest_out.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(manifest_out.parent_path(), ec);
    }
    std::ofstream mf(manifest_out, std::ios::trunc);
    if (!mf) throw Error("cannot write manifest " + manifest_out.string());
    for (const auto& e : entries) {
        mf << e.to_jsonl() << "\n";
        auto& src = result.stats.per_source[e.source_dataset];
        src.videos += 1;
        src.action_categories.insert(e.actions.begin(), e.actions.end());
    }
    mf.close();
    result.entries_written = static_cast<int64_t>(entries.size());

    std::ofstream sf(manifest_out.string() + ".stats.json", std::ios::trunc);
    sf << result.stats.to_json() << "\n";

    ordered_json skips = ordered_json::array();
    for (const auto& s : result.skipped)
        skips.push_back(ordered_json{{"video_id", s.video_id}, {"reason", s.reason}});
    std::ofstream kf(manifest_out.string() + ".skips.json", std::ios::trunc);
    kf << skips.dump() << "\n";

    return result;
}

}  // namespace rclip
