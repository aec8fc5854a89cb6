#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rclip/cli.hpp"
#include "rclip/dataprep.hpp"
#include "rclip/dataset.hpp"

using namespace rclip;
namespace fs = std::filesystem;

namespace {

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("rclip");
    for (const auto& a : args) argv.push_back(a.c_str());
    return dispatch(static_cast<int>(argv.size()), argv.data());
}

fs::path work_dir() {
    static const fs::path p = [] {
        const fs::path d = fs::temp_directory_path() / "rclip_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return p;
}

std::string first_line(const fs::path& p) {
    std::ifstream f(p);
    REQUIRE(f);
    std::string line;
    std::getline(f, line);
    return line;
}

}  // namespace

TEST_CASE("usage basics: help is 0, misuse is 1") {
    CHECK(run({"--help"}) == 0);
    CHECK(run({"--version"}) == 0);
    CHECK(run({"frobnicate"}) == 1);
    CHECK(run({}) == 1);
    CHECK(run({"train"}) == 1);                                   // missing required flags
    CHECK(run({"prepare", "--corpus", "/nope", "--out", "x"}) == 1);
    CHECK(run({"train", "--config", "missing.cfg", "--manifest", "m", "--out", "o"}) == 1);
    CHECK(run({"prepare", "--corpus", "/nope", "--out", "x", "--segmenter", "bogus"}) == 1);
    CHECK(run({"analyze", "--checkpoint", "/nope.rckpt", "--manifest", "m", "--out", "o"}) == 1);
}

TEST_CASE("full pipeline through the CLI") {
    const fs::path dir = work_dir();
    const fs::path corpus = dir / "corpus";

    CHECK(run({"synth", "--out", corpus.string(), "--videos", "6", "--frames", "5", "--size",
               "32", "--seed", "3"}) == 0);
    CHECK(fs::exists(corpus / "synth" / "vid0000" / "prompt.txt"));

    const fs::path manifest = dir / "manifest.jsonl";
    CHECK(run({"--json", "prepare", "--corpus", corpus.string(), "--out", manifest.string(),
               "--segmenter", "stub-full", "--tagger", "rule", "--seed", "1"}) == 0);
    CHECK(fs::exists(manifest));
    CHECK(fs::exists(manifest.string() + ".stats.json"));

    const fs::path cfg = dir / "train.cfg";
    {
        std::ofstream f(cfg);
        f << "seed = 4\nepochs = 1\nmax_steps = 2\nbatch_size = 2\nlr = 0.001\n"
          << "model_profile = toy\n";
    }
    const fs::path run_dir = dir / "run";
    CHECK(run({"train", "--config", cfg.string(), "--manifest", manifest.string(), "--out",
               run_dir.string()}) == 0);
    const fs::path ckpt = run_dir / "ckpt_final.rckpt";
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(run_dir / "metrics.jsonl"));

    const fs::path analysis = dir / "analysis";
    CHECK(run({"analyze", "--checkpoint", ckpt.string(), "--manifest", manifest.string(),
               "--out", analysis.string()}) == 0);
    CHECK(fs::exists(analysis / "curves.csv"));
    CHECK(fs::exists(analysis / "report.json"));

    const fs::path prompts = dir / "prompts.txt";
    {
        std::ofstream f(prompts);
        f << "move red block to plate\nopen microwave\n";
    }
    const fs::path emb = dir / "emb.bin";
    CHECK(run({"export", "--checkpoint", ckpt.string(), "--prompts", prompts.string(), "--out",
               emb.string()}) == 0);
    CHECK(fs::exists(emb));
    CHECK(fs::exists(emb.string() + ".index.json"));

    const fs::path images_out = dir / "emb_images.bin";
    CHECK(run({"export", "--checkpoint", ckpt.string(), "--images",
               (corpus / "synth" / "vid0000" / "frames").string(), "--out",
               images_out.string()}) == 0);

    // resume is accepted on the CLI
    const fs::path cfg2 = dir / "train2.cfg";
    {
        std::ofstream f(cfg2);
        f << "seed = 4\nepochs = 1\nmax_steps = 3\nbatch_size = 2\nlr = 0.001\n"
          << "model_profile = toy\n";
    }
    CHECK(run({"train", "--config", cfg2.string(), "--manifest", manifest.string(), "--out",
               (dir / "run2").string(), "--resume", ckpt.string()}) == 0);
}

TEST_CASE("seed precedence: flag > environment > default") {
    const fs::path dir = work_dir() / "seeds";
    fs::create_directories(dir);
    const fs::path corpus = work_dir() / "corpus";  // built by the pipeline test
    REQUIRE(fs::exists(corpus));

    setenv("ROBOTIC_CLIP_SEED", "77", 1);
    const fs::path m_env = dir / "env.jsonl";
    CHECK(run({"prepare", "--corpus", corpus.string(), "--out", m_env.string()}) == 0);
    PrepConfig want_env;
    want_env.seed = 77;
    CHECK(ManifestEntry::from_jsonl(first_line(m_env)).fingerprint == want_env.fingerprint());

    const fs::path m_flag = dir / "flag.jsonl";
    CHECK(run({"prepare", "--corpus", corpus.string(), "--out", m_flag.string(), "--seed",
               "5"}) == 0);
    PrepConfig want_flag;
    want_flag.seed = 5;
    CHECK(ManifestEntry::from_jsonl(first_line(m_flag)).fingerprint == want_flag.fingerprint());
    unsetenv("ROBOTIC_CLIP_SEED");

    const fs::path m_plain = dir / "plain.jsonl";
    CHECK(run({"prepare", "--corpus", corpus.string(), "--out", m_plain.string()}) == 0);
    PrepConfig want_plain;
    CHECK(ManifestEntry::from_jsonl(first_line(m_plain)).fingerprint == want_plain.fingerprint());
}

TEST_CASE("malformed environment seed is a user error") {
    setenv("ROBOTIC_CLIP_SEED", "not_a_number", 1);
    const fs::path dir = work_dir();
    CHECK(run({"prepare", "--corpus", (dir / "corpus").string(), "--out",
               (dir / "x.jsonl").string()}) == 1);
    unsetenv("ROBOTIC_CLIP_SEED");
}
