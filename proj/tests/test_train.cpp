#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "rclip/synth.hpp"
#include "rclip/train.hpp"

using namespace rclip;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    fs::path root;
    Manifest manifest;
};

const Fixture& fixture() {
    static Fixture fx = [] {
        Fixture f;
        f.root = fs::temp_directory_path() / "rclip_train_fixture";
        fs::remove_all(f.root);
        SynthConfig sc;
        sc.n_videos = 12;
        sc.frames_per_video = 5;
        sc.image_size = 32;
        sc.seed = 11;
        generate_synth_corpus(f.root, sc);
        PrepConfig pc;
        pc.segmenter = "stub-full";
        build_manifest(f.root, f.root / "manifest.jsonl", pc);
        f.manifest = Manifest::load(f.root / "manifest.jsonl");
        return f;
    }();
    return fx;
}

TrainConfig small_config(uint64_t seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.lr = 3e-3;
    cfg.model_profile = "toy";
    return cfg;
}

Batch fixture_batch(int batch_size, uint64_t seed) {
    const ModelConfig profile = toy_profile(0);
    BatchConfig bc;
    bc.context_len = profile.text.context_len;
    bc.image_size = profile.image.image_size;
    std::vector<size_t> idx;
    for (int i = 0; i < batch_size; ++i) idx.push_back(static_cast<size_t>(i));
    Rng rng(seed);
    return make_batch(fixture().manifest, idx, rng, bc);
}


}  // namespace

TEST_CASE("config parsing: round trip, comments, rejects unknown keys") {
    const std::string text =
        "# comment\n"
        "seed = 9\n"
        "epochs = 3\n"
        "batch_size = 4\n"
        "lr = 0.002   # trailing comment\n"
        "optimizer = sgd\n"
        "lr_schedule = constant\n"
        "tau = 0.05\n"
        "margin = 0.3\n"
        "lambda = 0.2\n"
        "use_triplet = false\n"
        "model_profile = toy\n";
    const TrainConfig cfg = TrainConfig::parse_text(text);
    CHECK(cfg.seed == 9);
    CHECK(cfg.epochs == 3);
    CHECK(cfg.optimizer == "sgd");
    CHECK(cfg.loss.tau == doctest::Approx(0.05));
    CHECK(cfg.loss.margin == doctest::Approx(0.3));
    CHECK(!cfg.loss.use_triplet);

    // canonical echo reparses to the same echo
    CHECK(TrainConfig::parse_text(cfg.echo()).echo() == cfg.echo());

    CHECK_THROWS_AS(TrainConfig::parse_text("bogus_key = 1\n"), Error);
    CHECK_THROWS_AS(TrainConfig::parse_text("seed 9\n"), Error);
    CHECK_THROWS_AS(TrainConfig::parse_text("use_triplet = maybe\n"), Error);
    CHECK_THROWS_AS(TrainConfig::parse_file("/nonexistent/rclip.cfg"), Error);

    // batch_size 1 is triplet-only debug mode
    CHECK_THROWS_AS(TrainConfig::parse_text("batch_size = 1\n"), Error);
    const TrainConfig dbg = TrainConfig::parse_text("batch_size = 1\nuse_contrastive = false\n");
    CHECK(dbg.batch_size == 1);
}

TEST_CASE("zero learning rate leaves parameters unchanged but reports the loss") {
    TrainConfig cfg = small_config(3);
    cfg.lr = 0.0;
    Trainer tr(cfg, fixture().manifest);

    std::vector<uint64_t> before;
    for (const auto& e : tr.model().params.entries()) before.push_back(tr.model().params.checksum(e.name));

    const auto res = tr.train_step(fixture_batch(4, 21));
    CHECK(res.report.total > 0.0);
    CHECK(res.step == 1);

    size_t i = 0;
    for (const auto& e : tr.model().params.entries())
        CHECK(tr.model().params.checksum(e.name) == before[i++]);
}

TEST_CASE("one step with nonzero gradient changes only the adapter") {
    TrainConfig cfg = small_config(4);
    Trainer tr(cfg, fixture().manifest);

    std::vector<std::pair<std::string, uint64_t>> before;
    for (const auto& e : tr.model().params.entries())
        before.emplace_back(e.name, tr.model().params.checksum(e.name));

    tr.train_step(fixture_batch(4, 22));

    bool adapter_changed = false;
    for (const auto& [name, sum] : before) {
        const uint64_t now = tr.model().params.checksum(name);
        if (name.rfind("adapter.", 0) == 0) {
            if (now != sum) adapter_changed = true;
        } else {
            CHECK(now == sum);  // encoders frozen
        }
    }
    CHECK(adapter_changed);
}

TEST_CASE("two steps on an identical batch descend in >= 19/20 seeded trials") {
    int descended = 0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        TrainConfig cfg = small_config(seed);
        cfg.lr = 3e-3;
        Trainer tr(cfg, fixture().manifest);
        const Batch batch = fixture_batch(4, 100 + seed);
        const auto r1 = tr.train_step(batch);
        const auto r2 = tr.train_step(batch);
        if (r2.report.total <= r1.report.total) ++descended;
    }
    INFO("descended in ", descended, "/20 trials");
    CHECK(descended >= 19);
}

TEST_CASE("non-finite inputs abort with the offending batch ids") {
    TrainConfig cfg = small_config(5);
    Trainer tr(cfg, fixture().manifest);
    Batch batch = fixture_batch(4, 23);
    batch.images1[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(tr.train_step(batch), NonFiniteLoss);
    try {
        tr.train_step(batch);
    } catch (const NonFiniteLoss& e) {
        CHECK(std::string(e.what()).find(batch.video_ids[0]) != std::string::npos);
    }
}

TEST_CASE("run + resume reproduces the uninterrupted trajectory exactly") {
    const fs::path out_full = fs::temp_directory_path() / "rclip_train_full";
    const fs::path out_resume = fs::temp_directory_path() / "rclip_train_resume";
    fs::remove_all(out_full);
    fs::remove_all(out_resume);

    // full run: 12 eligible / batch 4 -> 3 steps per epoch, 2 epochs = 6
    // steps, with a cadence checkpoint at step 3 to resume from
    TrainConfig cfg = small_config(7);
    cfg.checkpoint_every = 3;
    Trainer full(cfg, fixture().manifest);
    const auto full_res = full.run(out_full);
    CHECK(full_res.steps == 6);
    const fs::path mid = out_full / "ckpt_step000003.rckpt";
    REQUIRE(fs::exists(mid));

    Trainer resumed = Trainer::resume(cfg, fixture().manifest, mid);
    CHECK(resumed.step() == 3);
    const auto resumed_res = resumed.run(out_resume);
    CHECK(resumed_res.steps == 6);

    // loss trajectory: resumed metrics equal the tail of the full metrics
    std::vector<std::string> full_lines, resumed_lines;
    {
        std::ifstream f(full_res.metrics_log);
        std::string line;
        while (std::getline(f, line)) full_lines.push_back(line);
    }
    {
        std::ifstream f(resumed_res.metrics_log);
        std::string line;
        while (std::getline(f, line)) resumed_lines.push_back(line);
    }
    REQUIRE(full_lines.size() == 6);
    REQUIRE(resumed_lines.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(resumed_lines[i] == full_lines[i + 3]);

    // final parameter and optimizer blobs are bit-identical
    const Checkpoint a = load_checkpoint(full_res.final_checkpoint);
    const Checkpoint b = load_checkpoint(resumed_res.final_checkpoint);
    REQUIRE(a.blobs.size() == b.blobs.size());
    for (const auto& blob : a.blobs) {
        const NamedBlob* other = b.find(blob.name);
        REQUIRE(other != nullptr);
        CHECK(std::memcmp(blob.data.data(), other->data.data(),
                          blob.data.size() * sizeof(float)) == 0);
    }
    CHECK(a.meta.step == b.meta.step);
}

TEST_CASE("epochs = 0 emits only the init checkpoint") {
    const fs::path out = fs::temp_directory_path() / "rclip_train_zero";
    fs::remove_all(out);
    TrainConfig cfg = small_config(8);
    cfg.epochs = 0;
    Trainer tr(cfg, fixture().manifest);
    const auto res = tr.run(out);
    CHECK(res.steps == 0);
    CHECK(fs::exists(out / "ckpt_init.rckpt"));
    CHECK(fs::exists(out / "ckpt_final.rckpt"));
    const Checkpoint init = load_checkpoint(out / "ckpt_init.rckpt");
    const Checkpoint fin = load_checkpoint(out / "ckpt_final.rckpt");
    CHECK(init.meta.step == 0);
    CHECK(fin.meta.step == 0);
    const FreezeReport rep = verify_freeze(init, fin);
    CHECK(rep.pass);  // nothing ran, everything matches
    for (const auto& b : rep.blobs) CHECK(b.equal);
}

TEST_CASE("verify_freeze: init vs trained, tampered encoder, profile mismatch") {
    const fs::path out = fs::temp_directory_path() / "rclip_train_freeze";
    fs::remove_all(out);
    TrainConfig cfg = small_config(9);
    cfg.epochs = 1;
    Trainer tr(cfg, fixture().manifest);
    const auto res = tr.run(out);
    CHECK(res.steps == 3);

    const Checkpoint init = load_checkpoint(out / "ckpt_init.rckpt");
    const Checkpoint fin = load_checkpoint(res.final_checkpoint);

    const FreezeReport rep = verify_freeze(init, fin);
    CHECK(rep.encoders_match);
    CHECK(rep.adapter_changed);
    CHECK(rep.pass);
    for (const auto& b : rep.blobs)
        if (b.name.rfind("image.", 0) == 0 || b.name.rfind("text.", 0) == 0) CHECK(b.equal);

    // tamper with an encoder blob: must be flagged
    Checkpoint tampered = fin;
    for (auto& b : tampered.blobs)
        if (b.name == "image.cls") b.data[0] += 1.0f;
    const fs::path tampered_path = out / "tampered.rckpt";
    save_checkpoint(tampered_path, tampered.meta, tampered.blobs);
    const FreezeReport bad = verify_freeze(init, load_checkpoint(tampered_path));
    CHECK(!bad.encoders_match);
    CHECK(!bad.pass);

    // different init seed is a different profile
    TrainConfig other = small_config(999);
    other.epochs = 0;
    Trainer tr2(other, fixture().manifest);
    const fs::path out2 = fs::temp_directory_path() / "rclip_train_freeze2";
    fs::remove_all(out2);
    tr2.run(out2);
    const Checkpoint foreign = load_checkpoint(out2 / "ckpt_init.rckpt");
    CHECK_THROWS_AS(verify_freeze(init, foreign), ProfileMismatch);
}

TEST_CASE("cosine schedule starts at lr and decays toward zero") {
    TrainConfig cfg = small_config(10);
    cfg.epochs = 2;  // 6 total steps
    Trainer tr(cfg, fixture().manifest);
    CHECK(tr.lr_at(0) == doctest::Approx(cfg.lr));
    CHECK(tr.lr_at(3) < cfg.lr);
    CHECK(tr.lr_at(6) == doctest::Approx(0.0).epsilon(1e-9));

    TrainConfig flat = cfg;
    flat.lr_schedule = "constant";
    Trainer tr2(flat, fixture().manifest);
    CHECK(tr2.lr_at(5) == doctest::Approx(cfg.lr));
}

TEST_CASE("training requires enough eligible entries for one batch") {
    TrainConfig cfg = small_config(11);
    cfg.batch_size = 64;
    CHECK_THROWS_AS(Trainer(cfg, fixture().manifest), NoRecords);
}

TEST_CASE("initial-weights hook overwrites matching tensors before training") {
    const fs::path out = fs::temp_directory_path() / "rclip_train_weights";
    fs::remove_all(out);
    TrainConfig cfg = small_config(12);
    cfg.epochs = 0;
    Trainer donor(cfg, fixture().manifest);
    donor.run(out);

    TrainConfig cfg2 = small_config(777);  // different random init
    Trainer receiver(cfg2, fixture().manifest);
    CHECK(receiver.model().params.checksum("image.cls") !=
          donor.model().params.checksum("image.cls"));

    const int n = receiver.load_initial_weights(out / "ckpt_init.rckpt");
    CHECK(n == static_cast<int>(receiver.model().params.entries().size()));
    CHECK(receiver.model().params.checksum("image.cls") ==
          donor.model().params.checksum("image.cls"));
    CHECK(receiver.model().params.checksum("text.token_embed") ==
          donor.model().params.checksum("text.token_embed"));

    // only usable before any step
    receiver.train_step(fixture_batch(4, 50));
    CHECK_THROWS_AS(receiver.load_initial_weights(out / "ckpt_init.rckpt"), Error);
}
