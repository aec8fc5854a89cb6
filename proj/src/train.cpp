#include "rclip/train.hpp"

#include <algorithm>
#include <set>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rclip/format.hpp"

namespace rclip {

namespace fs = std::filesystem;

// ---- config -------------------------------------------------------------------

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw Error("config: bad boolean for " + key + ": " + v);
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

}  // namespace

TrainConfig TrainConfig::parse_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw Error("config: line " + std::to_string(lineno) + " is not key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "seed")
            cfg.seed = std::stoull(val);
        else if (key == "epochs")
            cfg.epochs = std::stoi(val);
        else if (key == "max_steps")
            cfg.max_steps = std::stoi(val);
        else if (key == "batch_size")
            cfg.batch_size = std::stoi(val);
        else if (key == "lr")
            cfg.lr = std::stod(val);
        else if (key == "optimizer")
            cfg.optimizer = val;
        else if (key == "beta1")
            cfg.beta1 = std::stod(val);
        else if (key == "beta2")
            cfg.beta2 = std::stod(val);
        else if (key == "adam_eps")
            cfg.adam_eps = std::stod(val);
        else if (key == "lr_schedule")
            cfg.lr_schedule = val;
        else if (key == "tau")
            cfg.loss.tau = std::stod(val);
        else if (key == "margin")
            cfg.loss.margin = std::stod(val);
        else if (key == "lambda")
            cfg.loss.lambda = std::stod(val);
        else if (key == "symmetric_infonce")
            cfg.loss.symmetric_infonce = parse_bool(val, key);
        else if (key == "use_contrastive")
            cfg.loss.use_contrastive = parse_bool(val, key);
        else if (key == "use_triplet")
            cfg.loss.use_triplet = parse_bool(val, key);
        else if (key == "model_profile")
            cfg.model_profile = val;
        else if (key == "checkpoint_every")
            cfg.checkpoint_every = std::stoi(val);
        else if (key == "min_gap")
            cfg.min_gap = std::stoi(val);
        else if (key == "val_fraction")
            cfg.val_fraction = std::stod(val);
        else if (key == "split_salt")
            cfg.split_salt = val;
        else
            throw Error("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

TrainConfig TrainConfig::parse_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("config not found: " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_text(ss.str());
}

std::string TrainConfig::echo() const {
    std::ostringstream out;
    out << "seed = " << seed << "\n";
    out << "epochs = " << epochs << "\n";
    out << "max_steps = " << max_steps << "\n";
    out << "batch_size = " << batch_size << "\n";
    out << "lr = " << fmt_g6(lr) << "\n";
    out << "optimizer = " << optimizer << "\n";
    out << "beta1 = " << fmt_g6(beta1) << "\n";
    out << "beta2 = " << fmt_g6(beta2) << "\n";
    out << "adam_eps = " << fmt_g6(adam_eps) << "\n";
    out << "lr_schedule = " << lr_schedule << "\n";
    out << "tau = " << fmt_g6(loss.tau) << "\n";
    out << "margin = " << fmt_g6(loss.margin) << "\n";
    out << "lambda = " << fmt_g6(loss.lambda) << "\n";
    out << "symmetric_infonce = " << (loss.symmetric_infonce ? "true" : "false") << "\n";
    out << "use_contrastive = " << (loss.use_contrastive ? "true" : "false") << "\n";
    out << "use_triplet = " << (loss.use_triplet ? "true" : "false") << "\n";
    out << "model_profile = " << model_profile << "\n";
    out << "checkpoint_every = " << checkpoint_every << "\n";
    out << "min_gap = " << min_gap << "\n";
    out << "val_fraction = " << fmt_g6(val_fraction) << "\n";
    out << "split_salt = " << split_salt << "\n";
    return out.str();
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw Error("config: batch_size must be >= 1");
    if (batch_size == 1 && loss.use_contrastive)
        throw Error("config: batch_size 1 is only allowed with use_contrastive = false "
                    "(triplet-only debug mode)");
    if (lr < 0) throw Error("config: lr must be >= 0");
    if (loss.tau <= 0) throw Error("config: tau must be > 0");
    if (loss.margin < 0) throw Error("config: margin must be >= 0");
    if (loss.lambda < 0) throw Error("config: lambda must be >= 0");
    if (optimizer != "adam" && optimizer != "sgd")
        throw Error("config: optimizer must be adam or sgd");
    if (lr_schedule != "cosine" && lr_schedule != "constant")
        throw Error("config: lr_schedule must be cosine or constant");
    if (epochs < 0) throw Error("config: epochs must be >= 0");
    if (val_fraction < 0 || val_fraction >= 1)
        throw Error("config: val_fraction must be in [0,1)");
}

// ---- freeze verification --------------------------------------------------------

FreezeReport verify_freeze(const Checkpoint& before, const Checkpoint& after) {
    if (before.meta.model_config_json != after.meta.model_config_json)
        throw ProfileMismatch("checkpoints come from different model configs");
    FreezeReport rep;
    rep.steps_before = before.meta.step;
    rep.steps_after = after.meta.step;
    rep.encoders_match = true;
    rep.adapter_changed = false;
    for (const auto& b : before.blobs) {
        if (b.name.rfind("opt.", 0) == 0) continue;
        const NamedBlob* a = after.find(b.name);
        if (!a) throw ProfileMismatch("blob missing in second checkpoint: " + b.name);
        const bool equal = a->shape == b.shape && a->data.size() == b.data.size() &&
                           std::memcmp(a->data.data(), b.data.data(),
                                       b.data.size() * sizeof(float)) == 0;
        rep.blobs.push_back(FreezeBlobReport{b.name, equal});
        const bool is_adapter = b.name.rfind("adapter.", 0) == 0;
        if (is_adapter) {
            if (!equal) rep.adapter_changed = true;
        } else if (!equal) {
            rep.encoders_match = false;
        }
    }
    rep.pass = rep.encoders_match &&
               (rep.steps_after > rep.steps_before ? rep.adapter_changed : true);
    return rep;
}

// ---- trainer --------------------------------------------------------------------

Trainer::Trainer(const TrainConfig& cfg, Manifest manifest)
    : cfg_(cfg),
      manifest_(std::move(manifest)),
      model_(DualEncoderModel<float>::random_init(
          profile_by_name(cfg.model_profile, cfg.seed))) {
    cfg_.validate();

    const std::vector<size_t> all = manifest_.eligible();
    if (cfg_.val_fraction > 0) {
        SplitResult sp = split(manifest_, 1.0 - cfg_.val_fraction, cfg_.val_fraction,
                               cfg_.split_salt);
        std::set<std::string> train_set(sp.train_ids.begin(), sp.train_ids.end());
        for (size_t idx : all)
            if (train_set.count(manifest_.entries[idx].video_id)) pool_.push_back(idx);
    } else {
        pool_ = all;
    }
    if (static_cast<int>(pool_.size()) < cfg_.batch_size)
        throw NoRecords("need at least " + std::to_string(cfg_.batch_size) +
                        " eligible entries, have " + std::to_string(pool_.size()));

    steps_per_epoch_ = static_cast<int64_t>(pool_.size()) / cfg_.batch_size;
    total_steps_ = steps_per_epoch_ * cfg_.epochs;
    if (cfg_.max_steps > 0) total_steps_ = std::min<int64_t>(total_steps_, cfg_.max_steps);

    for (const auto& name : model_.params.trainable_names()) {
        adam_m_.emplace(name, Tensor<float>(model_.params.at(name).shape));
        adam_v_.emplace(name, Tensor<float>(model_.params.at(name).shape));
    }
}

Trainer Trainer::resume(const TrainConfig& cfg, Manifest manifest,
                        const fs::path& checkpoint_path) {
    Trainer t(cfg, std::move(manifest));
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    if (ckpt.meta.model_config_json != t.model_.cfg.to_json())
        throw ProfileMismatch("checkpoint model config differs from the configured profile");
    restore_params(t.model_.params, ckpt);
    for (auto& [name, m] : t.adam_m_) {
        if (const NamedBlob* b = ckpt.find("opt.m." + name)) m.data = b->data;
        if (const NamedBlob* b = ckpt.find("opt.v." + name)) t.adam_v_.at(name).data = b->data;
    }
    t.step_ = ckpt.meta.step;
    return t;
}

int Trainer::load_initial_weights(const fs::path& weights_path) {
    if (step_ != 0) throw Error("initial weights can only be loaded before training");
    return load_matching_params(model_.params, load_checkpoint(weights_path));
}

double Trainer::lr_at(uint64_t step) const {
    if (cfg_.lr_schedule == "constant" || total_steps_ <= 0) return cfg_.lr;
    const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps_));
    return cfg_.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
}

Trainer::StepResult Trainer::train_step(const Batch& batch) {
    Tape<float> tape;
    typename DualEncoderModel<float>::Binder bind(tape, model_.params);
    auto vars = model_.forward_triple(tape, bind, batch.images1, batch.images2, batch.tokens,
                                      batch.action_mask);

    const Tensor<float>& v1 = tape.val(vars.v1);
    const Tensor<float>& v2 = tape.val(vars.v2);
    const Tensor<float>& p = tape.val(vars.p);

    LossConfig lcfg = cfg_.loss;
    lcfg.batch_size = static_cast<int>(batch.video_ids.size());
    LossReport<float> report = loss_report(v1, v2, p, lcfg);
    if (!std::isfinite(report.total)) {
        std::string ids;
        for (const auto& id : batch.video_ids) ids += (ids.empty() ? "" : ",") + id;
        throw NonFiniteLoss("step " + std::to_string(step_ + 1) + ", batch [" + ids + "]");
    }

    LossGrads<float> grads = loss_gradients(v1, v2, p, lcfg);
    tape.backward(vars.p, grads.dp);

    std::map<std::string, Tensor<float>> param_grads;
    for (const auto& name : model_.params.trainable_names()) {
        typename Tape<float>::Var var = bind(name);
        const Tensor<float>& g = tape.grad(var);
        param_grads.emplace(name, g.numel() > 0 ? g : Tensor<float>(model_.params.at(name).shape));
    }

    const double lr = lr_at(step_);
    apply_update(param_grads, lr);
    ++step_;

    for (const auto& name : model_.params.trainable_names())
        if (!model_.params.at(name).all_finite())
            throw NonFiniteLoss("parameter " + name + " became non-finite at step " +
                                std::to_string(step_));

    return StepResult{std::move(report), lr, step_};
}

void Trainer::apply_update(const std::map<std::string, Tensor<float>>& grads, double lr) {
    const float flr = static_cast<float>(lr);
    if (cfg_.optimizer == "sgd") {
        for (const auto& [name, g] : grads) {
            Tensor<float>& p = model_.params.at(name);
            for (int64_t i = 0; i < p.numel(); ++i) p[i] -= flr * g[i];
        }
        return;
    }
    const float b1 = static_cast<float>(cfg_.beta1);
    const float b2 = static_cast<float>(cfg_.beta2);
    const float eps = static_cast<float>(cfg_.adam_eps);
    const double t = static_cast<double>(step_ + 1);
    const float bc1 = static_cast<float>(1.0 - std::pow(cfg_.beta1, t));
    const float bc2 = static_cast<float>(1.0 - std::pow(cfg_.beta2, t));
    for (const auto& [name, g] : grads) {
        Tensor<float>& p = model_.params.at(name);
        Tensor<float>& m = adam_m_.at(name);
        Tensor<float>& v = adam_v_.at(name);
        for (int64_t i = 0; i < p.numel(); ++i) {
            m[i] = b1 * m[i] + (1.f - b1) * g[i];
            v[i] = b2 * v[i] + (1.f - b2) * g[i] * g[i];
            const float mhat = m[i] / bc1;
            const float vhat = v[i] / bc2;
            p[i] -= flr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void Trainer::save(const fs::path& path) const {
    CheckpointMeta meta;
    meta.model_config_json = model_.cfg.to_json();
    meta.step = step_;
    meta.extras["train_config"] = cfg_.echo();
    std::vector<NamedBlob> blobs = blobs_from_params(model_.params);
    for (const auto& [name, m] : adam_m_) blobs.push_back(NamedBlob{"opt.m." + name, m.shape, m.data});
    for (const auto& [name, v] : adam_v_) blobs.push_back(NamedBlob{"opt.v." + name, v.shape, v.data});
    save_checkpoint(path, meta, blobs);
}

Trainer::RunResult Trainer::run(const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);

    RunResult res;
    res.metrics_log = out_dir / "metrics.jsonl";
    const bool fresh = step_ == 0;
    if (fresh) save(out_dir / "ckpt_init.rckpt");

    std::ofstream metrics(res.metrics_log, fresh ? std::ios::trunc : std::ios::app);
    if (!metrics) throw Error("cannot write metrics log " + res.metrics_log.string());

    BatchConfig bc;
    bc.context_len = model_.cfg.text.context_len;
    bc.image_size = model_.cfg.image.image_size;
    bc.min_gap = cfg_.min_gap;

    bool first_recorded = false;
    while (step_ < static_cast<uint64_t>(total_steps_)) {
        const int64_t epoch = static_cast<int64_t>(step_) / steps_per_epoch_;
        const int64_t bidx = static_cast<int64_t>(step_) % steps_per_epoch_;
        const auto batches = plan_epoch(pool_, cfg_.batch_size, cfg_.seed,
                                        static_cast<int>(epoch));
        Rng rng = batch_rng(cfg_.seed, static_cast<int>(epoch), static_cast<int>(bidx));
        const Batch batch = make_batch(manifest_, batches[static_cast<size_t>(bidx)], rng, bc);
        StepResult sr = train_step(batch);

        if (!first_recorded) {
            res.first_total = sr.report.total;
            first_recorded = true;
        }
        res.last_total = sr.report.total;

        metrics << "{\"step\":" << sr.step << ",\"epoch\":" << epoch
                << ",\"lr\":" << fmt_g6(sr.lr)
                << ",\"L_contrastive\":" << fmt_g6(sr.report.contrastive)
                << ",\"L_triplet\":" << fmt_g6(sr.report.triplet)
                << ",\"L_total\":" << fmt_g6(sr.report.total) << "}\n";

        if (cfg_.checkpoint_every > 0 && sr.step % static_cast<uint64_t>(cfg_.checkpoint_every) == 0) {
            char name[48];
            std::snprintf(name, sizeof(name), "ckpt_step%06llu.rckpt",
                          static_cast<unsigned long long>(sr.step));
            save(out_dir / name);
        }
    }
    metrics.close();

    res.final_checkpoint = out_dir / "ckpt_final.rckpt";
    save(res.final_checkpoint);
    res.steps = step_;
    return res;
}

}  // namespace rclip
