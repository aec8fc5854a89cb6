#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rclip/model_config.hpp"
#include "rclip/param_store.hpp"
#include "rclip/tape.hpp"
#include "rclip/tokenizer.hpp"

namespace rclip {

// Unfold [B,C,H,W] into flattened patches [B, n_patches, C*P*P]; patch rows
// are channel-major, raster order within a channel.
template <typename T>
Tensor<T> patchify(const Tensor<T>& images, const VitConfig& vc) {
    if (images.ndim() != 4 || images.dim(1) != vc.in_channels || images.dim(2) != vc.image_size ||
        images.dim(3) != vc.image_size)
        throw ShapeMismatch("patchify: expected [B," + std::to_string(vc.in_channels) + "," +
                            std::to_string(vc.image_size) + "," + std::to_string(vc.image_size) +
                            "], got " + images.shape_str());
    const int64_t bsz = images.dim(0);
    const int64_t g = vc.grid(), p = vc.patch, c = vc.in_channels, hw = vc.image_size;
    Tensor<T> out({bsz, g * g, c * p * p});
    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t gy = 0; gy < g; ++gy)
            for (int64_t gx = 0; gx < g; ++gx) {
                T* dst = out.ptr() + ((b * g * g) + gy * g + gx) * c * p * p;
                for (int64_t ch = 0; ch < c; ++ch)
                    for (int64_t py = 0; py < p; ++py)
                        for (int64_t px = 0; px < p; ++px)
                            dst[ch * p * p + py * p + px] =
                                images[((b * c + ch) * hw + gy * p + py) * hw + gx * p + px];
            }
    return out;
}

// Per-sample injection: rows of e [L,D] where m is set become e_action;
// everything else is copied through untouched.
template <typename T>
Tensor<T> inject_action(const Tensor<T>& e, const std::vector<uint8_t>& m,
                        const Tensor<T>& e_action) {
    if (e.ndim() != 2 || static_cast<int64_t>(m.size()) != e.dim(0) ||
        e_action.numel() != e.dim(1))
        throw ShapeMismatch("inject_action: e " + e.shape_str() + ", mask " +
                            std::to_string(m.size()) + ", action " + e_action.shape_str());
    Tensor<T> out = e;
    const int64_t d = e.dim(1);
    for (int64_t i = 0; i < e.dim(0); ++i)
        if (m[static_cast<size_t>(i)])
            std::copy(e_action.ptr(), e_action.ptr() + d, out.ptr() + i * d);
    return out;
}

// Frozen dual encoder plus the trainable adapter. All forward passes build on
// a Tape; only adapter parameters are registered as gradient-bearing leaves.
template <typename T>
class DualEncoderModel {
  public:
    using Var = typename Tape<T>::Var;

    ModelConfig cfg;
    ParamStore<T> params;

    static DualEncoderModel random_init(const ModelConfig& cfg) {
        cfg.validate();
        DualEncoderModel m;
        m.cfg = cfg;
        m.add_vit_params("image.", cfg.image, cfg.embed_dim, /*trainable=*/false);
        m.add_vit_params("adapter.", cfg.adapter, cfg.embed_dim, /*trainable=*/true);
        m.add_text_params();
        return m;
    }

    // Binds parameters into a tape once per forward pass.
    class Binder {
      public:
        Binder(Tape<T>& tape, const ParamStore<T>& params) : tape_(tape), params_(params) {}
        Var operator()(const std::string& name) {
            auto it = cache_.find(name);
            if (it != cache_.end()) return it->second;
            Var v = tape_.leaf(params_.at(name), params_.trainable(name));
            cache_.emplace(name, v);
            return v;
        }

      private:
        Tape<T>& tape_;
        const ParamStore<T>& params_;
        std::unordered_map<std::string, Var> cache_;
    };

    Var vit_forward(Tape<T>& t, Binder& bind, const std::string& prefix, const VitConfig& vc,
                    const Tensor<T>& images) const {
        Var x = t.linear(t.constant(patchify(images, vc)), bind(prefix + "patch_proj"));
        x = t.prepend_row(bind(prefix + "cls"), x);
        x = t.add_rows(x, bind(prefix + "pos"));
        x = t.layernorm(x, bind(prefix + "ln_pre.g"), bind(prefix + "ln_pre.b"));
        for (int i = 0; i < vc.layers; ++i)
            x = block_forward(t, bind, prefix + "blk" + std::to_string(i) + ".", x, vc.heads);
        Var cls = t.gather_rows(x, std::vector<int64_t>(static_cast<size_t>(images.dim(0)), 0));
        cls = t.layernorm(cls, bind(prefix + "ln_post.g"), bind(prefix + "ln_post.b"));
        return t.linear(cls, bind(prefix + "proj"));
    }

    // tokens [B,L] with L == context_len. The optional action embedding is
    // written into masked token positions before the transformer runs; when
    // absent, the injection op is skipped entirely (the plain-text path).
    Var text_forward(Tape<T>& t, Binder& bind, const Tensor<int32_t>& tokens,
                     const Tensor<T>* action_mask, std::optional<Var> action) const {
        if (tokens.ndim() != 2 || tokens.dim(1) != cfg.text.context_len)
            throw ShapeMismatch("text_forward: tokens must be [B," +
                                std::to_string(cfg.text.context_len) + "]");
        Var e = t.constant(embed_tokens(tokens));
        if (action.has_value()) {
            if (!action_mask) throw ShapeMismatch("text_forward: action without mask");
            e = t.inject(e, *action_mask, *action);
        }
        Var x = t.add_rows(e, bind("text.pos"));
        for (int i = 0; i < cfg.text.layers; ++i)
            x = block_forward(t, bind, "text.blk" + std::to_string(i) + ".", x, cfg.text.heads);
        x = t.layernorm(x, bind("text.ln_f.g"), bind("text.ln_f.b"));
        Var at_eos = t.gather_rows(x, eos_positions(tokens));
        return t.linear(at_eos, bind("text.proj"));
    }

    struct TripleVars {
        Var v1, v2, p, e_action;
    };

    TripleVars forward_triple(Tape<T>& t, Binder& bind, const Tensor<T>& images1,
                              const Tensor<T>& images2, const Tensor<int32_t>& tokens,
                              const Tensor<T>& action_mask) const {
        TripleVars out;
        out.v1 = vit_forward(t, bind, "image.", cfg.image, images1);
        out.v2 = vit_forward(t, bind, "image.", cfg.image, images2);
        Var a1 = vit_forward(t, bind, "adapter.", cfg.adapter, images1);
        Var a2 = vit_forward(t, bind, "adapter.", cfg.adapter, images2);
        out.e_action = t.mean2(a1, a2);
        out.p = text_forward(t, bind, tokens, &action_mask, out.e_action);
        return out;
    }

    // ---- convenience evaluations (fresh tape, values only) ----

    Tensor<T> encode_image(const Tensor<T>& images) const {
        Tape<T> t;
        Binder bind(t, params);
        return t.val(vit_forward(t, bind, "image.", cfg.image, images));
    }

    Tensor<T> adapter_embed(const Tensor<T>& images) const {
        Tape<T> t;
        Binder bind(t, params);
        return t.val(vit_forward(t, bind, "adapter.", cfg.adapter, images));
    }

    // Mean of the adapter outputs on the two frames.
    Tensor<T> action_embedding(const Tensor<T>& images1, const Tensor<T>& images2) const {
        Tape<T> t;
        Binder bind(t, params);
        Var a1 = vit_forward(t, bind, "adapter.", cfg.adapter, images1);
        Var a2 = vit_forward(t, bind, "adapter.", cfg.adapter, images2);
        return t.val(t.mean2(a1, a2));
    }

    Tensor<T> encode_prompt_with_action(const Tensor<int32_t>& tokens,
                                        const Tensor<T>& action_mask,
                                        const Tensor<T>& e_action) const {
        Tape<T> t;
        Binder bind(t, params);
        Var a = t.constant(e_action);
        return t.val(text_forward(t, bind, tokens, &action_mask, a));
    }

    Tensor<T> encode_prompt_plain(const Tensor<int32_t>& tokens) const {
        Tape<T> t;
        Binder bind(t, params);
        return t.val(text_forward(t, bind, tokens, nullptr, std::nullopt));
    }

    // Frozen-table token embedding lookup.
    Tensor<T> embed_tokens(const Tensor<int32_t>& tokens) const {
        const Tensor<T>& table = params.at("text.token_embed");
        const int64_t bsz = tokens.dim(0), l = tokens.dim(1), d = cfg.embed_dim;
        Tensor<T> out({bsz, l, d});
        for (int64_t b = 0; b < bsz; ++b)
            for (int64_t i = 0; i < l; ++i) {
                const int32_t id = tokens[b * l + i];
                if (id < 0 || id >= cfg.text.vocab) throw ShapeMismatch("token id out of range");
                std::copy(table.ptr() + static_cast<int64_t>(id) * d,
                          table.ptr() + static_cast<int64_t>(id + 1) * d,
                          out.ptr() + (b * l + i) * d);
            }
        return out;
    }

    std::vector<int64_t> eos_positions(const Tensor<int32_t>& tokens) const {
        const int64_t bsz = tokens.dim(0), l = tokens.dim(1);
        std::vector<int64_t> idx(static_cast<size_t>(bsz), l - 1);
        for (int64_t b = 0; b < bsz; ++b)
            for (int64_t i = 0; i < l; ++i)
                if (tokens[b * l + i] == Tokenizer::kEos) {
                    idx[static_cast<size_t>(b)] = i;
                    break;
                }
        return idx;
    }

  private:
    // Width-aware init (std = 1/sqrt(fan_in) for weights): random-init
    // encoders stand in for pretrained ones, and must keep distinct inputs
    // distinguishable in embedding space. Position/class vectors stay small
    // so the shared, input-independent part of the stream does not drown the
    // input-dependent part.
    void add_vit_params(const std::string& prefix, const VitConfig& vc, int out_dim,
                        bool trainable) {
        const uint64_t seed = cfg.init_seed;
        auto normal = [&](const std::string& name, std::vector<int64_t> shape, double stddev) {
            params.add(prefix + name, std::move(shape), trainable);
            params.init_normal(prefix + name, seed, stddev);
        };
        auto lnorm = [&](const std::string& name, int64_t n) {
            params.add(prefix + name + ".g", {n}, trainable).fill(T(1));
            params.add(prefix + name + ".b", {n}, trainable);
        };
        const int64_t w = vc.width;
        const double ws = 1.0 / std::sqrt(static_cast<double>(w));
        normal("patch_proj", {w, vc.patch_dim()},
               1.0 / std::sqrt(static_cast<double>(vc.patch_dim())));
        normal("cls", {w}, 0.02);
        normal("pos", {vc.tokens(), w}, 0.02);
        lnorm("ln_pre", w);
        for (int i = 0; i < vc.layers; ++i) {
            const std::string bp = "blk" + std::to_string(i) + ".";
            lnorm(bp + "ln1", w);
            normal(bp + "attn.w_qkv", {3 * w, w}, ws);
            params.add(prefix + bp + "attn.b_qkv", {3 * w}, trainable);
            normal(bp + "attn.w_out", {w, w}, ws);
            params.add(prefix + bp + "attn.b_out", {w}, trainable);
            lnorm(bp + "ln2", w);
            normal(bp + "mlp.w_fc", {4 * w, w}, ws);
            params.add(prefix + bp + "mlp.b_fc", {4 * w}, trainable);
            normal(bp + "mlp.w_proj", {w, 4 * w}, 0.5 * ws);
            params.add(prefix + bp + "mlp.b_proj", {w}, trainable);
        }
        lnorm("ln_post", w);
        normal("proj", {out_dim, w}, ws);
    }

    void add_text_params() {
        const uint64_t seed = cfg.init_seed;
        const int64_t d = cfg.embed_dim;
        const double ws = 1.0 / std::sqrt(static_cast<double>(d));
        auto normal = [&](const std::string& name, std::vector<int64_t> shape, double stddev) {
            params.add(name, std::move(shape), false);
            params.init_normal(name, seed, stddev);
        };
        auto lnorm = [&](const std::string& name, int64_t n) {
            params.add(name + ".g", {n}, false).fill(T(1));
            params.add(name + ".b", {n}, false);
        };
        normal("text.token_embed", {cfg.text.vocab, d}, ws);
        normal("text.pos", {cfg.text.context_len, d}, 0.02);
        for (int i = 0; i < cfg.text.layers; ++i) {
            const std::string bp = "text.blk" + std::to_string(i) + ".";
            lnorm(bp + "ln1", d);
            normal(bp + "attn.w_qkv", {3 * d, d}, ws);
            params.add(bp + "attn.b_qkv", {3 * d}, false);
            normal(bp + "attn.w_out", {d, d}, ws);
            params.add(bp + "attn.b_out", {d}, false);
            lnorm(bp + "ln2", d);
            normal(bp + "mlp.w_fc", {4 * d, d}, ws);
            params.add(bp + "mlp.b_fc", {4 * d}, false);
            normal(bp + "mlp.w_proj", {d, 4 * d}, 0.5 * ws);
            params.add(bp + "mlp.b_proj", {d}, false);
        }
        lnorm("text.ln_f", d);
        normal("text.proj", {d, d}, ws);
    }

    Var block_forward(Tape<T>& t, Binder& bind, const std::string& bp, Var x, int heads) const {
        Var h = t.layernorm(x, bind(bp + "ln1.g"), bind(bp + "ln1.b"));
        Var qkv = t.linear(h, bind(bp + "attn.w_qkv"), bind(bp + "attn.b_qkv"));
        Var a = t.attention(qkv, heads);
        a = t.linear(a, bind(bp + "attn.w_out"), bind(bp + "attn.b_out"));
        x = t.add(x, a);
        Var h2 = t.layernorm(x, bind(bp + "ln2.g"), bind(bp + "ln2.b"));
        Var f = t.linear(h2, bind(bp + "mlp.w_fc"), bind(bp + "mlp.b_fc"));
        f = t.quickgelu(f);
        f = t.linear(f, bind(bp + "mlp.w_proj"), bind(bp + "mlp.b_proj"));
        return t.add(x, f);
    }
};

}  // namespace rclip
