#include "rclip/model_config.hpp"

#include <json.hpp>

#include "rclip/errors.hpp"
#include "rclip/tokenizer.hpp"

namespace rclip {

using nlohmann::json;

namespace {

json vit_json(const VitConfig& v) {
    return json{{"image_size", v.image_size}, {"patch", v.patch},   {"width", v.width},
                {"layers", v.layers},         {"heads", v.heads},   {"in_channels", v.in_channels}};
}

VitConfig vit_from(const json& j) {
    VitConfig v;
    v.image_size = j.at("image_size");
    v.patch = j.at("patch");
    v.width = j.at("width");
    v.layers = j.at("layers");
    v.heads = j.at("heads");
    v.in_channels = j.at("in_channels");
    return v;
}

}  // namespace

std::string ModelConfig::to_json() const {
    json j{{"profile", profile},
           {"embed_dim", embed_dim},
           {"image", vit_json(image)},
           {"adapter", vit_json(adapter)},
           {"text",
            json{{"context_len", text.context_len},
                 {"vocab", text.vocab},
                 {"layers", text.layers},
                 {"heads", text.heads}}},
           {"init_seed", init_seed}};
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& s) {
    json j = json::parse(s);
    ModelConfig c;
    c.profile = j.at("profile");
    c.embed_dim = j.at("embed_dim");
    c.image = vit_from(j.at("image"));
    c.adapter = vit_from(j.at("adapter"));
    c.text.context_len = j.at("text").at("context_len");
    c.text.vocab = j.at("text").at("vocab");
    c.text.layers = j.at("text").at("layers");
    c.text.heads = j.at("text").at("heads");
    c.init_seed = j.at("init_seed");
    c.validate();
    return c;
}

void ModelConfig::validate() const {
    auto check_vit = [](const VitConfig& v, const char* which) {
        if (v.image_size <= 0 || v.patch <= 0 || v.image_size % v.patch != 0)
            throw Error(std::string(which) + ": image size must be a multiple of patch size");
        if (v.width % v.heads != 0)
            throw Error(std::string(which) + ": width must be divisible by heads");
    };
    check_vit(image, "image encoder");
    check_vit(adapter, "adapter");
    if (embed_dim % text.heads != 0) throw Error("text width must be divisible by heads");
    if (text.vocab <= 3) throw Error("vocab too small");
    if (text.context_len < 3) throw Error("context length too small");
}

ModelConfig toy_profile(uint64_t init_seed) {
    ModelConfig c;
    c.profile = "toy";
    c.embed_dim = 64;
    c.image = VitConfig{32, 8, 64, 2, 4, 4};
    c.adapter = VitConfig{32, 8, 64, 2, 4, 4};
    // short context: bidirectional attention has no padding mask, so idle PAD
    // positions dilute the injected action token
    c.text = TextConfig{8, Tokenizer::instance().vocab_size(), 2, 4};
    c.init_seed = init_seed;
    c.validate();
    return c;
}

ModelConfig paper_profile(uint64_t init_seed) {
    ModelConfig c;
    c.profile = "paper-shape";
    c.embed_dim = 512;
    c.image = VitConfig{224, 32, 768, 12, 12, 4};
    c.adapter = VitConfig{224, 32, 768, 12, 12, 4};
    c.text = TextConfig{77, Tokenizer::instance().vocab_size(), 12, 8};
    c.init_seed = init_seed;
    c.validate();
    return c;
}

ModelConfig profile_by_name(const std::string& name, uint64_t init_seed) {
    if (name == "toy") return toy_profile(init_seed);
    if (name == "paper-shape" || name == "paper") return paper_profile(init_seed);
    throw Error("unknown model profile: " + name);
}

}  // namespace rclip
