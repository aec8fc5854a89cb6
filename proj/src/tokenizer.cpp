#include "rclip/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include "rclip/hash.hpp"
#include "rclip/lexicon.hpp"

namespace rclip {

namespace {

std::unordered_map<std::string, int32_t>& word_index() {
    static std::unordered_map<std::string, int32_t> idx;
    return idx;
}

}  // namespace

Tokenizer::Tokenizer() {
    id_to_word_ = {"<pad>", "<bos>", "<eos>"};
    auto add_all = [this](const std::vector<std::string>& ws) {
        for (const auto& w : ws) {
            if (word_index().count(w)) continue;
            word_index()[w] = static_cast<int32_t>(id_to_word_.size());
            id_to_word_.push_back(w);
        }
    };
    add_all(lexicon::verbs());
    add_all(lexicon::adjectives());
    add_all(lexicon::stopwords());
    add_all(lexicon::common_nouns());
    oov_base_ = static_cast<int32_t>(id_to_word_.size());
    vocab_size_ = oov_base_ + oov_buckets_;
}

const Tokenizer& Tokenizer::instance() {
    static Tokenizer tok;
    return tok;
}

std::vector<std::string> Tokenizer::words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&out, &cur]() {
        // strip surrounding punctuation
        size_t b = 0, e = cur.size();
        while (b < e && std::ispunct(static_cast<unsigned char>(cur[b]))) ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(cur[e - 1]))) --e;
        if (e > b) out.push_back(cur.substr(b, e - b));
        cur.clear();
    };
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            flush();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    flush();
    return out;
}

int32_t Tokenizer::word_id(const std::string& w) const {
    auto it = word_index().find(w);
    if (it != word_index().end()) return it->second;
    return oov_base_ + static_cast<int32_t>(fnv1a64(w) % static_cast<uint64_t>(oov_buckets_));
}

std::vector<int32_t> Tokenizer::encode_words(const std::vector<std::string>& ws) const {
    std::vector<int32_t> ids;
    ids.reserve(ws.size() + 2);
    ids.push_back(kBos);
    for (const auto& w : ws) ids.push_back(word_id(w));
    ids.push_back(kEos);
    return ids;
}

std::vector<int32_t> Tokenizer::encode(const std::string& text) const {
    return encode_words(words(text));
}

std::vector<int32_t> fit_tokens(const std::vector<int32_t>& tokens, int len) {
    std::vector<int32_t> out(static_cast<size_t>(len), Tokenizer::kPad);
    const size_t n = tokens.size();
    if (n <= static_cast<size_t>(len)) {
        std::copy(tokens.begin(), tokens.end(), out.begin());
    } else {
        std::copy(tokens.begin(), tokens.begin() + len - 1, out.begin());
        out[static_cast<size_t>(len) - 1] = Tokenizer::kEos;
    }
    return out;
}

std::vector<uint8_t> fit_mask(const std::vector<uint8_t>& mask, size_t token_len, int len) {
    std::vector<uint8_t> out(static_cast<size_t>(len), 0);
    const size_t n = std::min(mask.size(), token_len <= static_cast<size_t>(len)
                                               ? mask.size()
                                               : static_cast<size_t>(len) - 1);
    std::copy(mask.begin(), mask.begin() + static_cast<long>(n), out.begin());
    return out;
}

}  // namespace rclip
