#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rclip {

// Whitespace + lexicon toy tokenizer: one token per word, out-of-vocabulary
// words fall into a fixed number of stable hash buckets. Not a faithful BPE
// tokenizer; a real one can be dropped in behind the same id contract.
class Tokenizer {
  public:
    static constexpr int32_t kPad = 0;
    static constexpr int32_t kBos = 1;
    static constexpr int32_t kEos = 2;

    static const Tokenizer& instance();

    int32_t vocab_size() const { return vocab_size_; }

    // Lowercases, splits on whitespace, strips surrounding punctuation.
    static std::vector<std::string> words(const std::string& text);

    int32_t word_id(const std::string& lowercase_word) const;

    // [BOS, word ids..., EOS]; no padding or truncation here.
    std::vector<int32_t> encode_words(const std::vector<std::string>& ws) const;
    std::vector<int32_t> encode(const std::string& text) const;

  private:
    Tokenizer();
    std::vector<std::string> id_to_word_;
    int32_t oov_base_ = 0;
    int32_t oov_buckets_ = 256;
    int32_t vocab_size_ = 0;
};

// Truncate (keeping the trailing EOS) or pad with kPad to exactly len.
std::vector<int32_t> fit_tokens(const std::vector<int32_t>& tokens, int len);
std::vector<uint8_t> fit_mask(const std::vector<uint8_t>& mask, size_t token_len, int len);

}  // namespace rclip
