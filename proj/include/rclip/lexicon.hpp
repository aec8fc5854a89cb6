#pragma once

#include <optional>
#include <string>
#include <vector>

namespace rclip::lexicon {

// Word lists shared by the rule tagger and the toy tokenizer. Fixed: the
// tokenizer vocabulary (and thus token-table shapes) depends on them.
const std::vector<std::string>& verbs();
const std::vector<std::string>& adjectives();
const std::vector<std::string>& stopwords();
const std::vector<std::string>& common_nouns();

bool is_verb(const std::string& lowercase_word);
bool is_adjective(const std::string& lowercase_word);
bool is_stopword(const std::string& lowercase_word);

// Inflection candidates for a surface form, most specific first: the word
// itself, then -s/-es/-d/-ed/-ing strips including undoubling ("putting" ->
// "put") and e-restoration ("moving" -> "move").
std::vector<std::string> stem_candidates(const std::string& lowercase_word);

// Lexicon verb stem for a surface form, if any candidate is a known verb.
std::optional<std::string> verb_stem(const std::string& lowercase_word);

}  // namespace rclip::lexicon
