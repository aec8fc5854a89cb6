#include "rclip/lexicon.hpp"

#include <unordered_set>

namespace rclip::lexicon {

namespace {

const std::vector<std::string> kVerbs = {
    "place",  "put",    "move",   "open",  "close",  "pick",   "push",    "pull",
    "slide",  "turn",   "grasp",  "lift",  "drop",   "rotate", "pour",    "switch",
    "take",   "hold",   "press",  "shake", "insert", "remove", "stack",   "flip",
    "fold",   "wipe",   "cut",    "squeeze", "twist", "plug",  "unplug",  "attach",
    "detach", "bring",  "carry",  "throw", "catch",  "tilt",   "spin",    "roll",
    "cover",  "uncover", "tear",  "bend",  "show",   "reach",  "release", "wave",
    "grab",   "raise",  "lower",  "shift", "drag",   "tip",    "knock",   "spread",
};

const std::vector<std::string> kAdjectives = {
    "red",    "orange", "yellow", "green",  "blue",   "purple",  "pink",  "brown",
    "black",  "white",  "gray",   "grey",   "cyan",   "magenta", "big",   "small",
    "large",  "little", "tiny",   "tall",   "short",  "long",    "round", "square",
    "wooden", "metal",  "plastic", "glass", "shiny",  "dark",    "bright", "empty",
    "full",   "new",    "old",    "clean",  "dirty",  "soft",    "hard",  "flat",
};

const std::vector<std::string> kStopwords = {
    "the",     "a",       "an",     "this",    "that",    "these",   "those",  "to",
    "of",      "on",      "in",     "at",      "with",    "from",    "into",   "onto",
    "over",    "under",   "up",     "down",    "next",    "near",    "by",     "behind",
    "beside",  "against", "towards", "toward", "through", "around",  "across", "along",
    "between", "off",     "out",    "inside",  "outside", "left",    "right",  "top",
    "bottom",  "front",   "back",   "middle",  "center",  "side",    "and",    "or",
    "then",    "it",      "its",    "is",      "are",     "be",      "being",  "something",
    "so",      "until",   "while",  "before",  "after",   "again",   "upside", "halfway",
    "slightly", "completely", "without", "onto", "away",  "together", "apart", "other",
};

const std::vector<std::string> kCommonNouns = {
    "block",  "ball",   "cube",   "ring",   "box",     "plate",  "mat",     "bin",
    "tray",   "table",  "towel",  "fork",   "spoon",   "knife",  "cup",     "mug",
    "bowl",   "bottle", "can",    "jar",    "lid",     "microwave", "oven", "stove",
    "cabinet", "drawer", "door",  "light",  "lamp",    "pot",    "pan",     "kettle",
    "sponge", "cloth",  "book",   "pen",    "pencil",  "toy",    "shape",   "target",
    "marker", "corner", "object", "thing",  "hand",    "robot",  "arm",     "disc",
};

const std::unordered_set<std::string>& verb_set() {
    static const std::unordered_set<std::string> s(kVerbs.begin(), kVerbs.end());
    return s;
}
const std::unordered_set<std::string>& adj_set() {
    static const std::unordered_set<std::string> s(kAdjectives.begin(), kAdjectives.end());
    return s;
}
const std::unordered_set<std::string>& stop_set() {
    static const std::unordered_set<std::string> s(kStopwords.begin(), kStopwords.end());
    return s;
}

}  // namespace

const std::vector<std::string>& verbs() { return kVerbs; }
const std::vector<std::string>& adjectives() { return kAdjectives; }
const std::vector<std::string>& stopwords() { return kStopwords; }
const std::vector<std::string>& common_nouns() { return kCommonNouns; }

bool is_verb(const std::string& w) { return verb_set().count(w) > 0; }
bool is_adjective(const std::string& w) { return adj_set().count(w) > 0; }
bool is_stopword(const std::string& w) { return stop_set().count(w) > 0; }

std::vector<std::string> stem_candidates(const std::string& w) {
    std::vector<std::string> out;
    out.push_back(w);
    const size_t n = w.size();
    auto push = [&out](std::string s) {
        if (!s.empty()) out.push_back(std::move(s));
    };
    if (n > 2 && w.ends_with("es")) push(w.substr(0, n - 2));
    if (n > 1 && w.ends_with("s")) push(w.substr(0, n - 1));
    if (n > 1 && w.ends_with("d")) push(w.substr(0, n - 1));
    if (n > 2 && w.ends_with("ed")) {
        std::string stem = w.substr(0, n - 2);
        push(stem);
        if (stem.size() >= 2 && stem[stem.size() - 1] == stem[stem.size() - 2])
            push(stem.substr(0, stem.size() - 1));  // dropped -> drop
        push(stem + "e");                           // removed handled by -d; kept for safety
    }
    if (n > 3 && w.ends_with("ing")) {
        std::string stem = w.substr(0, n - 3);
        push(stem);
        if (stem.size() >= 2 && stem[stem.size() - 1] == stem[stem.size() - 2])
            push(stem.substr(0, stem.size() - 1));  // putting -> put
        push(stem + "e");                           // moving -> move
    }
    return out;
}

std::optional<std::string> verb_stem(const std::string& w) {
    for (const std::string& c : stem_candidates(w))
        if (is_verb(c)) return c;
    return std::nullopt;
}

}  // namespace rclip::lexicon
