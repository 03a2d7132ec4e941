#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sltk/corpus/manifest.hpp"
#include "sltk/error.hpp"
#include "sltk/text.hpp"

namespace sltk::corpus {

class Vocabulary {
  public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr int kNumSpecials = 4;

    Vocabulary() : Vocabulary(std::vector<std::string>{}, 1) {}

    // `words` in id order, without specials.
    Vocabulary(const std::vector<std::string> &words, int min_count) : min_count_(min_count) {
        words_ = {"<pad>", "<s>", "</s>", "<unk>"};
        for (int i = 0; i < kNumSpecials; ++i)
            ids_.emplace(words_[i], i);
        for (const std::string &w : words) {
            if (ids_.count(w))
                throw InputError("duplicate vocabulary entry '" + w + "'");
            ids_.emplace(w, static_cast<int>(words_.size()));
            words_.push_back(w);
        }
    }

    int size() const { return static_cast<int>(words_.size()); }
    int min_count() const { return min_count_; }
    bool contains(const std::string &w) const { return ids_.count(w) != 0; }

    int id(const std::string &w) const {
        auto it = ids_.find(w);
        return it == ids_.end() ? kUnk : it->second;
    }

    const std::string &word(int id) const { return words_.at(static_cast<std::size_t>(id)); }

    // Regular words only, in id order.
    std::vector<std::string> words() const { return {words_.begin() + kNumSpecials, words_.end()}; }

    std::vector<int> encode(const std::vector<std::string> &tokens) const {
        std::vector<int> out;
        out.reserve(tokens.size());
        for (const auto &t : tokens)
            out.push_back(id(t));
        return out;
    }

    // Stops at EOS; drops PAD/BOS.
    std::vector<std::string> decode(const std::vector<int> &ids) const {
        std::vector<std::string> out;
        for (int i : ids) {
            if (i == kEos)
                break;
            if (i == kPad || i == kBos)
                continue;
            out.push_back(word(i));
        }
        return out;
    }

    std::string to_tsv() const {
        std::string out;
        for (std::size_t i = 0; i < words_.size(); ++i)
            out += words_[i] + "\t" + std::to_string(i) + "\n";
        return out;
    }

    static Vocabulary from_tsv(std::istream &in) {
        std::vector<std::string> words;
        std::string line;
        std::size_t number = 0;
        while (std::getline(in, line)) {
            ++number;
            if (line.empty())
                continue;
            auto tab = line.rfind('\t');
            if (tab == std::string::npos)
                throw ParseError("expected word<TAB>id", number);
            std::string w = line.substr(0, tab);
            long id = 0;
            try {
                id = std::stol(line.substr(tab + 1));
            } catch (const std::exception &) {
                throw ParseError("bad id", number);
            }
            if (id != static_cast<long>(number - 1))
                throw ParseError("ids must be dense and in order", number);
            if (id >= kNumSpecials)
                words.push_back(std::move(w));
        }
        if (number < kNumSpecials)
            throw InputError("vocabulary file is missing the special tokens");
        return Vocabulary(words, 1);
    }

    void save(const std::string &path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw InputError("cannot write " + path);
        out << to_tsv();
    }

    static Vocabulary load(const std::string &path) {
        std::ifstream in(path);
        if (!in)
            throw InputError("cannot open vocabulary " + path);
        return from_tsv(in);
    }

  private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> ids_;
    int min_count_ = 1;
};

inline std::map<std::string, int> count_words(const std::vector<ClipRecord> &records) {
    std::map<std::string, int> counts;
    for (const ClipRecord &r : records)
        for (const std::string &t : text::tokenize(r.text))
            ++counts[t];
    return counts;
}

/// Keeps every token seen at least `min_count` times. Ids are assigned by
/// descending frequency, ties broken lexicographically.
inline Vocabulary build_vocab(const std::vector<ClipRecord> &records, int min_count) {
    std::vector<std::pair<std::string, int>> kept;
    for (const auto &[w, c] : count_words(records))
        if (c >= min_count)
            kept.emplace_back(w, c);
    std::stable_sort(kept.begin(), kept.end(), [](const auto &a, const auto &b) { return a.second > b.second; });
    std::vector<std::string> words;
    words.reserve(kept.size());
    for (auto &[w, c] : kept)
        words.push_back(w);
    return Vocabulary(words, min_count);
}

} // namespace sltk::corpus
