#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "logoquant/common.hpp"

namespace logoquant {

enum class WordClass { Frequent, Infrequent };

/// Word counts over a whitespace-tokenized corpus. Word indices are dense,
/// assigned in first-appearance order.
class Vocabulary {
public:
    Vocabulary() = default;

    std::size_t size() const { return words_.size(); }
    std::uint64_t total_tokens() const { return total_; }

    bool contains(const std::string& w) const { return index_.count(w) != 0; }

    std::size_t index_of(const std::string& w) const {
        auto it = index_.find(w);
        if (it == index_.end()) throw Error("unknown word: '" + w + "'");
        return it->second;
    }

    const std::string& word(std::size_t idx) const { return words_.at(idx); }
    std::uint64_t count(std::size_t idx) const { return counts_.at(idx); }
    std::uint64_t count(const std::string& w) const { return counts_[index_of(w)]; }

    double frequency(std::size_t idx) const {
        return static_cast<double>(counts_.at(idx)) / static_cast<double>(total_);
    }
    double frequency(const std::string& w) const { return frequency(index_of(w)); }

    const std::vector<std::string>& words() const { return words_; }

    void add_token(const std::string& w) {
        auto it = index_.find(w);
        if (it == index_.end()) {
            index_.emplace(w, words_.size());
            words_.push_back(w);
            counts_.push_back(1);
        } else {
            ++counts_[it->second];
        }
        ++total_;
    }

private:
    std::vector<std::string> words_;
    std::vector<std::uint64_t> counts_;
    std::unordered_map<std::string, std::size_t> index_;
    std::uint64_t total_ = 0;
};

inline std::vector<std::string> split_tokens(const std::string& line) {
    std::vector<std::string> toks;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) toks.push_back(line.substr(i, j - i));
        i = j;
    }
    return toks;
}

inline Vocabulary ingest_corpus(const std::vector<std::string>& lines) {
    Vocabulary v;
    for (const auto& line : lines) {
        for (auto& tok : split_tokens(line)) v.add_token(tok);
    }
    if (v.total_tokens() == 0) throw Error("empty corpus: no tokens found");
    return v;
}

/// Frequent iff frequency strictly exceeds the cutoff; a tie at exactly
/// f_ct counts as infrequent. f_ct = +inf decomposes everything.
inline WordClass classify_word(const Vocabulary& v, const std::string& w, double f_ct) {
    return v.frequency(w) > f_ct ? WordClass::Frequent : WordClass::Infrequent;
}

inline WordClass classify_frequency(double freq, double f_ct) {
    return freq > f_ct ? WordClass::Frequent : WordClass::Infrequent;
}

struct CorpusStats {
    std::size_t distinct_token_count = 0;
    std::size_t sentence_count = 0;
    std::uint64_t token_count = 0;
    double avg_sentence_length = 0.0;
};

inline CorpusStats corpus_stats(const std::vector<std::string>& lines) {
    CorpusStats s;
    std::unordered_map<std::string, int> seen;
    for (const auto& line : lines) {
        auto toks = split_tokens(line);
        ++s.sentence_count;
        s.token_count += toks.size();
        for (auto& t : toks) seen.emplace(std::move(t), 1);
    }
    s.distinct_token_count = seen.size();
    if (s.sentence_count > 0)
        s.avg_sentence_length =
            static_cast<double>(s.token_count) / static_cast<double>(s.sentence_count);
    return s;
}

}  // namespace logoquant
