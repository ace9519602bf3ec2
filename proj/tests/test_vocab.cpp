#include <catch2/catch_amalgamated.hpp>

#include <limits>
#include <random>
#include <unordered_map>

#include "logoquant/vocab.hpp"

using namespace logoquant;

TEST_CASE("ingest_corpus counts tokens") {
    auto v = ingest_corpus({"a b a"});
    REQUIRE(v.size() == 2);
    REQUIRE(v.count("a") == 2);
    REQUIRE(v.count("b") == 1);
    REQUIRE(v.total_tokens() == 3);
    REQUIRE(v.frequency("a") == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("single-token corpus") {
    auto v = ingest_corpus({"x"});
    REQUIRE(v.size() == 1);
    REQUIRE(v.frequency("x") == 1.0);
}

TEST_CASE("empty corpus rejected") {
    REQUIRE_THROWS_AS(ingest_corpus({}), Error);
    REQUIRE_THROWS_AS(ingest_corpus({"", "   "}), Error);
}

TEST_CASE("frequencies sum to 1 on random corpus") {
    std::mt19937 gen(7);
    std::vector<std::string> lines;
    std::unordered_map<std::string, std::uint64_t> oracle;
    std::uint64_t total = 0;
    for (int s = 0; s < 1000; ++s) {
        std::string line;
        int len = 1 + static_cast<int>(gen() % 12);
        for (int t = 0; t < len; ++t) {
            std::string w = "w" + std::to_string(gen() % 300);
            ++oracle[w];
            ++total;
            if (t) line += ' ';
            line += w;
        }
        lines.push_back(line);
    }
    auto v = ingest_corpus(lines);
    // independent scan agrees
    REQUIRE(v.total_tokens() == total);
    for (const auto& [w, c] : oracle) REQUIRE(v.count(w) == c);
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) sum += v.frequency(i);
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("determinism and first-appearance indices") {
    std::vector<std::string> lines = {"c b a", "a c d"};
    auto v1 = ingest_corpus(lines);
    auto v2 = ingest_corpus(lines);
    REQUIRE(v1.index_of("c") == 0);
    REQUIRE(v1.index_of("b") == 1);
    REQUIRE(v1.index_of("a") == 2);
    REQUIRE(v1.index_of("d") == 3);
    REQUIRE(v1.words() == v2.words());
}

TEST_CASE("classify_word boundary rules") {
    auto v = ingest_corpus({"a a b c"});  // freq a=0.5, b=c=0.25
    REQUIRE(classify_word(v, "a", 0.1) == WordClass::Frequent);
    REQUIRE(classify_word(v, "a", 0.5) == WordClass::Infrequent);  // tie is infrequent
    REQUIRE(classify_word(v, "b", 0.0) == WordClass::Frequent);    // all freqs > 0
    double inf = std::numeric_limits<double>::infinity();
    REQUIRE(classify_word(v, "a", inf) == WordClass::Infrequent);
    REQUIRE_THROWS_AS(classify_word(v, "zzz", 0.1), Error);
}

TEST_CASE("raising f_ct never makes a word frequent") {
    auto v = ingest_corpus({"a a a b b c d d d d"});
    std::vector<double> grid = {0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0};
    for (std::size_t w = 0; w < v.size(); ++w) {
        bool was_infrequent = false;
        for (double f : grid) {
            bool infrequent = classify_word(v, v.word(w), f) == WordClass::Infrequent;
            if (was_infrequent) REQUIRE(infrequent);
            was_infrequent = infrequent;
        }
    }
}

TEST_CASE("corpus_stats basics") {
    auto s = corpus_stats({"a b", "a"});
    REQUIRE(s.distinct_token_count == 2);
    REQUIRE(s.sentence_count == 2);
    REQUIRE(s.avg_sentence_length == Catch::Approx(1.5));
}

TEST_CASE("hash lines are data, not comments") {
    auto v = ingest_corpus({"# not a comment"});
    REQUIRE(v.contains("#"));
    REQUIRE(v.contains("comment"));
}
