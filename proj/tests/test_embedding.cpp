#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "logoquant/embedding.hpp"
#include "logoquant/pq.hpp"

using namespace logoquant;

namespace {

std::string temp_file(const std::string& name, const std::string& content) {
    auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << content;
    return path;
}

Vocabulary zipf_vocab(std::size_t words) {
    // frequency roughly proportional to 1/rank
    std::vector<std::string> lines;
    std::string line;
    for (std::size_t w = 0; w < words; ++w) {
        std::size_t reps = std::max<std::size_t>(1, 2 * words / (w + 1));
        for (std::size_t r = 0; r < reps; ++r) {
            line += "w" + std::to_string(w) + " ";
            if (line.size() > 400) {
                lines.push_back(line);
                line.clear();
            }
        }
    }
    if (!line.empty()) lines.push_back(line);
    return ingest_corpus(lines);
}

}  // namespace

TEST_CASE("load_embeddings parses a small file") {
    auto path = temp_file("lq_emb_small.txt", "a 1.0 2.0\nb 3.0 4.0\n");
    auto v = ingest_corpus({"a b"});
    auto m = load_embeddings(path, v);
    REQUIRE(m.dim == 2);
    REQUIRE(m.rows == 2);
    REQUIRE(m.row(v.index_of("a"))[0] == 1.0);
    REQUIRE(m.row(v.index_of("b"))[1] == 4.0);
}

TEST_CASE("inconsistent dimensionality is an error") {
    auto path = temp_file("lq_emb_baddim.txt", "a 1 2 3 4 5\nb 1 2 3 4 5 6\n");
    auto v = ingest_corpus({"a b"});
    REQUIRE_THROWS_WITH(load_embeddings(path, v), Catch::Matchers::ContainsSubstring("expected 5"));
}

TEST_CASE("non-numeric component is an error") {
    auto path = temp_file("lq_emb_nan.txt", "a 1.0 oops\n");
    auto v = ingest_corpus({"a"});
    REQUIRE_THROWS_WITH(load_embeddings(path, v),
                        Catch::Matchers::ContainsSubstring("non-numeric"));
}

TEST_CASE("missing vocabulary word is named") {
    auto path = temp_file("lq_emb_missing.txt", "a 1 2\nb 3 4\n");
    auto v = ingest_corpus({"a b c"});
    REQUIRE_THROWS_WITH(load_embeddings(path, v), Catch::Matchers::ContainsSubstring("'c'"));
    // fallback policy fills the hole deterministically
    auto m = load_embeddings(path, v, MissingWordPolicy::Synthesize, 9);
    REQUIRE(m.rows == 3);
    REQUIRE(std::isfinite(m.row(v.index_of("c"))[0]));
}

TEST_CASE("save/load round-trip") {
    auto v = zipf_vocab(50);
    auto m = synthesize_embeddings(v, 6, 123);
    auto path = (std::filesystem::temp_directory_path() / "lq_emb_rt.txt").string();
    save_embeddings(m, v, path);
    auto m2 = load_embeddings(path, v);
    REQUIRE(m2.dim == m.dim);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        REQUIRE(m2.data[i] == Catch::Approx(m.data[i]).epsilon(1e-6));
}

TEST_CASE("gzip embeddings load transparently") {
    auto v = ingest_corpus({"a b"});
    auto path = (std::filesystem::temp_directory_path() / "lq_emb_gz.txt.gz").string();
    gzFile f = gzopen(path.c_str(), "wb");
    REQUIRE(f != nullptr);
    const char* content = "a 1.5 -2.5\nb 0.25 1e3\n";
    gzwrite(f, content, static_cast<unsigned>(std::strlen(content)));
    gzclose(f);
    auto m = load_embeddings(path, v);
    REQUIRE(m.row(0)[1] == -2.5);
    REQUIRE(m.row(1)[1] == 1000.0);
}

TEST_CASE("synthesize_embeddings is deterministic and finite") {
    auto v = zipf_vocab(1000);
    auto a = synthesize_embeddings(v, 6, 42);
    auto b = synthesize_embeddings(v, 6, 42);
    REQUIRE(a.data == b.data);
    REQUIRE(a.rows == 1000);
    REQUIRE(a.dim == 6);
    for (double x : a.data) REQUIRE(std::isfinite(x));
    auto c = synthesize_embeddings(v, 6, 43);
    REQUIRE(a.data != c.data);
}

TEST_CASE("frequent words land in denser regions") {
    auto v = zipf_vocab(800);
    auto m = synthesize_embeddings(v, 6, 7);

    // KDE over the full embedding space with a fixed bandwidth
    std::vector<double> flat = m.data;
    auto dens = kde_density(flat, 6, 1.0);

    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v.count(a) > v.count(b); });
    std::size_t decile = v.size() / 10;
    double top = 0.0, bottom = 0.0;
    for (std::size_t i = 0; i < decile; ++i) {
        top += dens[order[i]];
        bottom += dens[order[v.size() - 1 - i]];
    }
    REQUIRE(top / decile > bottom / decile);
}
