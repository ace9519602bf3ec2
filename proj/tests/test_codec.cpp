#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "logoquant/codec.hpp"

using namespace logoquant;

namespace {

struct Fixture {
    std::vector<std::string> corpus;
    Vocabulary vocab;
    EmbeddingMatrix X;
    Codebook cb;
    SymbolTable table;
};

const Fixture& fixture() {
    static Fixture f = [] {
        Fixture fx;
        std::mt19937 gen(17);
        for (int s = 0; s < 120; ++s) {
            std::string line;
            int len = 3 + static_cast<int>(gen() % 8);
            for (int t = 0; t < len; ++t) {
                // zipf-ish draw over 80 words
                int w = static_cast<int>(80.0 * std::pow(static_cast<double>(gen()) / 4294967296.0, 2.0));
                if (t) line += ' ';
                line += "w" + std::to_string(w);
            }
            fx.corpus.push_back(line);
        }
        fx.vocab = ingest_corpus(fx.corpus);
        fx.X = synthesize_embeddings(fx.vocab, 6, 55);
        SearchConfig sc;
        sc.eta = 4;
        TrainConfig tc;
        tc.seed = 8;
        auto res = fit_uniform(fx.X, 3, sc, tc, &fx.vocab);
        fx.cb = std::move(res.codebook);
        fx.table = build_symbol_table(fx.vocab, fx.cb, fx.X);
        return fx;
    }();
    return f;
}

double avg_len(const std::vector<std::string>& lines) {
    auto s = corpus_stats(lines);
    return s.avg_sentence_length;
}

}  // namespace

TEST_CASE("format_symbols uses the @/$/& prefixes") {
    CodeTuple t{{25, 814, 778}};
    REQUIRE(format_symbols(t, "@$&") == std::vector<std::string>{"@25", "$814", "&778"});
    REQUIRE(format_symbols(CodeTuple{{7}}, "@") == std::vector<std::string>{"@7"});
}

TEST_CASE("parse/format round-trip over random tuples") {
    std::mt19937 gen(2);
    std::vector<std::size_t> ks = {900, 1000, 800};
    for (int i = 0; i < 1000; ++i) {
        CodeTuple t{{static_cast<std::uint32_t>(gen() % 900),
                     static_cast<std::uint32_t>(gen() % 1000),
                     static_cast<std::uint32_t>(gen() % 800)}};
        auto pr = parse_symbols(format_symbols(t, "@$&"), "@$&", ks);
        REQUIRE(pr.ok());
        REQUIRE(pr.tuple == t);
    }
}

TEST_CASE("parse_symbols structured errors") {
    std::vector<std::size_t> ks = {100, 1000, 1000};
    auto ok = parse_symbols({"@25", "$814", "&778"}, "@$&", ks);
    REQUIRE(ok.ok());
    REQUIRE(ok.tuple == CodeTuple{{25, 814, 778}});

    auto swapped = parse_symbols({"$814", "@25", "&778"}, "@$&", ks);
    REQUIRE(swapped.error == SymbolErrorKind::WrongPrefixOrder);
    REQUIRE(swapped.position == 0);

    auto short_group = parse_symbols({"@25", "$814"}, "@$&", ks);
    REQUIRE(short_group.error == SymbolErrorKind::WrongArity);

    auto garbage = parse_symbols({"@25", "$8x4", "&778"}, "@$&", ks);
    REQUIRE(garbage.error == SymbolErrorKind::NonNumericPayload);
    REQUIRE(garbage.position == 1);

    auto range = parse_symbols({"@100", "$814", "&778"}, "@$&", ks);
    REQUIRE(range.error == SymbolErrorKind::OutOfRangeIndex);
    REQUIRE(range.position == 0);
}

TEST_CASE("escaping is involutive and never parses as a symbol") {
    std::vector<std::string> collisions = {"@25", "$814", "&778", "#9", "%0", "=1", "+2", "~33",
                                           "\\anything", "\\@5"};
    for (const auto& tok : collisions) {
        REQUIRE(needs_escape(tok));
        auto esc = escape_token(tok);
        REQUIRE(unescape_token(esc) == tok);
        REQUIRE_FALSE(esc[0] != '\\');
    }
    for (const auto& tok : {"plain", "@word", "$", "a25", "25"}) {
        REQUIRE_FALSE(needs_escape(tok));
        REQUIRE(escape_token(tok) == tok);
    }
}

TEST_CASE("encode: f_ct=0 passes everything through") {
    const auto& fx = fixture();
    auto enc = encode_lines(fx.corpus, fx.table, 0.0);
    REQUIRE(enc == fx.corpus);
}

TEST_CASE("encode replaces infrequent words by m symbols") {
    const auto& fx = fixture();
    double f_ct = 0.01;
    auto enc = encode_lines(fx.corpus, fx.table, f_ct);
    for (std::size_t li = 0; li < fx.corpus.size(); ++li) {
        auto raw = split_tokens(fx.corpus[li]);
        std::size_t infrequent = 0;
        for (const auto& tok : raw)
            if (classify_word(fx.vocab, tok, f_ct) == WordClass::Infrequent) ++infrequent;
        auto enc_toks = split_tokens(enc[li]);
        REQUIRE(enc_toks.size() == raw.size() + 2 * infrequent);  // m-1 extra per decomposition
    }
}

TEST_CASE("encoded sentence length is monotone in f_ct") {
    const auto& fx = fixture();
    std::vector<double> grid = {0.0, 1e-4, 1e-3, 5e-3, 2e-2, 0.1,
                                std::numeric_limits<double>::infinity()};
    double prev = 0.0;
    for (double f : grid) {
        double len = avg_len(encode_lines(fx.corpus, fx.table, f));
        REQUIRE(len >= prev - 1e-12);
        prev = len;
    }
    double raw = avg_len(fx.corpus);
    REQUIRE(prev == 3.0 * raw);  // f_ct = inf decomposes every token
}

TEST_CASE("decode: exact round-trip at DoD=1 for any f_ct") {
    const auto& fx = fixture();
    for (double f : {0.0, 0.01, std::numeric_limits<double>::infinity()}) {
        auto enc = encode_lines(fx.corpus, fx.table, f);
        auto dec = decode_lines(enc, fx.table, fx.cb);
        REQUIRE(dec.lines == fx.corpus);
        REQUIRE(dec.report.recovered == 0);
        REQUIRE(dec.report.failed == 0);
    }
}

TEST_CASE("words share symbols in single dimensions while tuples stay distinct") {
    const auto& fx = fixture();
    bool shared_dim = false;
    for (std::size_t a = 0; a < fx.table.size() && !shared_dim; ++a)
        for (std::size_t b = a + 1; b < fx.table.size(); ++b) {
            const auto& ta = fx.table.word_to_tuple[a];
            const auto& tb = fx.table.word_to_tuple[b];
            REQUIRE_FALSE(ta == tb);  // DoD=1
            for (std::size_t d = 0; d < 3; ++d)
                if (ta.indices[d] == tb.indices[d]) shared_dim = true;
            if (shared_dim) break;
        }
    REQUIRE(shared_dim);
}

TEST_CASE("single-symbol corruption decodes to the exhaustive-scan result") {
    const auto& fx = fixture();
    std::mt19937 gen(4);
    auto ks = fx.cb.ks();
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t w = gen() % fx.table.size();
        CodeTuple t = fx.table.word_to_tuple[w];
        std::size_t dim = gen() % 3;
        if (ks[dim] < 2) continue;
        std::uint32_t original = t.indices[dim];
        do {
            t.indices[dim] = static_cast<std::uint32_t>(gen() % ks[dim]);
        } while (t.indices[dim] == original);

        auto res = decode_tokens(format_symbols(t, fx.table.prefixes), fx.table, fx.cb);
        REQUIRE(res.words.size() == 1);

        // independent oracle: scan every vocabulary codeword
        auto target = reconstruct(fx.cb, t);
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t cand = 0; cand < fx.table.size(); ++cand) {
            auto rec = reconstruct(fx.cb, fx.table.word_to_tuple[cand]);
            double dist = 0.0;
            for (std::size_t c = 0; c < 6; ++c) {
                double d = target[c] - rec[c];
                dist += d * d;
            }
            bool better = dist < best;
            bool tie = dist == best &&
                       (fx.table.frequencies[cand] > fx.table.frequencies[arg] ||
                        (fx.table.frequencies[cand] == fx.table.frequencies[arg] &&
                         fx.table.words[cand] < fx.table.words[arg]));
            if (better || tie) {
                best = dist;
                arg = cand;
            }
        }
        REQUIRE(res.words[0] == fx.table.words[arg]);
    }
}

TEST_CASE("decode stream errors") {
    const auto& fx = fixture();
    // dangling group at end of stream
    auto w0 = format_symbols(fx.table.word_to_tuple[0], fx.table.prefixes);
    std::vector<std::string> stream = {"w1", w0[0], w0[1]};
    try {
        decode_tokens(stream, fx.table, fx.cb);
        FAIL("expected DecodeError");
    } catch (const DecodeError& e) {
        REQUIRE(e.kind == SymbolErrorKind::WrongArity);
        REQUIRE(e.position == 2);
    }

    // permuted group is rejected, not reordered
    std::vector<std::string> permuted = {w0[1], w0[0], w0[2]};
    REQUIRE_THROWS_AS(decode_tokens(permuted, fx.table, fx.cb), DecodeError);

    // lenient mode substitutes the sentinel
    DecodeOptions opts;
    opts.lenient = true;
    auto res = decode_tokens(stream, fx.table, fx.cb, opts);
    REQUIRE(res.words.back() == kUnkToken);
    REQUIRE(res.flags.back() == TokenFlag::Failed);
}

TEST_CASE("out-of-range symbol index goes down the recovery path") {
    const auto& fx = fixture();
    CodeTuple t = fx.table.word_to_tuple[3];
    auto syms = format_symbols(t, fx.table.prefixes);
    syms[2] = std::string(1, fx.table.prefixes[2]) + "99999";
    auto res = decode_tokens(syms, fx.table, fx.cb);
    REQUIRE(res.words.size() == 1);
    REQUIRE(res.flags[0] == TokenFlag::Recovered);
}

TEST_CASE("embedding-space recovery mode works") {
    const auto& fx = fixture();
    DecodeOptions opts;
    opts.space = RecoverySpace::Embeddings;
    opts.embeddings = &fx.X;
    auto enc = encode_lines(fx.corpus, fx.table, std::numeric_limits<double>::infinity());
    auto dec = decode_lines(enc, fx.table, fx.cb, opts);
    REQUIRE(dec.lines == fx.corpus);
}

TEST_CASE("codebook persistence round-trip is bit-exact") {
    const auto& fx = fixture();
    auto dir = std::filesystem::temp_directory_path();
    auto path = (dir / "lq_cb.lqc.json").string();
    save_codebook(fx.cb, fx.table, path);

    auto loaded = load_codebook(path);
    REQUIRE(loaded.codebook.centroids == fx.cb.centroids);
    REQUIRE(loaded.table.words == fx.table.words);
    REQUIRE(loaded.table.word_to_tuple == fx.table.word_to_tuple);
    REQUIRE(loaded.table.checksum == fx.table.checksum);

    auto path2 = (dir / "lq_cb2.lqc.json").string();
    save_codebook(loaded.codebook, loaded.table, path2);
    std::ifstream a(path), b(path2);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    REQUIRE(sa == sb);
}

TEST_CASE("corrupted codebook file is rejected") {
    const auto& fx = fixture();
    auto dir = std::filesystem::temp_directory_path();
    auto path = (dir / "lq_cb_flip.lqc.json").string();
    save_codebook(fx.cb, fx.table, path);

    std::ifstream in(path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    auto pos = content.find("\"frequencies\"");
    pos = content.find('7', pos);
    if (pos == std::string::npos) pos = content.find('1', content.find("\"frequencies\""));
    content[pos] = content[pos] == '7' ? '8' : '2';
    std::ofstream(path, std::ios::trunc) << content;
    REQUIRE_THROWS_AS(load_codebook(path), IntegrityError);
}

TEST_CASE("future format versions are refused") {
    const auto& fx = fixture();
    auto dir = std::filesystem::temp_directory_path();
    auto path = (dir / "lq_cb_ver.lqc.json").string();
    save_codebook(fx.cb, fx.table, path);
    std::ifstream in(path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    auto pos = content.find("lqc-1");
    content.replace(pos, 5, "lqc-9");
    std::ofstream(path, std::ios::trunc) << content;
    REQUIRE_THROWS_WITH(load_codebook(path),
                        Catch::Matchers::ContainsSubstring("unsupported"));
}

TEST_CASE("truncated codebook file is rejected") {
    const auto& fx = fixture();
    auto dir = std::filesystem::temp_directory_path();
    auto path = (dir / "lq_cb_trunc.lqc.json").string();
    save_codebook(fx.cb, fx.table, path);
    std::ifstream in(path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream(path, std::ios::trunc) << content.substr(0, content.size() / 2);
    REQUIRE_THROWS_AS(load_codebook(path), Error);
}

TEST_CASE("encoded-corpus header ties the stream to its codebook") {
    const auto& fx = fixture();
    auto enc = encode_lines(fx.corpus, fx.table, 0.01);
    std::vector<std::string> with_header;
    with_header.push_back(corpus_header(fx.table));
    for (auto& l : enc) with_header.push_back(l);
    auto dec = decode_lines(with_header, fx.table, fx.cb);
    REQUIRE(dec.lines == fx.corpus);

    with_header[0] = std::string(kCorpusHeaderTag) + " deadbeefdeadbeef";
    REQUIRE_THROWS_AS(decode_lines(with_header, fx.table, fx.cb), IntegrityError);
}
