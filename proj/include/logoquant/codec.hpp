#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "logoquant/common.hpp"
#include "logoquant/dod.hpp"
#include "logoquant/embedding.hpp"
#include "logoquant/pq.hpp"
#include "logoquant/vocab.hpp"

namespace logoquant {

// Figure-2 scheme: dimension 1 is '@', dimension 2 is '$', then onwards.
inline const std::string& prefix_alphabet() {
    static const std::string a = "@$&#%=+~";
    return a;
}

constexpr const char* kCodebookFormatVersion = "lqc-1";
constexpr const char* kCorpusHeaderTag = "#lqc";
constexpr const char* kUnkToken = "⟨UNK⟩";

/// Checksum / content-integrity failure (CLI exit code 3).
class IntegrityError : public Error {
public:
    explicit IntegrityError(const std::string& msg) : Error(msg) {}
};

struct SymbolTable {
    std::string prefixes;                 // m characters
    std::vector<std::string> words;       // index = vocabulary word index
    std::vector<CodeTuple> word_to_tuple;
    std::vector<double> frequencies;
    std::unordered_map<std::string, std::size_t> word_index;
    std::unordered_map<CodeTuple, std::size_t, TupleHash> tuple_to_word;  // unique preimages only
    std::string checksum;  // content checksum shared with the codebook file

    std::size_t size() const { return words.size(); }
};

namespace detail {

inline std::string double_to_string(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double string_to_double(const std::string& s) {
    double v;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw Error("bad numeric field '" + s + "'");
    return v;
}

inline bool all_digits(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    return true;
}

}  // namespace detail

/// A token collides with the symbol scheme (or the escape marker) and must
/// be escaped before entering an encoded stream.
inline bool needs_escape(const std::string& tok) {
    if (tok.empty()) return false;
    if (tok[0] == '\\') return true;
    if (prefix_alphabet().find(tok[0]) == std::string::npos) return false;
    return detail::all_digits(std::string_view(tok).substr(1));
}

inline std::string escape_token(const std::string& tok) {
    return needs_escape(tok) ? "\\" + tok : tok;
}

inline std::string unescape_token(const std::string& tok) {
    return !tok.empty() && tok[0] == '\\' ? tok.substr(1) : tok;
}

inline std::vector<std::string> format_symbols(const CodeTuple& t, const std::string& prefixes) {
    if (prefixes.size() < t.indices.size())
        throw Error("not enough prefix characters for tuple arity");
    std::vector<std::string> out;
    out.reserve(t.indices.size());
    for (std::size_t i = 0; i < t.indices.size(); ++i)
        out.push_back(prefixes[i] + std::to_string(t.indices[i]));
    return out;
}

enum class SymbolErrorKind { None, WrongArity, WrongPrefixOrder, NonNumericPayload, OutOfRangeIndex };

struct ParseResult {
    SymbolErrorKind error = SymbolErrorKind::None;
    std::size_t position = 0;  // index of the offending token
    std::string message;
    CodeTuple tuple;

    bool ok() const { return error == SymbolErrorKind::None; }
};

inline ParseResult parse_symbols(const std::vector<std::string>& tokens,
                                 const std::string& prefixes,
                                 const std::vector<std::size_t>& ks) {
    const std::size_t m = ks.size();
    ParseResult res;
    if (tokens.size() != m) {
        res.error = SymbolErrorKind::WrongArity;
        res.position = tokens.size() < m ? (tokens.empty() ? 0 : tokens.size() - 1) : m;
        res.message = "expected " + std::to_string(m) + " symbols, got " +
                      std::to_string(tokens.size());
        return res;
    }
    res.tuple.indices.resize(m);
    for (std::size_t d = 0; d < m; ++d) {
        const std::string& tok = tokens[d];
        if (tok.empty() || tok[0] != prefixes[d]) {
            res.error = SymbolErrorKind::WrongPrefixOrder;
            res.position = d;
            res.message = "expected prefix '" + std::string(1, prefixes[d]) + "' at dimension " +
                          std::to_string(d + 1) + ", got '" + tok + "'";
            return res;
        }
        std::string_view payload = std::string_view(tok).substr(1);
        if (!detail::all_digits(payload)) {
            res.error = SymbolErrorKind::NonNumericPayload;
            res.position = d;
            res.message = "non-numeric symbol payload in '" + tok + "'";
            return res;
        }
        std::uint32_t idx = 0;
        auto pr = std::from_chars(payload.data(), payload.data() + payload.size(), idx);
        if (pr.ec != std::errc()) {
            res.error = SymbolErrorKind::NonNumericPayload;
            res.position = d;
            res.message = "symbol payload overflows in '" + tok + "'";
            return res;
        }
        if (idx >= ks[d]) {
            res.error = SymbolErrorKind::OutOfRangeIndex;
            res.position = d;
            res.message = "index " + std::to_string(idx) + " out of range for subspace " +
                          std::to_string(d + 1) + " (k=" + std::to_string(ks[d]) + ")";
            res.tuple.indices[d] = idx;  // kept so recovery can clamp
            return res;
        }
        res.tuple.indices[d] = idx;
    }
    return res;
}

inline SymbolTable build_symbol_table(const Vocabulary& v, const Codebook& cb,
                                      const EmbeddingMatrix& X);

inline std::vector<std::string> encode_lines(const std::vector<std::string>& lines,
                                             const SymbolTable& table, double f_ct) {
    std::vector<std::string> out;
    out.reserve(lines.size());
    for (const auto& line : lines) {
        std::string enc;
        for (const auto& tok : split_tokens(line)) {
            auto it = table.word_index.find(tok);
            if (it == table.word_index.end())
                throw Error("corpus word '" + tok + "' has no embedding row / table entry");
            if (!enc.empty()) enc += ' ';
            if (classify_frequency(table.frequencies[it->second], f_ct) == WordClass::Frequent) {
                enc += escape_token(tok);
            } else {
                auto syms = format_symbols(table.word_to_tuple[it->second], table.prefixes);
                for (std::size_t i = 0; i < syms.size(); ++i) {
                    if (i) enc += ' ';
                    enc += syms[i];
                }
            }
        }
        out.push_back(std::move(enc));
    }
    return out;
}

enum class TokenFlag { Raw, Exact, Recovered, Failed };
enum class RecoverySpace { Codewords, Embeddings };

struct DecodeOptions {
    bool lenient = false;
    RecoverySpace space = RecoverySpace::Codewords;
    const EmbeddingMatrix* embeddings = nullptr;  // required for Embeddings mode
};

struct DecodeError : Error {
    SymbolErrorKind kind;
    std::size_t position;
    DecodeError(SymbolErrorKind k, std::size_t pos, const std::string& msg)
        : Error("decode error at token " + std::to_string(pos) + ": " + msg),
          kind(k),
          position(pos) {}
};

struct DecodeResult {
    std::vector<std::string> words;
    std::vector<TokenFlag> flags;
};

namespace detail {

/// Per-word reference vectors the recovery search runs against.
class RecoveryIndex {
public:
    RecoveryIndex(const SymbolTable& table, const Codebook& cb, const DecodeOptions& opts)
        : table_(table), cb_(cb) {
        const std::size_t W = table.size();
        dim_ = cb.dim();
        refs_.resize(W * dim_);
        if (opts.space == RecoverySpace::Embeddings) {
            if (!opts.embeddings || opts.embeddings->rows != W || opts.embeddings->dim != dim_)
                throw Error("embedding-space recovery needs a matching embedding matrix");
            std::copy(opts.embeddings->data.begin(), opts.embeddings->data.end(), refs_.begin());
        } else {
            for (std::size_t w = 0; w < W; ++w) {
                auto rec = reconstruct(cb_, table.word_to_tuple[w]);
                std::copy(rec.begin(), rec.end(), refs_.begin() + static_cast<std::ptrdiff_t>(w * dim_));
            }
        }
    }

    /// Nearest vocabulary word to the tuple's reconstruction; ties prefer
    /// higher frequency, then the lexicographically smaller word.
    std::size_t nearest_word(const CodeTuple& t) const {
        auto target = reconstruct(cb_, t);
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t w = 0; w < table_.size(); ++w) {
            double dist = sqdist(target.data(), refs_.data() + w * dim_, dim_);
            if (dist < best) {
                best = dist;
                arg = w;
            } else if (dist == best) {
                if (table_.frequencies[w] > table_.frequencies[arg] ||
                    (table_.frequencies[w] == table_.frequencies[arg] &&
                     table_.words[w] < table_.words[arg]))
                    arg = w;
            }
        }
        return arg;
    }

private:
    const SymbolTable& table_;
    const Codebook& cb_;
    std::size_t dim_ = 0;
    std::vector<double> refs_;
};

}  // namespace detail

inline DecodeResult decode_tokens(const std::vector<std::string>& tokens,
                                  const SymbolTable& table, const Codebook& cb,
                                  const DecodeOptions& opts = {},
                                  const detail::RecoveryIndex* shared_index = nullptr) {
    const std::size_t m = cb.partition.m;
    const auto ks = cb.ks();
    const std::string& alpha = prefix_alphabet();
    std::unique_ptr<detail::RecoveryIndex> local;
    if (!shared_index) local = std::make_unique<detail::RecoveryIndex>(table, cb, opts);
    const detail::RecoveryIndex& index = shared_index ? *shared_index : *local;

    DecodeResult res;
    auto fail = [&](SymbolErrorKind kind, std::size_t pos, const std::string& msg) {
        if (!opts.lenient) throw DecodeError(kind, pos, msg);
        res.words.push_back(kUnkToken);
        res.flags.push_back(TokenFlag::Failed);
    };

    auto is_symbol = [&](const std::string& tok) {
        return !tok.empty() && alpha.find(tok[0]) != std::string::npos &&
               detail::all_digits(std::string_view(tok).substr(1));
    };

    std::size_t i = 0;
    const std::size_t n = tokens.size();
    while (i < n) {
        const std::string& tok = tokens[i];
        if (!tok.empty() && tok[0] == '\\') {
            res.words.push_back(unescape_token(tok));
            res.flags.push_back(TokenFlag::Raw);
            ++i;
            continue;
        }
        if (!is_symbol(tok)) {
            res.words.push_back(tok);
            res.flags.push_back(TokenFlag::Raw);
            ++i;
            continue;
        }
        if (tok[0] != table.prefixes[0]) {
            fail(SymbolErrorKind::WrongPrefixOrder, i,
                 "symbol '" + tok + "' outside a dimension-ordered group");
            ++i;
            continue;
        }
        if (i + m > n) {
            fail(SymbolErrorKind::WrongArity, n - 1,
                 "incomplete symbol group at end of stream (needs " + std::to_string(m) +
                     " symbols)");
            i = n;
            continue;
        }
        std::vector<std::string> group(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                       tokens.begin() + static_cast<std::ptrdiff_t>(i + m));
        ParseResult pr = parse_symbols(group, table.prefixes, ks);
        if (pr.error == SymbolErrorKind::WrongPrefixOrder ||
            pr.error == SymbolErrorKind::NonNumericPayload) {
            fail(pr.error, i + pr.position, pr.message);
            i += pr.position + 1;
            continue;
        }
        bool clamped = false;
        if (pr.error == SymbolErrorKind::OutOfRangeIndex) {
            // re-parse leniently: substitute the nearest valid index per
            // subspace and route through the recovery path
            pr.tuple.indices.resize(m);
            for (std::size_t d = 0; d < m; ++d) {
                std::uint32_t idx = 0;
                std::string_view payload = std::string_view(group[d]).substr(1);
                std::from_chars(payload.data(), payload.data() + payload.size(), idx);
                if (idx >= ks[d]) {
                    idx = static_cast<std::uint32_t>(ks[d] - 1);
                    clamped = true;
                }
                pr.tuple.indices[d] = idx;
            }
        }
        auto hit = table.tuple_to_word.find(pr.tuple);
        if (!clamped && hit != table.tuple_to_word.end()) {
            res.words.push_back(table.words[hit->second]);
            res.flags.push_back(TokenFlag::Exact);
        } else {
            res.words.push_back(table.words[index.nearest_word(pr.tuple)]);
            res.flags.push_back(TokenFlag::Recovered);
        }
        i += m;
    }
    return res;
}

struct DecodeReport {
    std::size_t raw = 0, exact = 0, recovered = 0, failed = 0;
};

struct DecodedCorpus {
    std::vector<std::string> lines;
    DecodeReport report;
};

inline DecodedCorpus decode_lines(const std::vector<std::string>& lines, const SymbolTable& table,
                                  const Codebook& cb, const DecodeOptions& opts = {}) {
    DecodedCorpus out;
    std::size_t start = 0;
    if (!lines.empty() && lines.front().rfind(std::string(kCorpusHeaderTag) + " ", 0) == 0) {
        std::string sum = lines.front().substr(std::string(kCorpusHeaderTag).size() + 1);
        if (!table.checksum.empty() && sum != table.checksum)
            throw IntegrityError("encoded corpus was produced with a different codebook (checksum " +
                                 sum + " vs " + table.checksum + ")");
        start = 1;
    }
    detail::RecoveryIndex index(table, cb, opts);
    for (std::size_t li = start; li < lines.size(); ++li) {
        auto dr = decode_tokens(split_tokens(lines[li]), table, cb, opts, &index);
        std::string joined;
        for (std::size_t t = 0; t < dr.words.size(); ++t) {
            if (t) joined += ' ';
            joined += dr.words[t];
            switch (dr.flags[t]) {
                case TokenFlag::Raw: ++out.report.raw; break;
                case TokenFlag::Exact: ++out.report.exact; break;
                case TokenFlag::Recovered: ++out.report.recovered; break;
                case TokenFlag::Failed: ++out.report.failed; break;
            }
        }
        out.lines.push_back(std::move(joined));
    }
    return out;
}

// ---- persistence -----------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json codebook_document(const Codebook& cb, const SymbolTable& table) {
    nlohmann::ordered_json doc;
    doc["version"] = kCodebookFormatVersion;
    doc["m"] = cb.partition.m;
    doc["sub_dim"] = cb.partition.sub_dim;
    doc["prefixes"] = table.prefixes;
    doc["ks"] = cb.ks();
    doc["mode"] = cb.config.mode == SeedingMode::DAPQ ? "dapq" : "pq";
    doc["transform"] = cb.config.transform == DensityTransform::Log ? "log" : "raw";
    doc["bandwidth"] = double_to_string(cb.config.bandwidth);
    doc["seed"] = cb.config.seed;
    auto cents = nlohmann::ordered_json::array();
    for (const auto& sub : cb.centroids) {
        auto jsub = nlohmann::ordered_json::array();
        for (const auto& c : sub) {
            auto jc = nlohmann::ordered_json::array();
            for (double v : c) jc.push_back(double_to_string(v));
            jsub.push_back(std::move(jc));
        }
        cents.push_back(std::move(jsub));
    }
    doc["centroids"] = std::move(cents);
    doc["words"] = table.words;
    auto tuples = nlohmann::ordered_json::array();
    for (const auto& t : table.word_to_tuple) tuples.push_back(t.indices);
    doc["word_to_tuple"] = std::move(tuples);
    auto freqs = nlohmann::ordered_json::array();
    for (double f : table.frequencies) freqs.push_back(double_to_string(f));
    doc["frequencies"] = std::move(freqs);
    return doc;
}

inline void atomic_write(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write file: " + tmp);
        out << content;
        if (!out) throw Error("short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw Error("cannot move " + tmp + " into place");
}

}  // namespace detail

/// Checksum over the canonical serialization (everything but the checksum
/// field itself). Identical for the in-memory table and the saved file.
inline std::string codebook_checksum(const Codebook& cb, const SymbolTable& table) {
    return fnv1a64_hex(detail::codebook_document(cb, table).dump());
}

inline SymbolTable build_symbol_table(const Vocabulary& v, const Codebook& cb,
                                      const EmbeddingMatrix& X) {
    if (X.rows != v.size()) throw Error("embedding rows do not match vocabulary size");
    if (cb.partition.m > prefix_alphabet().size())
        throw Error("m > " + std::to_string(prefix_alphabet().size()) +
                    " exceeds the prefix alphabet");
    SymbolTable t;
    t.prefixes = prefix_alphabet().substr(0, cb.partition.m);
    t.words = v.words();
    t.word_to_tuple = quantize_all(cb, X);
    t.frequencies.resize(v.size());
    for (std::size_t w = 0; w < v.size(); ++w) {
        t.frequencies[w] = v.frequency(w);
        t.word_index.emplace(t.words[w], w);
    }
    // tuple -> word only where the preimage is unique
    std::unordered_map<CodeTuple, std::size_t, TupleHash> counts;
    for (const auto& tup : t.word_to_tuple) ++counts[tup];
    for (std::size_t w = 0; w < v.size(); ++w)
        if (counts[t.word_to_tuple[w]] == 1) t.tuple_to_word.emplace(t.word_to_tuple[w], w);
    t.checksum = codebook_checksum(cb, t);
    return t;
}

inline void save_codebook(const Codebook& cb, const SymbolTable& table, const std::string& path) {
    auto doc = detail::codebook_document(cb, table);
    std::string checksum = fnv1a64_hex(doc.dump());
    doc["checksum"] = checksum;
    detail::atomic_write(path, doc.dump(2) + "\n");
}

struct LoadedCodebook {
    Codebook codebook;
    SymbolTable table;
};

inline LoadedCodebook load_codebook(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open codebook file: " + path);
    nlohmann::ordered_json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw Error("truncated or malformed codebook file " + path + ": " + e.what());
    }
    if (!doc.contains("version") || !doc["version"].is_string())
        throw Error("codebook file missing version tag: " + path);
    if (doc["version"] != kCodebookFormatVersion)
        throw Error("unsupported codebook format version '" +
                    doc["version"].get<std::string>() + "' (expected " + kCodebookFormatVersion +
                    ")");
    if (!doc.contains("checksum")) throw Error("codebook file missing checksum: " + path);
    std::string stored = doc["checksum"].get<std::string>();
    doc.erase("checksum");
    std::string actual = fnv1a64_hex(doc.dump());
    if (stored != actual)
        throw IntegrityError("codebook checksum mismatch in " + path + " (stored " + stored +
                             ", actual " + actual + ")");

    LoadedCodebook out;
    Codebook& cb = out.codebook;
    cb.partition.m = doc["m"].get<std::size_t>();
    cb.partition.sub_dim = doc["sub_dim"].get<std::size_t>();
    cb.config.mode = doc["mode"] == "dapq" ? SeedingMode::DAPQ : SeedingMode::KMeansPP;
    cb.config.transform =
        doc["transform"] == "log" ? DensityTransform::Log : DensityTransform::Raw;
    cb.config.bandwidth = detail::string_to_double(doc["bandwidth"].get<std::string>());
    cb.config.seed = doc["seed"].get<std::uint64_t>();
    for (const auto& jsub : doc["centroids"]) {
        std::vector<std::vector<double>> sub;
        for (const auto& jc : jsub) {
            std::vector<double> c;
            for (const auto& s : jc) c.push_back(detail::string_to_double(s.get<std::string>()));
            if (c.size() != cb.partition.sub_dim)
                throw Error("centroid dimension mismatch in " + path);
            sub.push_back(std::move(c));
        }
        cb.centroids.push_back(std::move(sub));
    }
    if (cb.centroids.size() != cb.partition.m) throw Error("subspace count mismatch in " + path);

    SymbolTable& t = out.table;
    t.prefixes = doc["prefixes"].get<std::string>();
    t.words = doc["words"].get<std::vector<std::string>>();
    for (const auto& jt : doc["word_to_tuple"]) {
        CodeTuple tup;
        tup.indices = jt.get<std::vector<std::uint32_t>>();
        t.word_to_tuple.push_back(std::move(tup));
    }
    for (const auto& s : doc["frequencies"])
        t.frequencies.push_back(detail::string_to_double(s.get<std::string>()));
    if (t.words.size() != t.word_to_tuple.size() || t.words.size() != t.frequencies.size())
        throw Error("inconsistent table arrays in " + path);
    for (std::size_t w = 0; w < t.words.size(); ++w) t.word_index.emplace(t.words[w], w);
    std::unordered_map<CodeTuple, std::size_t, TupleHash> counts;
    for (const auto& tup : t.word_to_tuple) ++counts[tup];
    for (std::size_t w = 0; w < t.words.size(); ++w)
        if (counts[t.word_to_tuple[w]] == 1) t.tuple_to_word.emplace(t.word_to_tuple[w], w);
    t.checksum = actual;
    return out;
}

inline std::string corpus_header(const SymbolTable& table) {
    return std::string(kCorpusHeaderTag) + " " + table.checksum;
}

}  // namespace logoquant
