#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "logoquant/common.hpp"
#include "logoquant/vocab.hpp"

namespace logoquant {

/// Row-major |W| x n matrix; row index equals vocabulary word index.
struct EmbeddingMatrix {
    std::size_t dim = 0;
    std::size_t rows = 0;
    std::vector<double> data;  // rows * dim

    const double* row(std::size_t r) const { return data.data() + r * dim; }
    double* row(std::size_t r) { return data.data() + r * dim; }

    std::vector<double> row_vec(std::size_t r) const {
        return std::vector<double>(row(r), row(r) + dim);
    }
};

enum class MissingWordPolicy { HardError, Synthesize };

namespace detail {

inline bool parse_double(const std::string& s, double& out) {
    // strict parse: '.'-decimal and exponent forms only, full-token match
    const char* b = s.data();
    const char* e = b + s.size();
    auto res = std::from_chars(b, e, out);
    return res.ec == std::errc() && res.ptr == e && std::isfinite(out);
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::vector<std::string> lines;
    auto push = [&](std::string&& l) {
        if (!l.empty() && l.back() == '\r') l.pop_back();
        lines.push_back(std::move(l));
    };
    if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
        gzFile f = gzopen(path.c_str(), "rb");
        if (!f) throw Error("cannot open file: " + path);
        std::string buf;
        char chunk[1 << 16];
        int n;
        while ((n = gzread(f, chunk, sizeof(chunk))) > 0) buf.append(chunk, static_cast<std::size_t>(n));
        gzclose(f);
        std::string cur;
        for (char c : buf) {
            if (c == '\n') { push(std::move(cur)); cur.clear(); }
            else cur.push_back(c);
        }
        if (!cur.empty()) push(std::move(cur));
    } else {
        std::ifstream in(path);
        if (!in) throw Error("cannot open file: " + path);
        std::string l;
        while (std::getline(in, l)) push(std::move(l));
    }
    return lines;
}

}  // namespace detail

inline EmbeddingMatrix synthesize_embeddings(const Vocabulary& v, std::size_t n,
                                             std::uint64_t seed);

/// GloVe-style text loader: "word c1 ... cn" per line. Every vocabulary word
/// must be covered unless the policy falls back to synthetic rows.
inline EmbeddingMatrix load_embeddings(const std::string& path, const Vocabulary& v,
                                       MissingWordPolicy policy = MissingWordPolicy::HardError,
                                       std::uint64_t fallback_seed = 0) {
    auto lines = detail::read_lines(path);
    EmbeddingMatrix m;
    std::vector<char> have(v.size(), 0);
    std::size_t lineno = 0;
    for (const auto& line : lines) {
        ++lineno;
        auto toks = split_tokens(line);
        if (toks.empty()) continue;
        const std::string& word = toks[0];
        std::size_t n = toks.size() - 1;
        if (n == 0)
            throw Error("embedding line " + std::to_string(lineno) + ": no components");
        if (m.dim == 0) {
            m.dim = n;
            m.rows = v.size();
            m.data.assign(m.rows * m.dim, 0.0);
        } else if (n != m.dim) {
            throw Error("embedding line " + std::to_string(lineno) + ": expected " +
                        std::to_string(m.dim) + " components, got " + std::to_string(n));
        }
        if (!v.contains(word)) continue;  // extra words are fine
        std::size_t r = v.index_of(word);
        for (std::size_t i = 0; i < n; ++i) {
            double val;
            if (!detail::parse_double(toks[i + 1], val))
                throw Error("embedding line " + std::to_string(lineno) +
                            ": non-numeric component '" + toks[i + 1] + "'");
            m.row(r)[i] = val;
        }
        have[r] = 1;
    }
    if (m.dim == 0) throw Error("embedding file has no usable lines: " + path);

    std::vector<std::string> missing;
    for (std::size_t r = 0; r < v.size(); ++r)
        if (!have[r]) missing.push_back(v.word(r));
    if (!missing.empty()) {
        if (policy == MissingWordPolicy::HardError) {
            std::string msg = "words missing from embedding file:";
            std::size_t shown = std::min<std::size_t>(missing.size(), 10);
            for (std::size_t i = 0; i < shown; ++i) msg += " '" + missing[i] + "'";
            if (missing.size() > shown)
                msg += " (+" + std::to_string(missing.size() - shown) + " more)";
            throw Error(msg);
        }
        EmbeddingMatrix fill = synthesize_embeddings(v, m.dim, fallback_seed);
        for (std::size_t r = 0; r < v.size(); ++r)
            if (!have[r])
                std::copy(fill.row(r), fill.row(r) + m.dim, m.row(r));
    }
    return m;
}

inline void save_embeddings(const EmbeddingMatrix& m, const Vocabulary& v,
                            const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path);
    out.precision(17);
    for (std::size_t r = 0; r < m.rows; ++r) {
        out << v.word(r);
        for (std::size_t i = 0; i < m.dim; ++i) out << ' ' << m.row(r)[i];
        out << '\n';
    }
}

/// Deterministic synthetic embeddings: a Gaussian mixture with one tight
/// component per word. Component centers sit on distinct combinations of a
/// coarse per-block grid (blocks of two dimensions), and frequent words take
/// the central, fully surrounded combinations, so word frequency correlates
/// with local density the way real GloVe spaces behave. Keeping the centers
/// combinatorially distinct means a product quantizer can separate every
/// word with per-subspace cluster counts near |W|^(1/m) instead of the much
/// larger counts an unstructured cloud would force.
inline EmbeddingMatrix synthesize_embeddings(const Vocabulary& v, std::size_t n,
                                             std::uint64_t seed) {
    if (n < 1) throw Error("embedding dimension must be >= 1");
    const std::size_t W = v.size();
    EmbeddingMatrix m;
    m.dim = n;
    m.rows = W;
    m.data.resize(W * n);
    if (W == 0) return m;

    const double spacing = 3.0;

    // dimension blocks of 2 (a trailing block of 1 when n is odd)
    std::vector<std::size_t> block_dim;
    for (std::size_t left = n; left > 0;) {
        std::size_t d = left >= 2 ? 2 : 1;
        block_dim.push_back(d);
        left -= d;
    }
    const std::size_t B = block_dim.size();

    // smallest K with K^B >= W
    std::size_t K = 1;
    auto pow_ge = [&](std::size_t k) {
        std::size_t acc = 1;
        for (std::size_t i = 0; i < B; ++i) {
            if (k != 0 && acc > (W - 1) / k) return true;
            acc *= k;
        }
        return acc >= W;
    };
    while (!pow_ge(K)) ++K;

    // per block: K grid sites, ordered center-outward
    struct Site {
        double x[2];
        double cost;
    };
    std::vector<std::vector<Site>> sites(B);
    for (std::size_t b = 0; b < B; ++b) {
        std::vector<Site> all;
        if (block_dim[b] == 1) {
            for (std::size_t i = 0; i < K; ++i) {
                double x = (static_cast<double>(i) - static_cast<double>(K - 1) / 2.0) * spacing;
                all.push_back({{x, 0.0}, x * x});
            }
        } else {
            auto cols = static_cast<std::size_t>(
                std::ceil(std::sqrt(static_cast<double>(K))));
            std::size_t rows = (K + cols - 1) / cols;
            for (std::size_t rr = 0; rr < rows; ++rr)
                for (std::size_t cc = 0; cc < cols; ++cc) {
                    double x = (static_cast<double>(cc) -
                                static_cast<double>(cols - 1) / 2.0) * spacing;
                    double y = (static_cast<double>(rr) -
                                static_cast<double>(rows - 1) / 2.0) * spacing;
                    all.push_back({{x, y}, x * x + y * y});
                }
        }
        std::stable_sort(all.begin(), all.end(),
                         [](const Site& a, const Site& b2) { return a.cost < b2.cost; });
        all.resize(K);
        sites[b] = std::move(all);
    }

    // every site combination, cheapest (most central) first
    std::size_t combos = 1;
    for (std::size_t b = 0; b < B; ++b) combos *= K;
    std::vector<std::pair<double, std::size_t>> ordered(combos);
    for (std::size_t c = 0; c < combos; ++c) {
        double cost = 0.0;
        std::size_t rem = c;
        for (std::size_t b = 0; b < B; ++b) {
            cost += sites[b][rem % K].cost;
            rem /= K;
        }
        ordered[c] = {cost, c};
    }
    std::stable_sort(ordered.begin(), ordered.end());

    // frequency rank (0 = most frequent), ties by word index for determinism
    std::vector<std::size_t> order(W);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return v.count(a) > v.count(b);
    });
    std::vector<std::size_t> rank(W);
    for (std::size_t i = 0; i < W; ++i) rank[order[i]] = i;

    for (std::size_t r = 0; r < W; ++r) {
        double u = W > 1 ? static_cast<double>(rank[r]) / static_cast<double>(W - 1) : 0.0;
        double sigma = 0.2 + 0.1 * u;  // frequent words pack tighter
        std::size_t combo = ordered[rank[r]].second;
        Rng rng(derive_seed(seed, 0xe1, r));
        double* row = m.row(r);
        std::size_t off = 0;
        for (std::size_t b = 0; b < B; ++b) {
            const Site& s = sites[b][combo % K];
            combo /= K;
            for (std::size_t d = 0; d < block_dim[b]; ++d)
                row[off + d] = s.x[d] + sigma * normal01(rng);
            off += block_dim[b];
        }
    }
    return m;
}

}  // namespace logoquant
