#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "logoquant/pq.hpp"
#include "logoquant/vocab.hpp"

namespace logoquant {

/// Target DoD could not be reached (duplicate embedding rows cap |Q|).
class UnreachableTargetError : public Error {
public:
    explicit UnreachableTargetError(const std::string& msg) : Error(msg) {}
};

struct DodReport {
    std::size_t distinct_codewords = 0;  // |Q|
    std::size_t vocab_size = 0;          // |W|
    double b = 1.0;
    double value = 0.0;  // e^(b * (1 - |W|/|Q|))
};

inline double dod_value(std::size_t vocab_size, std::size_t distinct_codewords, double b) {
    return std::exp(b * (1.0 - static_cast<double>(vocab_size) /
                                   static_cast<double>(distinct_codewords)));
}

inline DodReport degree_of_distinctness(const Codebook& cb, const EmbeddingMatrix& X, double b) {
    std::unordered_set<CodeTuple, TupleHash> seen;
    for (std::size_t r = 0; r < X.rows; ++r) seen.insert(quantize(cb, X.row(r), X.dim));
    DodReport rep;
    rep.distinct_codewords = seen.size();
    rep.vocab_size = X.rows;
    rep.b = b;
    rep.value = dod_value(rep.vocab_size, rep.distinct_codewords, b);
    return rep;
}

enum class SearchStrategy { UniformK, PerSubspace };

struct SearchConfig {
    double target = 1.0;    // DoD objective
    std::size_t eta = 8;    // cluster-count increment per round
    double b = 1.0;         // Algorithm-as-written scale; Eq. 2 generalizes it
    std::size_t max_rounds = 1000;
    SearchStrategy strategy = SearchStrategy::UniformK;
};

struct FitTraceEntry {
    std::size_t round = 0;
    std::vector<std::size_t> ks;
    std::size_t distinct_codewords = 0;
    double dod = 0.0;
};

struct FitResult {
    Codebook codebook;
    DodReport report;
    std::vector<FitTraceEntry> trace;
};

inline std::string format_trace_line(const FitTraceEntry& e) {
    std::ostringstream os;
    os << '(' << e.round << ", [";
    for (std::size_t i = 0; i < e.ks.size(); ++i) os << (i ? " " : "") << e.ks[i];
    os << "], " << e.distinct_codewords << ", ";
    os.precision(17);
    os << e.dod << ')';
    return os.str();
}

/// Smallest integer k with k^m >= n.
inline std::size_t ceil_root(std::size_t n, std::size_t m) {
    if (n <= 1 || m == 0) return 1;
    auto pow_ge = [&](std::size_t k) {  // k^m >= n, overflow-safe
        std::size_t acc = 1;
        for (std::size_t i = 0; i < m; ++i) {
            if (k != 0 && acc > (n - 1) / k) return true;
            acc *= k;
        }
        return acc >= n;
    };
    auto k = static_cast<std::size_t>(
        std::floor(std::pow(static_cast<double>(n), 1.0 / static_cast<double>(m))));
    if (k < 1) k = 1;
    while (k > 1 && pow_ge(k - 1)) --k;
    while (!pow_ge(k)) ++k;
    return k;
}

/// Dictionary-entry reduction factor |W| / sum(k_i).
inline double vocab_reduction(std::size_t vocab_size, const std::vector<std::size_t>& ks) {
    std::size_t total = 0;
    for (auto k : ks) total += k;
    if (total == 0) throw Error("empty cluster-count list");
    return static_cast<double>(vocab_size) / static_cast<double>(total);
}

namespace detail {

inline std::vector<std::vector<std::size_t>> duplicate_row_groups(const EmbeddingMatrix& X) {
    std::unordered_map<std::string, std::vector<std::size_t>> by_bytes;
    for (std::size_t r = 0; r < X.rows; ++r)
        by_bytes[std::string(reinterpret_cast<const char*>(X.row(r)), X.dim * sizeof(double))]
            .push_back(r);
    std::map<std::size_t, std::vector<std::size_t>> ordered;  // by first member
    for (auto& [bytes, rows] : by_bytes)
        if (rows.size() > 1) ordered.emplace(rows.front(), rows);
    std::vector<std::vector<std::size_t>> groups;
    for (auto& [first, rows] : ordered) groups.push_back(rows);
    return groups;
}

[[noreturn]] inline void throw_unreachable(const EmbeddingMatrix& X, const Vocabulary* vocab,
                                           double target, double reached) {
    std::ostringstream os;
    os << "DoD target " << target << " unreachable (best " << reached
       << "): cluster counts hit the distinct-subvector ceiling";
    auto groups = duplicate_row_groups(X);
    if (!groups.empty()) {
        os << "; duplicate embedding rows:";
        std::size_t shown = 0;
        for (const auto& g : groups) {
            if (shown++ == 10) {
                os << " ... (+" << groups.size() - 10 << " more groups)";
                break;
            }
            os << " [";
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (i) os << ", ";
                if (vocab && g[i] < vocab->size()) os << vocab->word(g[i]);
                else os << "row " << g[i];
            }
            os << "]";
        }
    }
    throw UnreachableTargetError(os.str());
}

inline std::vector<std::size_t> distinct_subvector_counts(const EmbeddingMatrix& X,
                                                          const SubspacePartition& p) {
    std::vector<std::size_t> out(p.m);
    for (std::size_t i = 0; i < p.m; ++i)
        out[i] = count_distinct_points(subspace_points(X, p, i), p.sub_dim);
    return out;
}

constexpr std::uint64_t kFitStream = 0xf17;

}  // namespace detail

/// Uniform-k search: start at ceil(|X|^(1/m)), retrain all subspaces each
/// round, grow k by eta until DoD meets the target.
inline FitResult fit_uniform(const EmbeddingMatrix& X, std::size_t m, const SearchConfig& cfg,
                             const TrainConfig& base, const Vocabulary* vocab = nullptr) {
    SubspacePartition p(m, X.dim);
    auto caps = detail::distinct_subvector_counts(X, p);
    std::size_t k = ceil_root(X.rows, m);

    FitResult res;
    double reached = 0.0;
    for (std::size_t round = 0; round < cfg.max_rounds; ++round) {
        std::vector<std::size_t> ks(m);
        bool all_capped = true;
        for (std::size_t i = 0; i < m; ++i) {
            ks[i] = std::min(k, caps[i]);
            all_capped = all_capped && ks[i] == caps[i];
        }
        TrainConfig tc = base;
        tc.seed = derive_seed(base.seed, detail::kFitStream, round);
        Codebook cb = train(X, p, ks, tc);
        DodReport rep = degree_of_distinctness(cb, X, cfg.b);
        res.trace.push_back({round, ks, rep.distinct_codewords, rep.value});
        reached = std::max(reached, rep.value);
        if (rep.value >= cfg.target) {
            res.codebook = std::move(cb);
            res.report = rep;
            return res;
        }
        if (all_capped) detail::throw_unreachable(X, vocab, cfg.target, reached);
        k += cfg.eta;
    }
    throw UnreachableTargetError("DoD target not reached within max_rounds=" +
                                 std::to_string(cfg.max_rounds));
}

/// Coordinate-descent-style search: probe each subspace with k_i + eta
/// (others fixed), commit the probe with the largest DoD gain, repeat.
inline FitResult fit_per_subspace(const EmbeddingMatrix& X, std::size_t m,
                                  const SearchConfig& cfg, const TrainConfig& base,
                                  const Vocabulary* vocab = nullptr) {
    SubspacePartition p(m, X.dim);
    auto caps = detail::distinct_subvector_counts(X, p);
    std::size_t k0 = ceil_root(X.rows, m);

    std::vector<std::size_t> ks(m);
    for (std::size_t i = 0; i < m; ++i) ks[i] = std::min(k0, caps[i]);

    TrainConfig tc = base;
    tc.seed = derive_seed(base.seed, detail::kFitStream, 0);
    Codebook cb = train(X, p, ks, tc);
    DodReport rep = degree_of_distinctness(cb, X, cfg.b);

    FitResult res;
    res.trace.push_back({0, ks, rep.distinct_codewords, rep.value});
    double reached = rep.value;
    if (rep.value >= cfg.target) {
        res.codebook = std::move(cb);
        res.report = rep;
        return res;
    }

    for (std::size_t round = 1; round < cfg.max_rounds; ++round) {
        bool found = false;
        std::size_t best_i = 0, best_k = 0;
        double best_dod = -1.0;
        DodReport best_rep;
        std::vector<std::vector<double>> best_sub;
        for (std::size_t i = 0; i < m; ++i) {
            if (ks[i] >= caps[i]) continue;
            std::size_t k_new = std::min(ks[i] + cfg.eta, caps[i]);
            auto pts = subspace_points(X, p, i);
            auto sub = detail::train_subspace(pts, p.sub_dim, k_new, base,
                                          derive_seed(base.seed, round, i + 1));
            Codebook cand = cb;
            cand.centroids[i] = sub;
            DodReport r = degree_of_distinctness(cand, X, cfg.b);
            if (!found || r.value > best_dod) {  // ties keep the lowest i
                found = true;
                best_i = i;
                best_k = k_new;
                best_dod = r.value;
                best_rep = r;
                best_sub = std::move(sub);
            }
        }
        if (!found) detail::throw_unreachable(X, vocab, cfg.target, reached);
        ks[best_i] = best_k;
        cb.centroids[best_i] = std::move(best_sub);
        res.trace.push_back({round, ks, best_rep.distinct_codewords, best_rep.value});
        reached = std::max(reached, best_rep.value);
        if (best_rep.value >= cfg.target) {
            res.codebook = std::move(cb);
            res.report = best_rep;
            return res;
        }
    }
    throw UnreachableTargetError("DoD target not reached within max_rounds=" +
                                 std::to_string(cfg.max_rounds));
}

inline FitResult fit(const EmbeddingMatrix& X, std::size_t m, const SearchConfig& cfg,
                     const TrainConfig& base, const Vocabulary* vocab = nullptr) {
    return cfg.strategy == SearchStrategy::UniformK ? fit_uniform(X, m, cfg, base, vocab)
                                                    : fit_per_subspace(X, m, cfg, base, vocab);
}

}  // namespace logoquant
