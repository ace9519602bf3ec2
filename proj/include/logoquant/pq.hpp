#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "logoquant/common.hpp"
#include "logoquant/embedding.hpp"

namespace logoquant {

enum class SeedingMode { KMeansPP, DAPQ };
enum class DensityTransform { Raw, Log };

struct SubspacePartition {
    std::size_t m = 1;
    std::size_t sub_dim = 1;

    SubspacePartition() = default;
    SubspacePartition(std::size_t num_subspaces, std::size_t full_dim) {
        if (num_subspaces < 1) throw Error("number of subspaces must be >= 1");
        if (full_dim % num_subspaces != 0)
            throw Error("dimension " + std::to_string(full_dim) +
                        " not divisible by m=" + std::to_string(num_subspaces));
        m = num_subspaces;
        sub_dim = full_dim / num_subspaces;
    }
    std::size_t dim() const { return m * sub_dim; }
};

struct CodeTuple {
    std::vector<std::uint32_t> indices;

    bool operator==(const CodeTuple& o) const { return indices == o.indices; }
};

struct TupleHash {
    std::size_t operator()(const CodeTuple& t) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (auto i : t.indices) {
            h ^= i;
            h *= 0x100000001b3ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

struct TrainConfig {
    SeedingMode mode = SeedingMode::DAPQ;
    double bandwidth = 0.0;  // <= 0 means AUTO (Scott's rule)
    DensityTransform transform = DensityTransform::Raw;
    std::size_t max_iterations = 100;
    std::uint64_t seed = 42;
    unsigned threads = 1;  // 0 = hardware concurrency
};

struct Codebook {
    SubspacePartition partition;
    // centroids[i][j] is the j-th centroid of subspace i, sub_dim components
    std::vector<std::vector<std::vector<double>>> centroids;
    TrainConfig config;

    std::size_t k(std::size_t i) const { return centroids.at(i).size(); }
    std::vector<std::size_t> ks() const {
        std::vector<std::size_t> out;
        out.reserve(centroids.size());
        for (const auto& c : centroids) out.push_back(c.size());
        return out;
    }
    std::size_t dim() const { return partition.dim(); }
};

inline std::vector<std::vector<double>> split_subvectors(const std::vector<double>& x,
                                                         const SubspacePartition& p) {
    if (x.size() != p.dim())
        throw Error("vector length " + std::to_string(x.size()) + " does not match partition (" +
                    std::to_string(p.m) + " x " + std::to_string(p.sub_dim) + ")");
    std::vector<std::vector<double>> out(p.m);
    for (std::size_t i = 0; i < p.m; ++i)
        out[i].assign(x.begin() + static_cast<std::ptrdiff_t>(i * p.sub_dim),
                      x.begin() + static_cast<std::ptrdiff_t>((i + 1) * p.sub_dim));
    return out;
}

/// Extracts subspace i of X as a flat N x sub_dim array.
inline std::vector<double> subspace_points(const EmbeddingMatrix& X, const SubspacePartition& p,
                                           std::size_t i) {
    if (X.dim != p.dim()) throw Error("embedding dim does not match partition");
    std::vector<double> pts(X.rows * p.sub_dim);
    for (std::size_t r = 0; r < X.rows; ++r)
        std::copy(X.row(r) + i * p.sub_dim, X.row(r) + (i + 1) * p.sub_dim,
                  pts.begin() + static_cast<std::ptrdiff_t>(r * p.sub_dim));
    return pts;
}

namespace detail {

inline double sqdist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

inline std::size_t count_distinct_points(const std::vector<double>& pts, std::size_t d) {
    std::unordered_set<std::string> seen;
    const std::size_t n = d ? pts.size() / d : 0;
    for (std::size_t i = 0; i < n; ++i)
        seen.emplace(reinterpret_cast<const char*>(pts.data() + i * d), d * sizeof(double));
    return seen.size();
}

}  // namespace detail

/// Gaussian KDE over a point set; bandwidth <= 0 selects Scott's rule
/// h = sigma_hat * N^(-1/(d+4)) with sigma_hat the mean per-dimension std.
/// Above 50k points densities are estimated against a 10k fixed-seed
/// reference subsample.
inline std::vector<double> kde_density(const std::vector<double>& pts, std::size_t d,
                                       double bandwidth = 0.0) {
    const std::size_t n = d ? pts.size() / d : 0;
    if (n < 2) throw Error("KDE needs at least 2 points");

    double h = bandwidth;
    if (h <= 0.0) {
        double sigma_sum = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += pts[i * d + j];
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double diff = pts[i * d + j] - mean;
                var += diff * diff;
            }
            sigma_sum += std::sqrt(var / static_cast<double>(n));
        }
        double sigma_hat = sigma_sum / static_cast<double>(d);
        if (sigma_hat <= 0.0)
            throw Error("degenerate bandwidth: all points identical, pass an explicit bandwidth");
        h = sigma_hat * std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(d) + 4.0));
    }

    // reference set
    const std::size_t kde_cap = 50000, kde_sample = 10000;
    std::vector<std::size_t> ref;
    if (n > kde_cap) {
        Rng rng(derive_seed(0x6b646573616d70ULL, n, d));
        ref.resize(kde_sample);
        for (auto& r : ref) r = uniform_index(rng, n);
    } else {
        ref.resize(n);
        for (std::size_t i = 0; i < n; ++i) ref[i] = i;
    }

    const double inv2h2 = 1.0 / (2.0 * h * h);
    const double norm = std::pow(6.283185307179586 * h * h, -0.5 * static_cast<double>(d)) /
                        static_cast<double>(ref.size());
    std::vector<double> dens(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t r : ref)
            s += std::exp(-detail::sqdist(pts.data() + i * d, pts.data() + r * d, d) * inv2h2);
        dens[i] = s * norm;
    }
    return dens;
}

inline std::vector<double> transform_densities(std::vector<double> dens, DensityTransform t) {
    if (t == DensityTransform::Raw) return dens;
    const double eps = 1e-9;
    double lo = std::numeric_limits<double>::infinity();
    for (double& v : dens) {
        v = std::log(std::max(v, 1e-300));
        lo = std::min(lo, v);
    }
    for (double& v : dens) v = std::max(v - lo + eps, eps);
    return dens;
}

/// k-means++ style seeding: first centroid uniform, then each next point z
/// with probability proportional to rho(z) * D(z)^2, where D is distance to
/// the nearest already-chosen centroid. rho == 1 gives classic k-means++.
inline std::vector<double> seed_centroids(const std::vector<double>& pts, std::size_t d,
                                          std::size_t k, SeedingMode mode,
                                          const std::vector<double>& densities, Rng& rng) {
    const std::size_t n = d ? pts.size() / d : 0;
    if (n == 0) throw Error("cannot seed centroids on an empty point set");
    std::size_t distinct = detail::count_distinct_points(pts, d);
    if (k > distinct)
        throw Error("k=" + std::to_string(k) + " exceeds distinct point count " +
                    std::to_string(distinct));
    if (mode == SeedingMode::DAPQ && densities.size() != n)
        throw Error("DAPQ seeding requires one density per point");

    std::vector<double> centroids;
    centroids.reserve(k * d);
    auto push_point = [&](std::size_t idx) {
        centroids.insert(centroids.end(), pts.begin() + static_cast<std::ptrdiff_t>(idx * d),
                         pts.begin() + static_cast<std::ptrdiff_t>((idx + 1) * d));
    };

    std::size_t first = uniform_index(rng, n);
    push_point(first);

    std::vector<double> min_d2(n);
    for (std::size_t i = 0; i < n; ++i)
        min_d2[i] = detail::sqdist(pts.data() + i * d, pts.data() + first * d, d);

    std::vector<double> weight(n);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double rho = mode == SeedingMode::DAPQ ? densities[i] : 1.0;
            weight[i] = rho * min_d2[i];
            total += weight[i];
        }
        if (!(total > 0.0)) throw Error("seeding weights vanished; duplicate-heavy input");
        double u = uniform01(rng) * total;
        std::size_t pick = n - 1;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += weight[i];
            if (u < acc) {
                pick = i;
                break;
            }
        }
        // a zero-weight tail point must not be picked by accumulation slop
        while (weight[pick] == 0.0 && pick > 0) --pick;
        push_point(pick);
        for (std::size_t i = 0; i < n; ++i)
            min_d2[i] = std::min(min_d2[i],
                                 detail::sqdist(pts.data() + i * d, pts.data() + pick * d, d));
    }
    return centroids;
}

struct LloydResult {
    std::vector<double> centroids;  // k x d
    std::vector<std::uint32_t> assignments;
    std::vector<double> distortion_trace;  // per-iteration sum of squared distances
};

/// Lloyd refinement to an assignment fixpoint (or the iteration cap). Empty
/// clusters are re-seeded from the point farthest from its centroid.
inline LloydResult lloyd(const std::vector<double>& pts, std::size_t d,
                         std::vector<double> centroids, std::size_t max_iterations = 100) {
    const std::size_t n = d ? pts.size() / d : 0;
    const std::size_t k = d ? centroids.size() / d : 0;
    if (k == 0) throw Error("lloyd needs at least one centroid");

    LloydResult res;
    res.centroids = std::move(centroids);
    res.assignments.assign(n, 0);
    std::vector<std::uint32_t> prev(n, std::numeric_limits<std::uint32_t>::max());

    for (std::size_t it = 0; it < std::max<std::size_t>(max_iterations, 1); ++it) {
        // assignment step, ties toward the lowest index
        double distortion = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t arg = 0;
            for (std::size_t j = 0; j < k; ++j) {
                double dist = detail::sqdist(pts.data() + i * d, res.centroids.data() + j * d, d);
                if (dist < best) {
                    best = dist;
                    arg = static_cast<std::uint32_t>(j);
                }
            }
            res.assignments[i] = arg;
            distortion += best;
        }
        res.distortion_trace.push_back(distortion);
        if (res.assignments == prev) break;
        prev = res.assignments;

        // mean update
        std::vector<double> sums(k * d, 0.0);
        std::vector<std::size_t> sizes(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t j = res.assignments[i];
            ++sizes[j];
            for (std::size_t c = 0; c < d; ++c) sums[j * d + c] += pts[i * d + c];
        }
        for (std::size_t j = 0; j < k; ++j)
            if (sizes[j] > 0)
                for (std::size_t c = 0; c < d; ++c)
                    res.centroids[j * d + c] = sums[j * d + c] / static_cast<double>(sizes[j]);

        for (std::size_t j = 0; j < k; ++j) {
            if (sizes[j] > 0) continue;
            // steal the point farthest from its current centroid
            double worst = -1.0;
            std::size_t far = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (sizes[res.assignments[i]] <= 1) continue;
                double dist = detail::sqdist(pts.data() + i * d,
                                             res.centroids.data() + res.assignments[i] * d, d);
                if (dist > worst) {
                    worst = dist;
                    far = i;
                }
            }
            --sizes[res.assignments[far]];
            res.assignments[far] = static_cast<std::uint32_t>(j);
            sizes[j] = 1;
            std::copy(pts.begin() + static_cast<std::ptrdiff_t>(far * d),
                      pts.begin() + static_cast<std::ptrdiff_t>((far + 1) * d),
                      res.centroids.begin() + static_cast<std::ptrdiff_t>(j * d));
        }
    }
    return res;
}

namespace detail {

inline std::vector<std::vector<double>> train_subspace(const std::vector<double>& pts,
                                                       std::size_t d, std::size_t k,
                                                       const TrainConfig& cfg,
                                                       std::uint64_t sub_seed) {
    std::vector<double> dens;
    if (cfg.mode == SeedingMode::DAPQ)
        dens = transform_densities(kde_density(pts, d, cfg.bandwidth), cfg.transform);
    Rng rng(sub_seed);
    auto init = seed_centroids(pts, d, k, cfg.mode, dens, rng);
    auto fit = lloyd(pts, d, std::move(init), cfg.max_iterations);
    std::vector<std::vector<double>> out(k);
    for (std::size_t j = 0; j < k; ++j)
        out[j].assign(fit.centroids.begin() + static_cast<std::ptrdiff_t>(j * d),
                      fit.centroids.begin() + static_cast<std::ptrdiff_t>((j + 1) * d));
    return out;
}

}  // namespace detail

/// Trains each subspace independently (KDE -> seeding -> Lloyd). Results are
/// a function of (X, ks, cfg) only; subspaces use RNG substreams keyed by
/// subspace index, so parallel and sequential runs agree exactly.
inline Codebook train(const EmbeddingMatrix& X, const SubspacePartition& p,
                      const std::vector<std::size_t>& ks, const TrainConfig& cfg) {
    if (ks.size() != p.m) throw Error("need one k per subspace");
    if (X.dim != p.dim()) throw Error("embedding dim does not match partition");
    for (auto k : ks)
        if (k < 1) throw Error("every k must be >= 1");

    Codebook cb;
    cb.partition = p;
    cb.config = cfg;
    cb.centroids.resize(p.m);

    unsigned threads = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                        : cfg.threads;
    threads = std::min<unsigned>(threads, static_cast<unsigned>(p.m));

    std::vector<std::string> errors(p.m);
    auto work = [&](std::size_t i) {
        try {
            auto pts = subspace_points(X, p, i);
            cb.centroids[i] =
                detail::train_subspace(pts, p.sub_dim, ks[i], cfg, derive_seed(cfg.seed, i));
        } catch (const std::exception& e) {
            errors[i] = std::string("subspace ") + std::to_string(i) + ": " + e.what();
        }
    };

    if (threads <= 1) {
        for (std::size_t i = 0; i < p.m; ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < p.m; i = next.fetch_add(1)) work(i);
            });
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (!e.empty()) throw Error(e);
    return cb;
}

inline CodeTuple quantize(const Codebook& cb, const double* x, std::size_t len) {
    if (len != cb.dim()) throw Error("vector length does not match codebook dimensionality");
    const std::size_t d = cb.partition.sub_dim;
    CodeTuple t;
    t.indices.resize(cb.partition.m);
    for (std::size_t i = 0; i < cb.partition.m; ++i) {
        const double* sub = x + i * d;
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t arg = 0;
        for (std::size_t j = 0; j < cb.centroids[i].size(); ++j) {
            double dist = detail::sqdist(sub, cb.centroids[i][j].data(), d);
            if (dist < best) {
                best = dist;
                arg = static_cast<std::uint32_t>(j);
            }
        }
        t.indices[i] = arg;
    }
    return t;
}

inline CodeTuple quantize(const Codebook& cb, const std::vector<double>& x) {
    return quantize(cb, x.data(), x.size());
}

inline std::vector<CodeTuple> quantize_all(const Codebook& cb, const EmbeddingMatrix& X) {
    if (X.dim != cb.dim()) throw Error("embedding dim does not match codebook");
    std::vector<CodeTuple> out;
    out.reserve(X.rows);
    for (std::size_t r = 0; r < X.rows; ++r) out.push_back(quantize(cb, X.row(r), X.dim));
    return out;
}

inline std::vector<double> reconstruct(const Codebook& cb, const CodeTuple& t) {
    if (t.indices.size() != cb.partition.m) throw Error("tuple arity does not match codebook");
    std::vector<double> x;
    x.reserve(cb.dim());
    for (std::size_t i = 0; i < cb.partition.m; ++i) {
        if (t.indices[i] >= cb.centroids[i].size())
            throw Error("tuple index " + std::to_string(t.indices[i]) +
                        " out of range for subspace " + std::to_string(i));
        const auto& c = cb.centroids[i][t.indices[i]];
        x.insert(x.end(), c.begin(), c.end());
    }
    return x;
}

/// Total squared quantization error over X.
inline double distortion(const Codebook& cb, const EmbeddingMatrix& X) {
    double total = 0.0;
    for (std::size_t r = 0; r < X.rows; ++r) {
        CodeTuple t = quantize(cb, X.row(r), X.dim);
        auto rec = reconstruct(cb, t);
        total += detail::sqdist(X.row(r), rec.data(), X.dim);
    }
    return total;
}

}  // namespace logoquant
