#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "logoquant/codec.hpp"
#include "logoquant/dod.hpp"
#include "logoquant/embedding.hpp"
#include "logoquant/pq.hpp"
#include "logoquant/vocab.hpp"

namespace lq = logoquant;
using nlohmann::ordered_json;

namespace {

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

unsigned env_threads() {
    const char* v = std::getenv("LOGOQUANT_THREADS");
    if (!v) return 1;
    long n = std::strtol(v, nullptr, 10);
    return n < 0 ? 1u : static_cast<unsigned>(n);
}

double parse_fct(const std::string& s) {
    if (s == "inf" || s == "infinity" || s == "∞")
        return std::numeric_limits<double>::infinity();
    try {
        return std::stod(s);
    } catch (...) {
        throw lq::Error("cannot parse cutoff frequency '" + s + "'");
    }
}

std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw lq::Error("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return lq::fnv1a64_hex(buf.str());
}

void append_manifest(const std::string& path, ordered_json entry) {
    auto now = std::chrono::system_clock::now().time_since_epoch();
    entry["unix_time"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(now).count() / 1000.0;
    std::ofstream out(path, std::ios::app);
    if (out) out << entry.dump() << "\n";
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::string content;
    for (const auto& l : lines) {
        content += l;
        content += '\n';
    }
    lq::detail::atomic_write(path, content);
}

struct CommonOpts {
    std::string manifest = "logoquant_manifest.jsonl";
};

int run_fit(const std::string& embeddings_path, const std::string& corpus_path, std::size_t m,
            double dod_target, std::size_t eta, double b, const std::string& mode,
            const std::string& strategy, const std::string& bandwidth, bool log_density,
            std::uint64_t seed, std::size_t max_rounds, const std::string& out,
            const CommonOpts& common) {
    Timer total;
    ordered_json mf{{"command", "fit"},
                    {"embeddings", embeddings_path},
                    {"corpus", corpus_path},
                    {"m", m},
                    {"dod_target", dod_target},
                    {"eta", eta},
                    {"b", b},
                    {"mode", mode},
                    {"strategy", strategy},
                    {"bandwidth", bandwidth},
                    {"log_density", log_density},
                    {"seed", seed},
                    {"max_rounds", max_rounds},
                    {"out", out}};
    mf["embeddings_checksum"] = file_checksum(embeddings_path);
    mf["corpus_checksum"] = file_checksum(corpus_path);

    auto corpus = lq::detail::read_lines(corpus_path);
    auto vocab = lq::ingest_corpus(corpus);
    auto X = lq::load_embeddings(embeddings_path, vocab);

    lq::TrainConfig tc;
    tc.mode = mode == "pq" ? lq::SeedingMode::KMeansPP : lq::SeedingMode::DAPQ;
    tc.transform = log_density ? lq::DensityTransform::Log : lq::DensityTransform::Raw;
    tc.bandwidth = bandwidth == "auto" ? 0.0 : std::stod(bandwidth);
    tc.seed = seed;
    tc.threads = env_threads();

    lq::SearchConfig sc;
    sc.target = dod_target;
    sc.eta = eta;
    sc.b = b;
    sc.max_rounds = max_rounds;
    sc.strategy = strategy == "per-subspace" ? lq::SearchStrategy::PerSubspace
                                             : lq::SearchStrategy::UniformK;

    Timer fit_timer;
    lq::FitResult fr;
    try {
        fr = lq::fit(X, m, sc, tc, &vocab);
    } catch (const lq::UnreachableTargetError& e) {
        mf["outcome"] = std::string("unreachable: ") + e.what();
        append_manifest(common.manifest, mf);
        std::cerr << "logoquant fit: " << e.what() << "\n";
        return 2;
    }
    mf["fit_ms"] = fit_timer.ms();

    auto table = lq::build_symbol_table(vocab, fr.codebook, X);
    lq::save_codebook(fr.codebook, table, out);

    std::vector<std::string> trace;
    trace.reserve(fr.trace.size());
    for (const auto& e : fr.trace) trace.push_back(lq::format_trace_line(e));
    write_lines(out + ".trace", trace);

    mf["codebook_checksum"] = table.checksum;
    mf["dod"] = fr.report.value;
    mf["distinct_codewords"] = fr.report.distinct_codewords;
    mf["ks"] = fr.codebook.ks();
    mf["rounds"] = fr.trace.size();
    mf["total_ms"] = total.ms();
    mf["outcome"] = "ok";
    append_manifest(common.manifest, mf);

    std::cout << "fit: |W|=" << fr.report.vocab_size << " |Q|=" << fr.report.distinct_codewords
              << " DoD=" << fr.report.value << " rounds=" << fr.trace.size()
              << " checksum=" << table.checksum << "\n";
    return 0;
}

int run_encode(const std::string& codebook_path, const std::string& fct_str,
               const std::string& in_path, const std::string& out_path, std::size_t max_len,
               const CommonOpts& common) {
    Timer total;
    double f_ct = parse_fct(fct_str);
    ordered_json mf{{"command", "encode"},
                    {"codebook", codebook_path},
                    {"fct", fct_str},
                    {"in", in_path},
                    {"out", out_path},
                    {"max_len", max_len}};
    mf["codebook_file_checksum"] = file_checksum(codebook_path);
    mf["in_checksum"] = file_checksum(in_path);

    auto loaded = lq::load_codebook(codebook_path);
    auto lines = lq::detail::read_lines(in_path);
    if (max_len > 0) {
        std::vector<std::string> kept;
        for (auto& l : lines)
            if (lq::split_tokens(l).size() <= max_len) kept.push_back(std::move(l));
        lines = std::move(kept);
    }
    auto encoded = lq::encode_lines(lines, loaded.table, f_ct);
    std::vector<std::string> out_lines;
    out_lines.reserve(encoded.size() + 1);
    out_lines.push_back(lq::corpus_header(loaded.table));
    for (auto& l : encoded) out_lines.push_back(std::move(l));
    write_lines(out_path, out_lines);

    mf["codebook_checksum"] = loaded.table.checksum;
    mf["sentences"] = lines.size();
    mf["total_ms"] = total.ms();
    mf["outcome"] = "ok";
    append_manifest(common.manifest, mf);
    return 0;
}

int run_decode(const std::string& codebook_path, const std::string& in_path,
               const std::string& out_path, bool lenient, const CommonOpts& common) {
    Timer total;
    ordered_json mf{{"command", "decode"},
                    {"codebook", codebook_path},
                    {"in", in_path},
                    {"out", out_path},
                    {"lenient", lenient}};
    mf["codebook_file_checksum"] = file_checksum(codebook_path);
    mf["in_checksum"] = file_checksum(in_path);

    auto loaded = lq::load_codebook(codebook_path);
    auto lines = lq::detail::read_lines(in_path);
    lq::DecodeOptions opts;
    opts.lenient = lenient;
    auto dec = lq::decode_lines(lines, loaded.table, loaded.codebook, opts);
    write_lines(out_path, dec.lines);

    mf["report"] = {{"raw", dec.report.raw},
                    {"exact", dec.report.exact},
                    {"recovered", dec.report.recovered},
                    {"failed", dec.report.failed}};
    mf["total_ms"] = total.ms();
    mf["outcome"] = "ok";
    append_manifest(common.manifest, mf);

    std::cout << "decode: raw=" << dec.report.raw << " exact=" << dec.report.exact
              << " recovered=" << dec.report.recovered << " failed=" << dec.report.failed << "\n";
    return 0;
}

int run_stats(const std::string& codebook_path, const std::string& corpus_path,
              const std::string& grid_str, const CommonOpts& common) {
    ordered_json mf{{"command", "stats"},
                    {"codebook", codebook_path},
                    {"corpus", corpus_path},
                    {"fct_grid", grid_str}};
    mf["codebook_file_checksum"] = file_checksum(codebook_path);
    mf["corpus_checksum"] = file_checksum(corpus_path);

    auto loaded = lq::load_codebook(codebook_path);
    auto lines = lq::detail::read_lines(corpus_path);

    std::vector<double> grid;
    std::stringstream ss(grid_str);
    std::string item;
    while (std::getline(ss, item, ',')) grid.push_back(parse_fct(item));
    if (grid.empty()) throw lq::Error("empty --fct-grid");

    std::cout << "f_ct,distinct_tokens,avg_sentence_length\n";
    for (double f_ct : grid) {
        auto enc = lq::encode_lines(lines, loaded.table, f_ct);
        auto st = lq::corpus_stats(enc);
        std::cout << f_ct << ',' << st.distinct_token_count << ',' << st.avg_sentence_length
                  << "\n";
    }
    mf["outcome"] = "ok";
    append_manifest(common.manifest, mf);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"logoquant: abstract-subword vocabulary codec"};
    app.require_subcommand(1);
    CommonOpts common;
    app.add_option("--manifest", common.manifest, "run manifest file (JSON lines, appended)");

    auto* fit = app.add_subcommand("fit", "train a codebook to a DoD target");
    std::string embeddings, corpus, out, mode = "dapq", strategy = "uniform", bandwidth = "auto";
    std::size_t m = 3, eta = 8, max_rounds = 1000;
    double dod_target = 1.0, b = 1.0;
    std::uint64_t seed = 42;
    bool log_density = false;
    fit->add_option("--embeddings", embeddings, "GloVe-style word vector file")->required();
    fit->add_option("--corpus", corpus, "tokenized corpus, one sentence per line")->required();
    fit->add_option("--m", m, "number of subspaces (default 3)");
    fit->add_option("--dod-target", dod_target, "distinctness objective (default 1.0)");
    fit->add_option("--eta", eta, "cluster-count increment per round (default 8)");
    fit->add_option("--b", b, "DoD scale (default 1.0)");
    fit->add_option("--mode", mode, "pq | dapq (default dapq)")
        ->check(CLI::IsMember({"pq", "dapq"}));
    fit->add_option("--strategy", strategy, "uniform | per-subspace (default uniform)")
        ->check(CLI::IsMember({"uniform", "per-subspace"}));
    fit->add_option("--bandwidth", bandwidth, "KDE bandwidth, 'auto' = Scott's rule");
    fit->add_flag("--log-density", log_density, "use shifted log KDE weights in seeding");
    fit->add_option("--seed", seed, "master RNG seed (default 42)");
    fit->add_option("--max-rounds", max_rounds, "search-round cap (default 1000)");
    fit->add_option("--out", out, "output codebook (.lqc.json)")->required();

    auto* enc = app.add_subcommand("encode", "decompose infrequent words into code symbols");
    std::string e_codebook, e_fct = "0", e_in, e_out;
    std::size_t e_maxlen = 0;
    enc->add_option("--codebook", e_codebook, "codebook file")->required();
    enc->add_option("--fct", e_fct, "cutoff frequency (number or 'inf')");
    enc->add_option("--in", e_in, "input corpus")->required();
    enc->add_option("--out", e_out, "output encoded corpus")->required();
    enc->add_option("--max-len", e_maxlen, "drop sentences longer than N tokens (0 = keep all)");

    auto* dec = app.add_subcommand("decode", "recover words from a symbol stream");
    std::string d_codebook, d_in, d_out;
    bool d_lenient = false;
    dec->add_option("--codebook", d_codebook, "codebook file")->required();
    dec->add_option("--in", d_in, "encoded corpus")->required();
    dec->add_option("--out", d_out, "output corpus")->required();
    dec->add_flag("--lenient", d_lenient, "replace malformed groups with ⟨UNK⟩ instead of failing");

    auto* st = app.add_subcommand("stats", "dictionary size / sentence length across an f_ct grid");
    std::string s_codebook, s_corpus, s_grid = "0";
    st->add_option("--codebook", s_codebook, "codebook file")->required();
    st->add_option("--corpus", s_corpus, "corpus file")->required();
    st->add_option("--fct-grid", s_grid, "comma-separated cutoffs, 'inf' allowed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit->parsed())
            return run_fit(embeddings, corpus, m, dod_target, eta, b, mode, strategy, bandwidth,
                           log_density, seed, max_rounds, out, common);
        if (enc->parsed()) return run_encode(e_codebook, e_fct, e_in, e_out, e_maxlen, common);
        if (dec->parsed()) return run_decode(d_codebook, d_in, d_out, d_lenient, common);
        if (st->parsed()) return run_stats(s_codebook, s_corpus, s_grid, common);
    } catch (const lq::IntegrityError& e) {
        std::cerr << "logoquant: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "logoquant: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
