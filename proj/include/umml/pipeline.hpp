#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "umml/align_gw.hpp"
#include "umml/align_selflearn.hpp"
#include "umml/evaluation.hpp"
#include "umml/geomm.hpp"

namespace umml {

struct LanguageSpec {
    std::string code;
    std::filesystem::path embeddings;
    std::size_t train_vocab = 20000;
    std::size_t export_vocab = 200000;
};

struct BliSpec {
    std::string src;
    std::string tgt;
    std::filesystem::path gold;
    std::vector<std::size_t> ks{1};
};

struct ClwsSpec {
    std::string a;
    std::string b;
    std::filesystem::path gold;
};

// Everything a run needs. Relative paths in a config file are resolved
// against the file's directory.
struct RunConfig {
    std::vector<LanguageSpec> languages;
    LanguageGraph graph;
    std::vector<NormStep> normalization = default_normalization();
    SelfLearnConfig selflearn;
    GWConfig gw;
    GeommConfig geomm;
    bool latent_normalize = true;
    std::size_t eval_csls_k = 10;
    std::vector<BliSpec> bli;
    std::vector<ClwsSpec> clws;
    std::filesystem::path output_dir = "umml_out";
    std::uint64_t seed = 0;
    std::size_t max_parallel_edges = 0;  // 0: one worker per hardware thread
    bool dump_couplings = false;

    const LanguageSpec &language(const std::string &code) const;
};

RunConfig parse_run_config(const std::string &json_text, const std::filesystem::path &base_dir = {});
RunConfig load_run_config(const std::filesystem::path &path);

// Canonical JSON form (all defaults filled in).
std::string dump_run_config(const RunConfig &cfg);

// All problems with the config: graph shape, missing files, bad sizes.
std::vector<std::string> validate_config(const RunConfig &cfg);

// Fixed artifact layout under output_dir.
struct RunLayout {
    std::filesystem::path root;

    std::filesystem::path manifest() const { return root / "manifest.json"; }
    std::filesystem::path lexicon(const std::string &a, const std::string &b) const;
    std::filesystem::path edge_log(const std::string &a, const std::string &b) const;
    std::filesystem::path coupling(const std::string &a, const std::string &b) const;
    std::filesystem::path space_dir() const { return root / "space"; }
    std::filesystem::path geomm_log() const { return root / "logs" / "geomm.csv"; }
    std::filesystem::path latent(const std::string &lang) const;
    std::filesystem::path eval_json() const { return root / "eval" / "results.json"; }
    std::filesystem::path eval_table() const { return root / "eval" / "results.txt"; }
};

// Normalized embeddings, max(train_vocab, export_vocab) rows per language.
std::map<std::string, EmbeddingMatrix> load_languages(const RunConfig &cfg);

struct EdgeOutcome {
    std::string a;
    std::string b;
    EdgeSource source = EdgeSource::SelfLearn;
    Lexicon lexicon;
    std::size_t supplied_skipped = 0;
    std::uint64_t seed = 0;
};

// Stage 1: one lexicon per graph edge, oriented a -> b. Unsupervised edges run
// on the first train_vocab rows; edges run concurrently.
std::vector<EdgeOutcome> run_stage1(const RunConfig &cfg, const std::map<std::string, EmbeddingMatrix> &embeddings);

// Reads the lexicons a previous stage 1 wrote under output_dir.
std::vector<Lexicon> load_stage1(const RunConfig &cfg, const std::map<std::string, EmbeddingMatrix> &embeddings);

GeommResult run_stage2(const RunConfig &cfg, const std::map<std::string, EmbeddingMatrix> &embeddings,
                       const std::vector<Lexicon> &lexicons);

// Latent embeddings (export_vocab rows) for each language.
std::map<std::string, EmbeddingMatrix> export_latent(const RunConfig &cfg, const MultilingualSpace &space,
                                                     const std::map<std::string, EmbeddingMatrix> &embeddings);

struct EvalReport {
    std::vector<BliResult> bli;
    std::vector<std::pair<ClwsSpec, ClwsResult>> clws;
};

EvalReport run_evaluations(const RunConfig &cfg, const std::map<std::string, EmbeddingMatrix> &latent);
void write_eval_report(const EvalReport &report, const RunLayout &layout);

struct RunArtifacts {
    RunLayout layout;
    std::vector<EdgeOutcome> edges;
    std::optional<MultilingualSpace> space;
    std::map<std::string, EmbeddingMatrix> latent;
    EvalReport eval;
};

// Both stages, export and evaluation. The manifest is written whether or not
// the run succeeds.
RunArtifacts run_umml(const RunConfig &cfg);

// 64-bit FNV-1a, used for config fingerprints in manifests.
std::uint64_t fnv1a(const std::string &text);

}  // namespace umml
