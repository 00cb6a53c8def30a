// Command-line front end for the two-stage multilingual embedding pipeline.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "umml/error.hpp"
#include "umml/evaluation.hpp"
#include "umml/pipeline.hpp"
#include "umml/synthetic.hpp"

using namespace umml;
using nlohmann::json;

namespace {

struct ConfigArgs {
    std::string path;
    std::vector<std::string> sets;
    std::string output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
};

void add_config_flags(CLI::App *cmd, ConfigArgs &args) {
    cmd->add_option("-c,--config", args.path, "Run configuration (JSON)")->required();
    cmd->add_option("--set", args.sets, "Override a config field, e.g. --set gw.epsilon=1e-3 (repeatable)");
    cmd->add_option("-o,--output-dir", args.output_dir, "Override output_dir");
    cmd->add_option("--seed", args.seed, "Override seed");
    cmd->add_option("-j,--jobs", args.jobs, "Override max_parallel_edges");
}

// "a.b.c=value": value is parsed as JSON when possible, else kept as a string.
void apply_override(json &root, const std::string &assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) fail(ErrorKind::Input, "--set expects key=value, got '" + assignment + "'");
    std::string pointer = "/" + assignment.substr(0, eq);
    for (auto &c : pointer) {
        if (c == '.') c = '/';
    }
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    root[json::json_pointer(pointer)] = value;
}

RunConfig load_config(const ConfigArgs &args) {
    std::ifstream in(args.path);
    if (!in) fail(ErrorKind::Io, "cannot open config: " + args.path);
    json root = json::parse(in, nullptr, false);
    if (root.is_discarded()) fail(ErrorKind::Config, "config is not valid JSON: " + args.path);
    for (const auto &s : args.sets) apply_override(root, s);
    const auto base = std::filesystem::path(args.path).parent_path();
    RunConfig cfg = parse_run_config(root.dump(), base);
    if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
    if (args.seed) cfg.seed = *args.seed;
    if (args.jobs) cfg.max_parallel_edges = *args.jobs;
    return cfg;
}

RunConfig checked_config(const ConfigArgs &args) {
    RunConfig cfg = load_config(args);
    const auto problems = validate_config(cfg);
    if (!problems.empty()) {
        std::string msg = "invalid config:";
        for (const auto &p : problems) msg += "\n  " + p;
        fail(ErrorKind::Config, msg);
    }
    return cfg;
}

std::vector<std::size_t> parse_ks(const std::string &text) {
    std::vector<std::size_t> ks;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            ks.push_back(std::stoul(item));
        } catch (const std::exception &) {
            fail(ErrorKind::Input, "bad k value '" + item + "'");
        }
    }
    return ks;
}

void log(const std::string &msg) { std::cerr << "[umml] " << msg << '\n'; }

int cmd_validate(const ConfigArgs &args) {
    const RunConfig cfg = load_config(args);
    const auto problems = validate_config(cfg);
    for (const auto &p : problems) std::cerr << "error: " << p << '\n';
    if (!problems.empty()) return static_cast<int>(ErrorKind::Config);
    log("config ok: " + std::to_string(cfg.languages.size()) + " languages, " +
        std::to_string(cfg.graph.edges.size()) + " edges");
    return 0;
}

int cmd_align(const ConfigArgs &args) {
    const RunConfig cfg = checked_config(args);
    const auto embeddings = load_languages(cfg);
    for (const auto &e : run_stage1(cfg, embeddings)) {
        log("edge " + e.a + "-" + e.b + " (" + to_string(e.source) + "): " + std::to_string(e.lexicon.size()) + " pairs");
    }
    return 0;
}

int cmd_fit(const ConfigArgs &args) {
    const RunConfig cfg = checked_config(args);
    const auto embeddings = load_languages(cfg);
    const auto lexicons = load_stage1(cfg, embeddings);
    const GeommResult r = run_stage2(cfg, embeddings, lexicons);
    std::ostringstream msg;
    msg << "fit: " << r.history.size() - 1 << " iterations, loss " << r.history.front().loss << " -> "
        << r.history.back().loss << " (" << r.stop_reason << ")";
    log(msg.str());
    return 0;
}

int cmd_export(const ConfigArgs &args) {
    const RunConfig cfg = checked_config(args);
    const RunLayout layout{cfg.output_dir};
    const MultilingualSpace space = load_space(layout.space_dir());
    const auto embeddings = load_languages(cfg);
    const auto latent = export_latent(cfg, space, embeddings);
    for (const auto &[lang, m] : latent) log("exported " + lang + ": " + std::to_string(m.size()) + " rows");
    if (!cfg.bli.empty() || !cfg.clws.empty()) {
        const EvalReport report = run_evaluations(cfg, latent);
        write_eval_report(report, layout);
        if (!report.bli.empty()) std::cout << format_bli_table(report.bli);
    }
    return 0;
}

int cmd_run(const ConfigArgs &args) {
    const RunConfig cfg = load_config(args);
    const RunArtifacts art = run_umml(cfg);
    if (!art.eval.bli.empty()) std::cout << format_bli_table(art.eval.bli);
    for (const auto &[spec, r] : art.eval.clws) {
        std::cout << "CLWS " << spec.a << "-" << spec.b << ": rho = " << r.rho << " (" << r.used << " pairs)\n";
    }
    log("artifacts in " + cfg.output_dir.string());
    return 0;
}

struct EvalArgs {
    std::string src;
    std::string tgt;
    std::string gold;
    std::string ks = "1";
    std::size_t csls_k = 10;
    std::size_t max_vocab = 200000;
    bool nn = false;
    std::string json_out;
};

int cmd_eval_bli(const EvalArgs &a) {
    const auto src = load_embeddings(a.src, a.max_vocab);
    const auto tgt = load_embeddings(a.tgt, a.max_vocab);
    const Retrieval retrieval = a.nn ? Retrieval::nn() : Retrieval::csls(a.csls_k);
    const BliResult r = eval_bli(normalize(src, {NormStep::Unit}), normalize(tgt, {NormStep::Unit}),
                                 read_word_pairs(a.gold), parse_ks(a.ks), retrieval);
    std::cout << format_bli_table({r});
    if (!a.json_out.empty()) {
        json p;
        for (const auto &[k, v] : r.precision_at) p[std::to_string(k)] = v;
        std::ofstream out(a.json_out);
        if (!out) fail(ErrorKind::Io, "cannot write " + a.json_out);
        out << json{{"src", r.src_lang}, {"tgt", r.tgt_lang}, {"precision_at", p},
                    {"evaluated", r.evaluated_count}, {"oov", r.oov_count}}.dump(2)
            << '\n';
    }
    return 0;
}

int cmd_eval_clws(const EvalArgs &a) {
    const auto la = load_embeddings(a.src, a.max_vocab);
    const auto lb = load_embeddings(a.tgt, a.max_vocab);
    const ClwsResult r = eval_clws(la, lb, read_scored_pairs(a.gold));
    std::cout << "rho = " << r.rho << " over " << r.used << " pairs (" << r.oov << " OOV)\n";
    if (!a.json_out.empty()) {
        std::ofstream out(a.json_out);
        if (!out) fail(ErrorKind::Io, "cannot write " + a.json_out);
        out << json{{"spearman", r.rho}, {"used", r.used}, {"oov", r.oov}}.dump(2) << '\n';
    }
    return 0;
}

struct SynthArgs {
    std::string dir;
    std::vector<std::string> langs{"aa", "bb"};
    PlantedSpec spec;
};

// Writes planted-rotation embeddings, gold dictionaries against the first
// language, and a star-graph config that ties them together.
int cmd_synth(const SynthArgs &a) {
    const std::filesystem::path dir(a.dir);
    std::filesystem::create_directories(dir);
    const auto family = make_planted_family(a.langs, a.spec);
    json cfg;
    for (std::size_t i = 0; i < a.langs.size(); ++i) {
        const std::string file = a.langs[i] + ".vec";
        save_embeddings(family[i].embeddings, dir / file);
        cfg["languages"].push_back({{"code", a.langs[i]}, {"embeddings", file}});
        if (i > 0) cfg["edges"].push_back({{"pair", {a.langs[0], a.langs[i]}}, {"source", "selflearn"}});
    }
    // Gold for every ordered pair; the config evaluates hub-to-leaf and
    // leaf-to-leaf, the latter having no direct lexicon.
    for (std::size_t i = 0; i < a.langs.size(); ++i) {
        for (std::size_t j = 0; j < a.langs.size(); ++j) {
            if (i == j) continue;
            const std::string gold = a.langs[i] + "-" + a.langs[j] + ".gold";
            write_word_pairs(to_words(planted_gold(family[i], family[j]), family[i].embeddings, family[j].embeddings),
                             dir / gold);
            if (j > i) cfg["eval"]["bli"].push_back({{"src", a.langs[i]}, {"tgt", a.langs[j]}, {"gold", gold}, {"ks", {1, 5}}});
        }
    }
    cfg["output_dir"] = "out";
    cfg["seed"] = a.spec.seed;
    std::ofstream out(dir / "config.json");
    if (!out) fail(ErrorKind::Io, "cannot write " + (dir / "config.json").string());
    out << cfg.dump(2) << '\n';
    log("wrote " + std::to_string(a.langs.size()) + " languages and " + (dir / "config.json").string());
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"umml: unsupervised multilingual word embeddings in a shared latent space"};
    app.require_subcommand(1);

    ConfigArgs cargs;
    auto *validate = app.add_subcommand("validate", "Check a run config without computing anything");
    auto *align = app.add_subcommand("align", "Stage 1: one bilingual lexicon per graph edge");
    auto *fit = app.add_subcommand("fit", "Stage 2: fit the shared space from stage-1 lexicons");
    auto *exp = app.add_subcommand("export", "Write latent embeddings from a fitted space");
    auto *run = app.add_subcommand("run", "All stages, export and evaluation");
    for (auto *cmd : {validate, align, fit, exp, run}) add_config_flags(cmd, cargs);

    EvalArgs eargs;
    auto *bli = app.add_subcommand("eval-bli", "Precision@k of word translation retrieval");
    bli->add_option("--src", eargs.src, "Source latent embeddings")->required();
    bli->add_option("--tgt", eargs.tgt, "Target latent embeddings")->required();
    bli->add_option("--gold", eargs.gold, "Gold dictionary, one 'src tgt' pair per line")->required();
    bli->add_option("--k", eargs.ks, "Comma-separated k values")->capture_default_str();
    bli->add_option("--csls-k", eargs.csls_k, "CSLS neighbourhood size")->capture_default_str();
    bli->add_flag("--nn", eargs.nn, "Plain cosine nearest neighbour instead of CSLS");
    auto *clws = app.add_subcommand("eval-clws", "Spearman correlation on cross-lingual word similarity");
    clws->add_option("--a", eargs.src, "Latent embeddings of the first language")->required();
    clws->add_option("--b", eargs.tgt, "Latent embeddings of the second language")->required();
    clws->add_option("--gold", eargs.gold, "Lines of 'word_a word_b score'")->required();
    for (auto *cmd : {bli, clws}) {
        cmd->add_option("--max-vocab", eargs.max_vocab, "Rows to load per file")->capture_default_str();
        cmd->add_option("--json", eargs.json_out, "Also write the result as JSON");
    }

    SynthArgs sargs;
    auto *synth = app.add_subcommand("synth", "Generate planted-rotation test languages and a config");
    synth->add_option("dir", sargs.dir, "Output directory")->required();
    synth->add_option("--langs", sargs.langs, "Comma-separated language codes; the first is the hub")->delimiter(',')->capture_default_str();
    synth->add_option("-n", sargs.spec.n, "Words per language")->capture_default_str();
    synth->add_option("-d", sargs.spec.d, "Dimension")->capture_default_str();
    synth->add_option("--noise", sargs.spec.noise, "Gaussian noise sigma")->capture_default_str();
    synth->add_option("--decay", sargs.spec.decay, "Spectral decay of the base cloud")->capture_default_str();
    synth->add_option("--seed", sargs.spec.seed, "Random seed")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(cargs);
        if (align->parsed()) return cmd_align(cargs);
        if (fit->parsed()) return cmd_fit(cargs);
        if (exp->parsed()) return cmd_export(cargs);
        if (run->parsed()) return cmd_run(cargs);
        if (bli->parsed()) return cmd_eval_bli(eargs);
        if (clws->parsed()) return cmd_eval_clws(eargs);
        if (synth->parsed()) return cmd_synth(sargs);
    } catch (const Error &e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return static_cast<int>(e.kind());
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
