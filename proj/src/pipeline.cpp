#include "umml/pipeline.hpp"

#include <algorithm>
#include <iomanip>
#include <atomic>
#include <exception>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "umml/error.hpp"

namespace umml {

using nlohmann::json;

namespace {

constexpr const char *kVersion = "0.1.0";

std::filesystem::path resolve(const std::filesystem::path &base, const std::string &p) {
    std::filesystem::path path(p);
    if (path.is_relative() && !base.empty()) return base / path;
    return path;
}

template <typename T>
T get_or(const json &obj, const char *key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception &e) {
        fail(ErrorKind::Config, std::string("config field '") + key + "': " + e.what());
    }
}

std::string edge_name(const std::string &a, const std::string &b) { return a + "-" + b; }

void check_keys(const json &obj, const char *section, std::initializer_list<const char *> known) {
    if (!obj.is_object()) fail(ErrorKind::Config, std::string("config section '") + section + "' must be an object");
    for (const auto &[key, value] : obj.items()) {
        if (std::find_if(known.begin(), known.end(), [&](const char *k) { return key == k; }) == known.end()) {
            fail(ErrorKind::Config, std::string("unknown key '") + key + "' in config section '" + section + "'");
        }
    }
}

SelfLearnConfig parse_selflearn(const json &j) {
    check_keys(j, "selflearn", {"init_vocab", "keep_prob_start", "keep_prob_growth", "stall_patience", "max_iters",
                                "retrieval", "direction", "objective_tol", "block_rows"});
    SelfLearnConfig c;
    c.init_vocab = get_or(j, "init_vocab", c.init_vocab);
    c.keep_prob_start = get_or(j, "keep_prob_start", c.keep_prob_start);
    c.keep_prob_growth = get_or(j, "keep_prob_growth", c.keep_prob_growth);
    c.stall_patience = get_or(j, "stall_patience", c.stall_patience);
    c.max_iters = get_or(j, "max_iters", c.max_iters);
    c.retrieval = parse_retrieval(get_or<std::string>(j, "retrieval", c.retrieval.describe()));
    c.direction = parse_direction(get_or<std::string>(j, "direction", "union"));
    c.objective_tol = get_or(j, "objective_tol", c.objective_tol);
    c.block_rows = get_or(j, "block_rows", c.block_rows);
    return c;
}

std::string to_string(Direction d) {
    switch (d) {
    case Direction::Forward: return "fwd";
    case Direction::Backward: return "bwd";
    case Direction::Union: return "union";
    }
    return "union";
}

GWConfig::Precision parse_precision(const std::string &s) {
    if (s == "auto") return GWConfig::Precision::Automatic;
    if (s == "single") return GWConfig::Precision::Single;
    if (s == "double") return GWConfig::Precision::Double;
    fail(ErrorKind::Config, "unknown gw.precision '" + s + "' (expected auto, single or double)");
}

std::string to_string(GWConfig::Precision p) {
    switch (p) {
    case GWConfig::Precision::Automatic: return "auto";
    case GWConfig::Precision::Single: return "single";
    case GWConfig::Precision::Double: return "double";
    }
    return "auto";
}

GWConfig parse_gw(const json &j) {
    check_keys(j, "gw", {"epsilon", "outer_iters", "sinkhorn_iters", "sinkhorn_max_iters", "marginal_tol", "conv_tol",
                         "refine_rounds", "refine_csls_k", "train_vocab", "precision"});
    GWConfig c;
    c.epsilon = get_or(j, "epsilon", c.epsilon);
    c.outer_iters = get_or(j, "outer_iters", c.outer_iters);
    c.sinkhorn_iters = get_or(j, "sinkhorn_iters", c.sinkhorn_iters);
    c.sinkhorn_max_iters = get_or(j, "sinkhorn_max_iters", c.sinkhorn_max_iters);
    c.marginal_tol = get_or(j, "marginal_tol", c.marginal_tol);
    c.conv_tol = get_or(j, "conv_tol", c.conv_tol);
    c.refine_rounds = get_or(j, "refine_rounds", c.refine_rounds);
    c.refine_csls_k = get_or(j, "refine_csls_k", c.refine_csls_k);
    c.train_vocab = get_or(j, "train_vocab", c.train_vocab);
    c.precision = parse_precision(get_or<std::string>(j, "precision", "auto"));
    return c;
}

GeommConfig parse_geomm(const json &j) {
    check_keys(j, "geomm", {"max_iters", "grad_tol", "loss_tol", "b_floor", "init", "initial_step", "max_halvings"});
    GeommConfig c;
    c.max_iters = get_or(j, "max_iters", c.max_iters);
    c.grad_tol = get_or(j, "grad_tol", c.grad_tol);
    c.loss_tol = get_or(j, "loss_tol", c.loss_tol);
    c.b_floor = get_or(j, "b_floor", c.b_floor);
    c.init = parse_geomm_init(get_or<std::string>(j, "init", to_string(c.init)));
    c.initial_step = get_or(j, "initial_step", c.initial_step);
    c.max_halvings = get_or(j, "max_halvings", c.max_halvings);
    return c;
}

std::uint64_t derive_seed(std::uint64_t seed, std::size_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

void write_json(const json &j, const std::filesystem::path &path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace

const LanguageSpec &RunConfig::language(const std::string &code) const {
    for (const auto &l : languages) {
        if (l.code == code) return l;
    }
    fail(ErrorKind::Config, "language '" + code + "' is not declared");
}

RunConfig parse_run_config(const std::string &json_text, const std::filesystem::path &base_dir) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception &e) {
        fail(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(root, "top level", {"languages", "edges", "normalization", "selflearn", "gw", "geomm", "latent_normalize",
                                   "eval", "output_dir", "seed", "max_parallel_edges", "dump_couplings"});

    RunConfig cfg;
    try {
        for (const auto &l : root.at("languages")) {
            check_keys(l, "languages[]", {"code", "embeddings", "train_vocab", "export_vocab"});
            LanguageSpec spec;
            spec.code = l.at("code").get<std::string>();
            spec.embeddings = resolve(base_dir, l.at("embeddings").get<std::string>());
            spec.train_vocab = get_or(l, "train_vocab", spec.train_vocab);
            spec.export_vocab = get_or(l, "export_vocab", spec.export_vocab);
            cfg.languages.push_back(std::move(spec));
            cfg.graph.nodes.push_back(cfg.languages.back().code);
        }
        for (const auto &e : root.at("edges")) {
            check_keys(e, "edges[]", {"pair", "source", "lexicon"});
            const auto pair = e.at("pair").get<std::vector<std::string>>();
            if (pair.size() != 2) fail(ErrorKind::Config, "edge 'pair' must name two languages");
            LanguageGraph::Edge edge;
            edge.a = pair[0];
            edge.b = pair[1];
            edge.source = parse_edge_source(get_or<std::string>(e, "source", "selflearn"));
            if (e.contains("lexicon")) edge.lexicon_path = resolve(base_dir, e.at("lexicon").get<std::string>());
            cfg.graph.edges.push_back(std::move(edge));
        }
        if (root.contains("normalization")) {
            cfg.normalization.clear();
            for (const auto &s : root.at("normalization")) cfg.normalization.push_back(parse_norm_step(s.get<std::string>()));
        }
        if (root.contains("selflearn")) cfg.selflearn = parse_selflearn(root.at("selflearn"));
        if (root.contains("gw")) cfg.gw = parse_gw(root.at("gw"));
        if (root.contains("geomm")) cfg.geomm = parse_geomm(root.at("geomm"));
        cfg.latent_normalize = get_or(root, "latent_normalize", cfg.latent_normalize);
        if (root.contains("eval")) {
            const json &ev = root.at("eval");
            check_keys(ev, "eval", {"csls_k", "bli", "clws"});
            cfg.eval_csls_k = get_or(ev, "csls_k", cfg.eval_csls_k);
            for (const auto &b : ev.value("bli", json::array())) {
                check_keys(b, "eval.bli[]", {"src", "tgt", "gold", "ks"});
                BliSpec spec{b.at("src").get<std::string>(), b.at("tgt").get<std::string>(),
                             resolve(base_dir, b.at("gold").get<std::string>()),
                             get_or<std::vector<std::size_t>>(b, "ks", {1})};
                cfg.bli.push_back(std::move(spec));
            }
            for (const auto &c : ev.value("clws", json::array())) {
                check_keys(c, "eval.clws[]", {"a", "b", "gold"});
                cfg.clws.push_back({c.at("a").get<std::string>(), c.at("b").get<std::string>(),
                                    resolve(base_dir, c.at("gold").get<std::string>())});
            }
        }
        cfg.output_dir = resolve(base_dir, get_or<std::string>(root, "output_dir", cfg.output_dir.string()));
        cfg.seed = get_or(root, "seed", cfg.seed);
        cfg.max_parallel_edges = get_or(root, "max_parallel_edges", cfg.max_parallel_edges);
        cfg.dump_couplings = get_or(root, "dump_couplings", cfg.dump_couplings);
    } catch (const json::exception &e) {
        fail(ErrorKind::Config, std::string("config: ") + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open config: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), path.parent_path());
}

std::string dump_run_config(const RunConfig &cfg) {
    json j;
    for (const auto &l : cfg.languages) {
        j["languages"].push_back({{"code", l.code},
                                  {"embeddings", l.embeddings.string()},
                                  {"train_vocab", l.train_vocab},
                                  {"export_vocab", l.export_vocab}});
    }
    for (const auto &e : cfg.graph.edges) {
        json edge = {{"pair", {e.a, e.b}}, {"source", to_string(e.source)}};
        if (!e.lexicon_path.empty()) edge["lexicon"] = e.lexicon_path.string();
        j["edges"].push_back(edge);
    }
    j["normalization"] = json::array();
    for (auto s : cfg.normalization) j["normalization"].push_back(std::string(to_string(s)));
    const auto &s = cfg.selflearn;
    j["selflearn"] = {{"init_vocab", s.init_vocab},         {"keep_prob_start", s.keep_prob_start},
                      {"keep_prob_growth", s.keep_prob_growth}, {"stall_patience", s.stall_patience},
                      {"max_iters", s.max_iters},           {"retrieval", s.retrieval.describe()},
                      {"direction", to_string(s.direction)}, {"objective_tol", s.objective_tol},
                      {"block_rows", s.block_rows}};
    const auto &g = cfg.gw;
    j["gw"] = {{"epsilon", g.epsilon},           {"outer_iters", g.outer_iters},
               {"sinkhorn_iters", g.sinkhorn_iters}, {"sinkhorn_max_iters", g.sinkhorn_max_iters},
               {"marginal_tol", g.marginal_tol},   {"conv_tol", g.conv_tol},
               {"refine_rounds", g.refine_rounds}, {"refine_csls_k", g.refine_csls_k},
               {"train_vocab", g.train_vocab},     {"precision", to_string(g.precision)}};
    const auto &m = cfg.geomm;
    j["geomm"] = {{"max_iters", m.max_iters}, {"grad_tol", m.grad_tol},       {"loss_tol", m.loss_tol},
                  {"b_floor", m.b_floor},     {"init", to_string(m.init)},   {"initial_step", m.initial_step},
                  {"max_halvings", m.max_halvings}};
    j["latent_normalize"] = cfg.latent_normalize;
    j["eval"]["csls_k"] = cfg.eval_csls_k;
    j["eval"]["bli"] = json::array();
    for (const auto &b : cfg.bli) j["eval"]["bli"].push_back({{"src", b.src}, {"tgt", b.tgt}, {"gold", b.gold.string()}, {"ks", b.ks}});
    j["eval"]["clws"] = json::array();
    for (const auto &c : cfg.clws) j["eval"]["clws"].push_back({{"a", c.a}, {"b", c.b}, {"gold", c.gold.string()}});
    j["output_dir"] = cfg.output_dir.string();
    j["seed"] = cfg.seed;
    j["max_parallel_edges"] = cfg.max_parallel_edges;
    j["dump_couplings"] = cfg.dump_couplings;
    return j.dump(2);
}

std::vector<std::string> validate_config(const RunConfig &cfg) {
    std::vector<std::string> out = cfg.graph.violations();
    std::set<std::string> codes;
    std::set<std::filesystem::path> paths;
    for (const auto &l : cfg.languages) {
        codes.insert(l.code);
        if (l.code.empty()) out.push_back("language with an empty code");
        if (l.train_vocab == 0) out.push_back("language " + l.code + ": train_vocab must be positive");
        if (l.export_vocab == 0) out.push_back("language " + l.code + ": export_vocab must be positive");
        if (!std::filesystem::is_regular_file(l.embeddings)) {
            out.push_back("language " + l.code + ": embeddings not found: " + l.embeddings.string());
        } else if (std::ifstream probe(l.embeddings); !probe) {
            out.push_back("language " + l.code + ": embeddings unreadable: " + l.embeddings.string());
        }
        if (!paths.insert(std::filesystem::weakly_canonical(l.embeddings)).second) {
            out.push_back("language " + l.code + ": embeddings " + l.embeddings.string() + " already used by another language");
        }
    }
    for (const auto &e : cfg.graph.edges) {
        if (e.source == EdgeSource::Supplied && !e.lexicon_path.empty() &&
            !std::filesystem::is_regular_file(e.lexicon_path)) {
            out.push_back("edge " + edge_name(e.a, e.b) + ": lexicon not found: " + e.lexicon_path.string());
        }
    }
    for (const auto &b : cfg.bli) {
        for (const auto *code : {&b.src, &b.tgt}) {
            if (!codes.count(*code)) out.push_back("BLI eval: unknown language " + *code);
        }
        if (!std::filesystem::is_regular_file(b.gold)) out.push_back("BLI eval: gold not found: " + b.gold.string());
        if (b.ks.empty() || std::count(b.ks.begin(), b.ks.end(), 0)) out.push_back("BLI eval: ks must be positive");
    }
    for (const auto &c : cfg.clws) {
        for (const auto *code : {&c.a, &c.b}) {
            if (!codes.count(*code)) out.push_back("CLWS eval: unknown language " + *code);
        }
        if (!std::filesystem::is_regular_file(c.gold)) out.push_back("CLWS eval: gold not found: " + c.gold.string());
    }
    try {
        cfg.selflearn.validate();
        cfg.gw.validate();
        cfg.geomm.validate();
    } catch (const Error &e) {
        out.push_back(e.what());
    }
    if (cfg.eval_csls_k == 0) out.push_back("eval.csls_k must be positive");
    return out;
}

std::filesystem::path RunLayout::lexicon(const std::string &a, const std::string &b) const {
    return root / "lexicons" / (edge_name(a, b) + ".txt");
}

std::filesystem::path RunLayout::edge_log(const std::string &a, const std::string &b) const {
    return root / "logs" / ("stage1_" + edge_name(a, b) + ".csv");
}

std::filesystem::path RunLayout::coupling(const std::string &a, const std::string &b) const {
    return root / "couplings" / (edge_name(a, b) + ".bin");
}

std::filesystem::path RunLayout::latent(const std::string &lang) const { return root / "latent" / (lang + ".vec"); }

std::map<std::string, EmbeddingMatrix> load_languages(const RunConfig &cfg) {
    std::map<std::string, EmbeddingMatrix> out;
    for (const auto &l : cfg.languages) {
        const std::size_t rows = std::max(l.train_vocab, l.export_vocab);
        EmbeddingMatrix raw = load_embeddings(l.embeddings, rows, l.code);
        if (raw.duplicates_skipped() > 0) {
            std::cerr << "[umml] " << l.code << ": skipped " << raw.duplicates_skipped() << " duplicate words\n";
        }
        out.emplace(l.code, normalize(raw, cfg.normalization));
    }
    return out;
}

std::vector<EdgeOutcome> run_stage1(const RunConfig &cfg, const std::map<std::string, EmbeddingMatrix> &embeddings) {
    const RunLayout layout{cfg.output_dir};
    const auto &edges = cfg.graph.edges;
    std::vector<EdgeOutcome> outcomes(edges.size());
    std::vector<std::exception_ptr> errors(edges.size());

    auto job = [&](std::size_t idx) {
        const auto &edge = edges[idx];
        EdgeOutcome &out = outcomes[idx];
        out.a = edge.a;
        out.b = edge.b;
        out.source = edge.source;
        out.seed = derive_seed(cfg.seed, idx);
        const EmbeddingMatrix &x_full = embeddings.at(edge.a);
        const EmbeddingMatrix &z_full = embeddings.at(edge.b);
        switch (edge.source) {
        case EdgeSource::Supplied: {
            auto indexed = to_indices(read_word_pairs(edge.lexicon_path), x_full, z_full);
            out.lexicon = std::move(indexed.lexicon);
            out.supplied_skipped = indexed.skipped;
            break;
        }
        case EdgeSource::SelfLearn: {
            const EmbeddingMatrix x = x_full.head(cfg.language(edge.a).train_vocab);
            const EmbeddingMatrix z = z_full.head(cfg.language(edge.b).train_vocab);
            SelfLearnConfig sl = cfg.selflearn;
            sl.seed = out.seed;
            SelfLearnResult r = self_learn(x, z, sl);
            write_selflearn_log(r.history, layout.edge_log(edge.a, edge.b));
            out.lexicon = std::move(r.lexicon);
            break;
        }
        case EdgeSource::GW: {
            GWConfig gw = cfg.gw;
            gw.train_vocab = std::min({gw.train_vocab, cfg.language(edge.a).train_vocab, cfg.language(edge.b).train_vocab});
            const EmbeddingMatrix x = x_full.head(gw.train_vocab);
            const EmbeddingMatrix z = z_full.head(gw.train_vocab);
            GWResult r = gw_align_detailed(x, z, gw);
            if (r.sinkhorn_capped > 0) {
                double worst = 0.0;
                for (const auto &step : r.history) worst = std::max(worst, step.sinkhorn_residual);
                std::ostringstream msg;
                msg << "[umml] edge " << edge_name(edge.a, edge.b) << ": " << r.sinkhorn_capped
                    << " Sinkhorn projections stopped at gw.sinkhorn_max_iters and were rounded onto the marginals;"
                    << " worst residual " << std::scientific << std::setprecision(2) << worst << '\n';
                std::cerr << msg.str();
            }
            write_gw_log(r.history, layout.edge_log(edge.a, edge.b));
            if (cfg.dump_couplings) write_coupling(r.coupling, layout.coupling(edge.a, edge.b));
            out.lexicon = refine(r.coupling, x, z, gw);
            break;
        }
        }
        out.lexicon.src_lang = edge.a;
        out.lexicon.tgt_lang = edge.b;
        if (out.lexicon.empty()) fail(ErrorKind::Numeric, "empty lexicon");
        write_word_pairs(to_words(out.lexicon, x_full, z_full), layout.lexicon(edge.a, edge.b));
    };

    std::size_t workers = cfg.max_parallel_edges;
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, edges.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t idx = next++; idx < edges.size(); idx = next++) {
            try {
                job(idx);
            } catch (...) {
                errors[idx] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto &t : pool) t.join();

    for (std::size_t idx = 0; idx < edges.size(); ++idx) {
        if (!errors[idx]) continue;
        const std::string where = "stage 1, edge " + edge_name(edges[idx].a, edges[idx].b) + ": ";
        try {
            std::rethrow_exception(errors[idx]);
        } catch (const Error &e) {
            throw Error(e.kind(), where + e.what());
        } catch (const std::exception &e) {
            throw Error(ErrorKind::Numeric, where + e.what());
        }
    }
    return outcomes;
}

std::vector<Lexicon> load_stage1(const RunConfig &cfg, const std::map<std::string, EmbeddingMatrix> &embeddings) {
    const RunLayout layout{cfg.output_dir};
    std::vector<Lexicon> out;
    for (const auto &edge : cfg.graph.edges) {
        auto path = layout.lexicon(edge.a, edge.b);
        if (!std::filesystem::exists(path)) {
            fail(ErrorKind::Io, "no stage-1 lexicon for edge " + edge_name(edge.a, edge.b) + " (run 'align' first): " +
                                    path.string());
        }
        auto indexed = to_indices(read_word_pairs(path), embeddings.at(edge.a), embeddings.at(edge.b));
        if (indexed.skipped > 0) {
            std::cerr << "[umml] " << path.string() << ": " << indexed.skipped << " pairs outside the vocabulary\n";
        }
        out.push_back(std::move(indexed.lexicon));
    }
    return out;
}

GeommResult run_stage2(const RunConfig &cfg, const std::map<std::string, EmbeddingMatrix> &embeddings,
                       const std::vector<Lexicon> &lexicons) {
    const RunLayout layout{cfg.output_dir};
    try {
        GeommConfig gc = cfg.geomm;
        gc.seed = cfg.seed;
        GeommResult r = fit_geomm_detailed(embeddings, lexicons, cfg.graph, gc);
        write_geomm_log(r.history, layout.geomm_log());
        json extra = {{"seed", cfg.seed},
                      {"config_hash", fnv1a(dump_run_config(cfg))},
                      {"geomm", json::parse(dump_run_config(cfg))["geomm"]},
                      {"stop_reason", r.stop_reason},
                      {"final_loss", r.history.back().loss},
                      {"iterations", r.history.size() - 1}};
        save_space(r.space, layout.space_dir(), extra.dump());
        return r;
    } catch (const Error &e) {
        throw Error(e.kind(), std::string("stage 2: ") + e.what());
    }
}

std::map<std::string, EmbeddingMatrix> export_latent(const RunConfig &cfg, const MultilingualSpace &space,
                                                     const std::map<std::string, EmbeddingMatrix> &embeddings) {
    const RunLayout layout{cfg.output_dir};
    std::map<std::string, EmbeddingMatrix> out;
    for (const auto &l : cfg.languages) {
        EmbeddingMatrix latent =
            map_to_latent(space, l.code, embeddings.at(l.code).head(l.export_vocab), cfg.latent_normalize);
        save_embeddings(latent, layout.latent(l.code));
        out.emplace(l.code, std::move(latent));
    }
    return out;
}

EvalReport run_evaluations(const RunConfig &cfg, const std::map<std::string, EmbeddingMatrix> &latent) {
    EvalReport report;
    for (const auto &b : cfg.bli) {
        report.bli.push_back(eval_bli(latent.at(b.src), latent.at(b.tgt), read_word_pairs(b.gold), b.ks,
                                      Retrieval::csls(cfg.eval_csls_k)));
    }
    for (const auto &c : cfg.clws) {
        report.clws.emplace_back(c, eval_clws(latent.at(c.a), latent.at(c.b), read_scored_pairs(c.gold)));
    }
    return report;
}

void write_eval_report(const EvalReport &report, const RunLayout &layout) {
    json j;
    j["bli"] = json::array();
    for (const auto &r : report.bli) {
        json p;
        for (const auto &[k, v] : r.precision_at) p[std::to_string(k)] = v;
        j["bli"].push_back({{"src", r.src_lang},
                            {"tgt", r.tgt_lang},
                            {"precision_at", p},
                            {"evaluated", r.evaluated_count},
                            {"oov", r.oov_count}});
    }
    j["clws"] = json::array();
    for (const auto &[spec, r] : report.clws) {
        j["clws"].push_back({{"a", spec.a}, {"b", spec.b}, {"gold", spec.gold.string()}, {"spearman", r.rho},
                             {"used", r.used}, {"oov", r.oov}});
    }
    write_json(j, layout.eval_json());

    std::ofstream table(layout.eval_table());
    if (!report.bli.empty()) table << format_bli_table(report.bli);
    for (const auto &[spec, r] : report.clws) {
        table << "CLWS " << spec.a << "-" << spec.b << ": rho = " << r.rho << " over " << r.used << " pairs (" << r.oov
              << " OOV)\n";
    }
}

RunArtifacts run_umml(const RunConfig &cfg) {
    RunArtifacts art;
    art.layout = RunLayout{cfg.output_dir};
    std::filesystem::create_directories(cfg.output_dir);

    const std::string canonical = dump_run_config(cfg);
    json manifest = {{"version", kVersion},
                     {"seed", cfg.seed},
                     {"config_hash", fnv1a(canonical)},
                     {"config", json::parse(canonical)},
                     {"status", "running"},
                     {"stage1_jobs", cfg.graph.edges.size()}};
    write_json(manifest, art.layout.manifest());

    std::string stage = "validate";
    try {
        const auto problems = validate_config(cfg);
        if (!problems.empty()) {
            std::string msg = "invalid config:";
            for (const auto &p : problems) msg += "\n  " + p;
            fail(ErrorKind::Config, msg);
        }
        stage = "load";
        const auto embeddings = load_languages(cfg);

        stage = "stage1";
        art.edges = run_stage1(cfg, embeddings);
        std::vector<Lexicon> lexicons;
        for (const auto &e : art.edges) {
            lexicons.push_back(e.lexicon);
            manifest["edges"].push_back({{"pair", {e.a, e.b}},
                                         {"source", to_string(e.source)},
                                         {"seed", e.seed},
                                         {"lexicon", art.layout.lexicon(e.a, e.b).string()},
                                         {"pairs", e.lexicon.size()},
                                         {"supplied_skipped", e.supplied_skipped}});
        }

        stage = "stage2";
        GeommResult fit = run_stage2(cfg, embeddings, lexicons);
        manifest["geomm"] = {{"iterations", fit.history.size() - 1},
                             {"final_loss", fit.history.back().loss},
                             {"stop_reason", fit.stop_reason}};

        stage = "export";
        art.latent = export_latent(cfg, fit.space, embeddings);
        art.space.emplace(std::move(fit.space));

        stage = "eval";
        art.eval = run_evaluations(cfg, art.latent);
        write_eval_report(art.eval, art.layout);

        manifest["status"] = "ok";
        write_json(manifest, art.layout.manifest());
    } catch (const std::exception &e) {
        manifest["status"] = "failed";
        manifest["failure"] = {{"stage", stage}, {"message", e.what()}};
        try {
            write_json(manifest, art.layout.manifest());
        } catch (const std::exception &) {
            // The original failure is the one worth reporting.
        }
        throw;
    }
    return art;
}

std::uint64_t fnv1a(const std::string &text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace umml
