#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <sstream>

#include "test_util.hpp"
#include "umml/error.hpp"
#include "umml/pipeline.hpp"
#include "umml/synthetic.hpp"

using namespace umml;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json read_json(const fs::path &p) { return json::parse(slurp(p)); }

// Planted languages on disk plus a star-graph config rooted at the first.
struct Workspace {
    testutil::TempDir dir;
    std::vector<PlantedLanguage> langs;
    json config;

    Workspace(const std::string &tag, const std::vector<std::string> &codes, std::size_t n, std::size_t d,
              double noise, std::uint64_t seed)
        : dir(tag) {
        PlantedSpec spec;
        spec.n = n;
        spec.d = d;
        spec.noise = noise;
        spec.seed = seed;
        langs = make_planted_family(codes, spec);
        config = {{"languages", json::array()}, {"edges", json::array()}, {"output_dir", "out"}, {"seed", 11}};
        for (std::size_t i = 0; i < langs.size(); ++i) {
            save_embeddings(langs[i].embeddings, dir / (codes[i] + ".vec"));
            config["languages"].push_back({{"code", codes[i]}, {"embeddings", codes[i] + ".vec"}});
            if (i == 0) continue;
            config["edges"].push_back({{"pair", {codes[0], codes[i]}}, {"source", "selflearn"}});
        }
        for (std::size_t i = 0; i < langs.size(); ++i) {
            for (std::size_t j = 0; j < langs.size(); ++j) {
                if (i == j) continue;
                const Lexicon gold = planted_gold(langs[i], langs[j]);
                write_word_pairs(to_words(gold, langs[i].embeddings, langs[j].embeddings),
                                 dir / (codes[i] + "-" + codes[j] + ".gold"));
            }
        }
    }

    void add_bli(const std::string &src, const std::string &tgt) {
        config["eval"]["bli"].push_back({{"src", src}, {"tgt", tgt}, {"gold", src + "-" + tgt + ".gold"}, {"ks", {1, 5}}});
    }

    RunConfig parsed() const { return parse_run_config(config.dump(), dir.path()); }

    fs::path write_config(const std::string &name = "config.json") const {
        std::ofstream(dir / name) << config.dump(2);
        return dir / name;
    }
};

double p_at_1(const RunArtifacts &art, const std::string &src, const std::string &tgt) {
    for (const auto &r : art.eval.bli) {
        if (r.src_lang == src && r.tgt_lang == tgt) return r.precision_at.at(1);
    }
    FAIL("no BLI result for " << src << "-" << tgt);
    return 0.0;
}

bool mentions(const std::vector<std::string> &problems, const std::string &needle) {
    for (const auto &p : problems) {
        if (p.find(needle) != std::string::npos) return true;
    }
    return false;
}

int run_cli(const std::string &args) {
    const std::string cmd = std::string(UMML_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
    Workspace ws("cfg", {"a", "b"}, 50, 4, 0.0, 71);
    const RunConfig cfg = ws.parsed();
    CHECK(cfg.languages.size() == 2);
    CHECK(cfg.languages[0].train_vocab == 20000);
    CHECK(cfg.languages[0].export_vocab == 200000);
    CHECK(cfg.languages[1].embeddings == ws.dir / "b.vec");
    CHECK(cfg.output_dir == ws.dir / "out");
    CHECK(cfg.graph.edges.size() == 1);
    CHECK(cfg.seed == 11);

    SUBCASE("canonical form round-trips") {
        const std::string once = dump_run_config(cfg);
        CHECK(dump_run_config(parse_run_config(once)) == once);
    }
    SUBCASE("unknown keys are rejected") {
        json bad = ws.config;
        bad["selflearn"]["keep_prob"] = 0.5;
        try {
            parse_run_config(bad.dump(), ws.dir.path());
            FAIL("expected a config error");
        } catch (const Error &e) {
            CHECK(e.kind() == ErrorKind::Config);
            CHECK(std::string(e.what()).find("keep_prob") != std::string::npos);
        }
        CHECK_THROWS_AS(parse_run_config("{not json", {}), Error);
        CHECK_THROWS_AS(parse_run_config(R"({"languages": []})", {}), Error);
    }
}

TEST_CASE("validation reports every problem") {
    Workspace ws("validate", {"a", "b", "c"}, 30, 4, 0.0, 72);
    ws.config["edges"] = {{{"pair", {"a", "b"}}}, {{"pair", {"b", "c"}}}};
    CHECK(validate_config(ws.parsed()).empty());

    ws.config["edges"] = {{{"pair", {"a", "b"}}}};
    CHECK(mentions(validate_config(ws.parsed()), "c is unreachable"));

    ws.config["edges"] = {{{"pair", {"a", "b"}}}, {{"pair", {"b", "c"}}}, {{"pair", {"a", "a"}}}};
    CHECK(mentions(validate_config(ws.parsed()), "self-loop"));

    ws.config["edges"] = {{{"pair", {"a", "b"}}}, {{"pair", {"a", "c"}}, {"source", "supplied"}, {"lexicon", "nope.txt"}}};
    ws.config["languages"][1]["embeddings"] = "missing.vec";
    ws.config["languages"][2]["embeddings"] = "a.vec";
    ws.config["languages"][2]["train_vocab"] = 0;
    const auto problems = validate_config(ws.parsed());
    CHECK(mentions(problems, "missing.vec"));
    CHECK(mentions(problems, "nope.txt"));
    CHECK(mentions(problems, "a.vec"));
    CHECK(mentions(problems, "train_vocab"));
    CHECK(problems.size() >= 4);
}

TEST_CASE("an unreadable embedding path fails before any compute") {
    Workspace ws("unreadable", {"a", "b"}, 30, 4, 0.0, 73);
    ws.config["languages"][1]["embeddings"] = "gone.vec";
    const RunConfig cfg = ws.parsed();
    CHECK_THROWS_AS(run_umml(cfg), Error);
    const json manifest = read_json(RunLayout{cfg.output_dir}.manifest());
    CHECK(manifest["status"] == "failed");
    CHECK(manifest["failure"]["stage"] == "validate");
    CHECK(manifest["failure"]["message"].get<std::string>().find("gone.vec") != std::string::npos);
    CHECK_FALSE(fs::exists(RunLayout{cfg.output_dir}.lexicon("a", "b")));
}

TEST_CASE("a failing edge is named in the error and the manifest") {
    Workspace ws("edgefail", {"a", "b", "c"}, 60, 6, 0.0, 74);
    testutil::write_text(ws.dir / "broken.txt", "only_one_column\n");
    ws.config["edges"][1] = {{"pair", {"a", "c"}}, {"source", "supplied"}, {"lexicon", "broken.txt"}};
    const RunConfig cfg = ws.parsed();
    try {
        run_umml(cfg);
        FAIL("expected the run to fail");
    } catch (const Error &e) {
        CHECK(std::string(e.what()).find("edge a-c") != std::string::npos);
    }
    const json manifest = read_json(RunLayout{cfg.output_dir}.manifest());
    CHECK(manifest["status"] == "failed");
    CHECK(manifest["failure"]["stage"] == "stage1");
    CHECK(manifest["config_hash"] == fnv1a(dump_run_config(cfg)));
}

TEST_CASE("end to end with a self-learned edge") {
    Workspace ws("e2e", {"a", "b"}, 800, 20, 0.01, 75);
    ws.add_bli("a", "b");
    ws.add_bli("b", "a");
    const RunConfig cfg = ws.parsed();
    const RunArtifacts art = run_umml(cfg);
    CHECK(p_at_1(art, "a", "b") >= 0.95);
    CHECK(p_at_1(art, "b", "a") >= 0.95);

    REQUIRE(art.edges.size() == 1);
    CHECK(art.edges[0].source == EdgeSource::SelfLearn);
    const RunLayout &l = art.layout;
    for (const fs::path &p : {l.manifest(), l.lexicon("a", "b"), l.edge_log("a", "b"), l.geomm_log(), l.latent("a"),
                              l.latent("b"), l.eval_json(), l.eval_table(), l.space_dir() / "manifest.json"}) {
        CHECK_MESSAGE(fs::exists(p), p.string());
    }
    const json manifest = read_json(l.manifest());
    CHECK(manifest["status"] == "ok");
    CHECK(manifest["stage1_jobs"] == 1);
    CHECK(manifest["seed"] == 11);

    const MultilingualSpace space = load_space(l.space_dir());
    CHECK(space.languages() == std::vector<std::string>{"a", "b"});
    const auto latent = load_embeddings(l.latent("a"), 1000000, "a");
    CHECK(latent.size() == 800);
    CHECK((latent.vectors() - art.latent.at("a").vectors()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a supplied edge skips stage-1 alignment") {
    Workspace ws("hybrid", {"a", "b"}, 800, 20, 0.01, 76);
    ws.config["edges"][0] = {{"pair", {"a", "b"}}, {"source", "supplied"}, {"lexicon", "a-b.gold"}};
    ws.add_bli("a", "b");
    const RunArtifacts art = run_umml(ws.parsed());
    REQUIRE(art.edges.size() == 1);
    CHECK(art.edges[0].source == EdgeSource::Supplied);
    CHECK(art.edges[0].lexicon.size() == 800);
    CHECK_FALSE(fs::exists(art.layout.edge_log("a", "b")));
    CHECK(p_at_1(art, "a", "b") >= 0.99);
}

TEST_CASE("reruns are bit-identical regardless of parallelism") {
    Workspace ws("determinism", {"a", "b", "c"}, 500, 16, 0.01, 77);
    ws.config["edges"][1]["source"] = "gw";
    ws.add_bli("a", "c");
    ws.add_bli("b", "c");
    RunConfig one = ws.parsed();
    one.max_parallel_edges = 1;
    one.output_dir = ws.dir / "run1";
    RunConfig two = ws.parsed();
    two.max_parallel_edges = 2;
    two.output_dir = ws.dir / "run2";
    run_umml(one);
    run_umml(two);
    const RunLayout l1{one.output_dir}, l2{two.output_dir};
    for (const std::string lang : {"a", "b", "c"}) CHECK(slurp(l1.latent(lang)) == slurp(l2.latent(lang)));
    for (const std::string other : {"b", "c"}) CHECK(slurp(l1.lexicon("a", other)) == slurp(l2.lexicon("a", other)));
    const json report = read_json(l1.eval_json());
    for (const auto &r : report["bli"]) CHECK(r["precision_at"]["1"].get<double>() >= 0.95);
    CHECK(slurp(l1.space_dir() / "B.bin") == slurp(l2.space_dir() / "B.bin"));
}

TEST_CASE("command line exit codes") {
    Workspace ws("cli", {"a", "b"}, 300, 10, 0.0, 78);
    ws.add_bli("a", "b");
    const fs::path cfg = ws.write_config();
    const std::string c = " -c " + cfg.string();
    CHECK(run_cli("validate" + c) == 0);
    CHECK(run_cli("validate -c " + (ws.dir / "absent.json").string()) == static_cast<int>(ErrorKind::Io));
    CHECK(run_cli("validate" + c + " --set languages.1.embeddings=\\\"gone.vec\\\"") == static_cast<int>(ErrorKind::Config));
    CHECK(run_cli("validate" + c + " --set selflearn.bogus=1") == static_cast<int>(ErrorKind::Config));
    CHECK(run_cli("no-such-command") != 0);

    CHECK(run_cli("align" + c) == 0);
    CHECK(fs::exists(ws.dir / "out" / "lexicons" / "a-b.txt"));
    CHECK(run_cli("fit" + c) == 0);
    CHECK(run_cli("export" + c) == 0);
    CHECK(fs::exists(ws.dir / "out" / "latent" / "b.vec"));
    const json report = read_json(ws.dir / "out" / "eval" / "results.json");
    CHECK(report["bli"][0]["precision_at"]["1"].get<double>() >= 0.95);

    const std::string latent = (ws.dir / "out" / "latent").string();
    CHECK(run_cli("eval-bli --src " + latent + "/a.vec --tgt " + latent + "/b.vec --gold " + (ws.dir / "a-b.gold").string() +
                  " --k 1,5 --json " + (ws.dir / "bli.json").string()) == 0);
    CHECK(read_json(ws.dir / "bli.json")["precision_at"]["5"].get<double>() >= 0.95);
    CHECK(run_cli("eval-bli --src " + latent + "/a.vec --tgt " + latent + "/b.vec --gold " + (ws.dir / "none.gold").string()) ==
          static_cast<int>(ErrorKind::Io));

    CHECK(run_cli("run" + c + " -o " + (ws.dir / "other").string() + " --seed 5 -j 1") == 0);
    CHECK(read_json(ws.dir / "other" / "manifest.json")["seed"] == 5);

    CHECK(run_cli("synth " + (ws.dir / "syn").string() + " --langs x,y,z -n 200 -d 8") == 0);
    CHECK(run_cli("validate -c " + (ws.dir / "syn" / "config.json").string()) == 0);
}

TEST_CASE("the example config validates and runs on synthetic data") {
    testutil::TempDir dir("example");
    fs::create_directories(dir / "configs");
    fs::copy_file(fs::path(UMML_SOURCE_DIR) / "configs" / "example.json", dir / "configs" / "example.json");
    REQUIRE(run_cli("synth " + (dir / "data").string() + " --langs en,es,de,fr") == 0);
    const RunConfig cfg = load_run_config(dir / "configs" / "example.json");
    CHECK(validate_config(cfg).empty());
    const RunArtifacts art = run_umml(cfg);
    REQUIRE(art.eval.bli.size() == 2);
    for (const auto &r : art.eval.bli) CHECK(r.precision_at.at(1) >= 0.95);
    CHECK(art.edges.at(2).source == EdgeSource::Supplied);
}
