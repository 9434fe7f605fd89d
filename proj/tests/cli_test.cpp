#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "ggda/config.hpp"
#include "ggda/datahub.hpp"
#include "ggda/grouping.hpp"
#include "ggda/pipeline.hpp"

using namespace ggda;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "ggda_cli_test";
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const std::string& name, const std::string& body) {
    fs::path p = temp_dir() / name;
    std::ofstream out(p);
    out << body;
    return p;
}

const std::string kSmallConfig = R"({
  "dataset": {"kind": "synthetic", "n": 60, "d": 2, "classes": 2, "separation": 6.0, "seed": 5},
  "arch": {"kind": "logreg"},
  "train": {"learning_rate": 0.1, "epochs": 40, "batch_size": 8, "weight_decay": 0.01, "seed": 7},
  "grouping": {"method": "random", "group_size": 4, "seed": 9},
  "attribution": {"method": "influence", "hessian": {"kind": "exact"}, "seed": 11},
  "eval": {"retrain_fractions": [0.1], "prune_fractions": [0.25], "n_seeds": 2},
  "output_dir": "unused"
})";

int run_cli(const std::string& args) {
    const char* bin = std::getenv("GGDA_CLI_BIN");
    REQUIRE(bin != nullptr);
    std::string cmd = std::string(bin) + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Wall-clock runtime entries are the one nondeterministic field in eval
// reports; blank them before comparing runs.
std::string strip_runtimes(std::string text) {
    std::regex json_rt("\"runtime_s\": [-0-9.e+]+");
    text = std::regex_replace(text, json_rt, "\"runtime_s\": X");
    return text;
}

}  // namespace

TEST_CASE("config defaults mirror the published hyperparameters") {
    fs::path p = write_config("defaults.json", R"({"dataset": {"kind": "synthetic"}})");
    cli::RunConfig cfg = cli::load_config(p.string());
    CHECK(cfg.attribution.hessian.lissa_damp == 1e-3);
    CHECK(cfg.attribution.hessian.lissa_repeat == 20);
    CHECK(cfg.attribution.hessian.lissa_depth == 200);
    CHECK(cfg.attribution.hessian.lissa_scale == 50.0);
    CHECK(cfg.grouping.kmeans.tol == 1e-3);
    CHECK(cfg.grouping.kmeans.max_iter == 60);
    CHECK(cfg.attribution.trak_subsample_frac == 0.5);
    CHECK(cfg.eval.retrain_fractions == std::vector<double>{0.01, 0.05, 0.10, 0.20});
    CHECK(cfg.eval.prune_fractions == std::vector<double>{0.25, 0.50, 0.75});
}

TEST_CASE("config errors carry dotted field paths") {
    fs::path bad_field = write_config("badfield.json", R"({"dataset": {"bogus": 1}})");
    try {
        cli::load_config(bad_field.string());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field == "dataset.bogus");
    }

    fs::path missing = write_config("missing.json",
                                    R"({"dataset": {"kind": "csv", "path": "/nope.csv"}})");
    try {
        cli::load_config(missing.string());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field == "dataset.path");
    }

    fs::path bad_range = write_config("badrange.json",
                                      R"({"train": {"learning_rate": -1.0}})");
    try {
        cli::load_config(bad_range.string());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field == "train.learning_rate");
    }
}

TEST_CASE("seed override touches every module seed") {
    fs::path p = write_config("seeds.json", kSmallConfig);
    cli::RunConfig cfg = cli::load_config(p.string());
    cli::override_seed(cfg, 42);
    CHECK(cfg.dataset.seed == 42);
    CHECK(cfg.train.cfg.seed == 42);
    CHECK(cfg.grouping.seed == 42);
    CHECK(cfg.attribution.seed == 42);
}

TEST_CASE("full pipeline runs and artifacts validate") {
    fs::path cfg_path = write_config("pipeline.json", kSmallConfig);
    fs::path out = temp_dir() / "run1";
    fs::remove_all(out);
    std::string base = "--config " + cfg_path.string() + " --out " + out.string();

    CHECK(run_cli("train " + base) == 0);
    CHECK(run_cli("group " + base) == 0);
    CHECK(run_cli("attribute " + base) == 0);
    CHECK(run_cli("eval --metric retrain " + base) == 0);
    CHECK(run_cli("eval --metric prune " + base) == 0);

    CHECK(fs::exists(out / "checkpoints.json"));
    CHECK(fs::exists(out / "train_summary.json"));
    grouping::Partition part = grouping::read_partition((out / "partition.json").string());
    CHECK(part.target_group_size == 4);
    datahub::ScoreFile sf = datahub::read_scores((out / "scores.json").string());
    CHECK(sf.method == "influence_exact");
    CHECK(sf.group_members == part.groups);
    CHECK(fs::exists(out / "scores.csv"));
    CHECK(fs::exists(out / "eval_retrain.json"));
    CHECK(fs::exists(out / "eval_retrain.csv"));
    CHECK(fs::exists(out / "eval_prune.json"));
}

TEST_CASE("group_size 1 produces singleton score groups") {
    std::string cfg_body = kSmallConfig;
    auto pos = cfg_body.find("\"group_size\": 4");
    REQUIRE(pos != std::string::npos);
    cfg_body.replace(pos, 15, "\"group_size\": 1");
    fs::path cfg_path = write_config("singleton.json", cfg_body);
    fs::path out = temp_dir() / "run_singleton";
    fs::remove_all(out);
    std::string base = "--config " + cfg_path.string() + " --out " + out.string();

    CHECK(run_cli("train " + base) == 0);
    CHECK(run_cli("group " + base) == 0);
    CHECK(run_cli("attribute " + base) == 0);
    datahub::ScoreFile sf = datahub::read_scores((out / "scores.json").string());
    for (const auto& g : sf.group_members) CHECK(g.size() == 1);
}

TEST_CASE("rerunning the pipeline yields byte-identical artifacts") {
    fs::path cfg_path = write_config("deterministic.json", kSmallConfig);
    fs::path out_a = temp_dir() / "run_a";
    fs::path out_b = temp_dir() / "run_b";
    fs::remove_all(out_a);
    fs::remove_all(out_b);

    for (const fs::path& out : {out_a, out_b}) {
        std::string base = "--config " + cfg_path.string() + " --out " + out.string();
        REQUIRE(run_cli("train " + base) == 0);
        REQUIRE(run_cli("group " + base) == 0);
        REQUIRE(run_cli("attribute " + base) == 0);
        REQUIRE(run_cli("eval --metric retrain " + base) == 0);
    }
    for (const char* name : {"checkpoints.json", "partition.json", "scores.json", "scores.csv"}) {
        CHECK(slurp(out_a / name) == slurp(out_b / name));
    }
    CHECK(strip_runtimes(slurp(out_a / "eval_retrain.json")) ==
          strip_runtimes(slurp(out_b / "eval_retrain.json")));
}

TEST_CASE("missing dataset file exits with code 2") {
    fs::path cfg_path = write_config(
        "missing_data.json", R"({"dataset": {"kind": "csv", "path": "/does/not/exist.csv"}})");
    fs::path out = temp_dir() / "run_missing";
    CHECK(run_cli("train --config " + cfg_path.string() + " --out " + out.string()) == 2);
}

TEST_CASE("malformed json exits with code 2") {
    fs::path cfg_path = write_config("broken.json", "{ not json");
    fs::path out = temp_dir() / "run_broken";
    CHECK(run_cli("train --config " + cfg_path.string() + " --out " + out.string()) == 2);
}

TEST_CASE("eval without prior attribute fails gracefully") {
    fs::path cfg_path = write_config("orphan.json", kSmallConfig);
    fs::path out = temp_dir() / "run_orphan";
    fs::remove_all(out);
    int rc = run_cli("eval --metric retrain --config " + cfg_path.string() + " --out " +
                     out.string());
    CHECK(rc == 1);  // IO failure: scores.json missing
}
