// ggda: config-driven pipeline runner for group data attribution.
// Subcommands: train, group, attribute, eval, bench.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ggda/errors.hpp"
#include "ggda/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "JSON config file")->required();
    cmd->add_option("-o,--out", args.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", args.seed, "override every config seed");
}

ggda::cli::RunConfig resolve(const CommonArgs& args, std::string& out_dir) {
    ggda::cli::RunConfig cfg = ggda::cli::load_config(args.config_path);
    if (args.seed >= 0)
        ggda::cli::override_seed(cfg, static_cast<std::uint64_t>(args.seed));
    out_dir = args.out_dir.empty() ? cfg.output_dir : args.out_dir;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Group data attribution pipeline"};
    app.require_subcommand(1);

    CommonArgs train_args, group_args, attr_args, eval_args, bench_args;
    std::string eval_metric = "retrain";

    CLI::App* train_cmd = app.add_subcommand("train", "train a model, write checkpoints");
    add_common(train_cmd, train_args);
    CLI::App* group_cmd = app.add_subcommand("group", "build a partition of the train set");
    add_common(group_cmd, group_args);
    CLI::App* attr_cmd = app.add_subcommand("attribute", "score groups with the configured method");
    add_common(attr_cmd, attr_args);
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate scores (retrain|prune|noisy)");
    add_common(eval_cmd, eval_args);
    eval_cmd->add_option("-m,--metric", eval_metric, "retrain|prune|noisy");
    CLI::App* bench_cmd = app.add_subcommand("bench", "time DA vs GGDA attribution");
    add_common(bench_cmd, bench_args);

    CLI11_PARSE(app, argc, argv);

    try {
        std::string out_dir;
        if (train_cmd->parsed()) {
            ggda::cli::RunConfig cfg = resolve(train_args, out_dir);
            ggda::cli::cmd_train(cfg, out_dir);
        } else if (group_cmd->parsed()) {
            ggda::cli::RunConfig cfg = resolve(group_args, out_dir);
            ggda::cli::cmd_group(cfg, out_dir);
        } else if (attr_cmd->parsed()) {
            ggda::cli::RunConfig cfg = resolve(attr_args, out_dir);
            ggda::cli::cmd_attribute(cfg, out_dir);
        } else if (eval_cmd->parsed()) {
            ggda::cli::RunConfig cfg = resolve(eval_args, out_dir);
            ggda::cli::cmd_eval(cfg, out_dir, eval_metric);
        } else if (bench_cmd->parsed()) {
            ggda::cli::RunConfig cfg = resolve(bench_args, out_dir);
            ggda::cli::cmd_bench(cfg, out_dir);
        }
    } catch (const ggda::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ggda::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
