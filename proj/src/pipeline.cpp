#include "ggda/pipeline.hpp"

#include <filesystem>

#include <nlohmann/json.hpp>

#include "ggda/attributors.hpp"
#include "ggda/evalkit.hpp"

namespace ggda {
namespace cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::pair<datahub::Dataset, std::optional<datahub::CorruptionRecord>> build_dataset(
    const RunConfig& cfg) {
    const DatasetConfig& d = cfg.dataset;
    datahub::Dataset ds;
    if (d.kind == "csv") {
        if (!fs::exists(d.path)) throw ConfigError("dataset.path", "file not found: " + d.path);
        ds = datahub::load_csv(d.path, d.label_column);
        if (ds.test_rows().empty()) {
            numkit::Rng split_rng(numkit::Rng::mix(d.seed, 0x511717));
            ds = datahub::stratified_split(ds, 1.0 - d.test_fraction, split_rng);
        }
    } else {
        numkit::Rng rng(d.seed);
        ds = datahub::make_blobs(d.n, d.d, d.classes, d.separation, rng);
    }

    std::optional<datahub::CorruptionRecord> corruption;
    if (d.flip_fraction > 0.0) {
        numkit::Rng flip_rng(numkit::Rng::mix(d.seed, 0xF11B));
        auto [corrupted, rec] = datahub::flip_labels(ds, d.flip_fraction, flip_rng);
        ds = std::move(corrupted);
        corruption = std::move(rec);
    }
    return {std::move(ds), std::move(corruption)};
}

namespace {

std::string artifact(const std::string& out_dir, const std::string& name) {
    return (fs::path(out_dir) / name).string();
}

models::Checkpoints load_checkpoints(const std::string& out_dir) {
    std::string path = artifact(out_dir, "checkpoints.json");
    if (!fs::exists(path))
        throw IoError("missing " + path + " (run `ggda train` first)");
    return models::read_checkpoints(path);
}

attributors::AttributionScores compute_scores(const RunConfig& cfg,
                                              const datahub::Dataset& ds,
                                              const grouping::Partition& part,
                                              const models::Checkpoints& ckpts) {
    const AttributionConfig& att = cfg.attribution;
    attributors::PropertyFn g =
        (att.property == "test_point_loss")
            ? attributors::PropertyFn::test_point_loss(att.test_index)
            : attributors::PropertyFn::mean_test_loss();

    if (att.method == "tracin")
        return attributors::tracin(ckpts, ds, part, g, cfg.train.cfg.weight_decay);

    if (att.method == "trak") {
        attributors::TrainerInputs trainer{
            make_architecture(cfg.arch, ds.dim(), ds.num_classes), cfg.train.cfg};
        attributors::TrakOptions opt;
        opt.members = att.trak_members;
        opt.subsample_frac = att.trak_subsample_frac;
        opt.proj_dim = att.trak_proj_dim;
        opt.fisher_damp = att.hessian.fisher_damp;
        opt.seed = att.seed;
        return attributors::trak(trainer, ds, part, g, opt);
    }

    if (att.method == "loo") {
        models::Architecture arch = make_architecture(cfg.arch, ds.dim(), ds.num_classes);
        return attributors::loo_oracle(arch, ds, part, g, cfg.train.cfg, att.loo_num_seeds);
    }

    hessians::ModelContext ctx;
    ctx.model = &ckpts.states.back();
    ctx.dataset = &ds;
    ctx.weight_decay = cfg.train.cfg.weight_decay;
    ctx.partition = &part;
    return attributors::influence(ctx, part, g, make_strategy(att));
}

}  // namespace

void cmd_train(const RunConfig& cfg, const std::string& out_dir) {
    auto [ds, corruption] = build_dataset(cfg);
    models::Architecture arch = make_architecture(cfg.arch, ds.dim(), ds.num_classes);
    auto [state, ckpts] = models::train(arch, ds, cfg.train.cfg, cfg.train.snapshot_every);
    models::write_checkpoints(ckpts, artifact(out_dir, "checkpoints.json"));

    json summary;
    summary["train_accuracy"] = models::accuracy(state, ds, datahub::Split::Train);
    summary["test_accuracy"] = models::accuracy(state, ds, datahub::Split::Test);
    summary["test_loss"] = models::mean_split_loss(state, ds, datahub::Split::Test);
    summary["n_train"] = ds.n_train();
    summary["n_test"] = ds.n_test();
    summary["p"] = arch.param_count();
    summary["checkpoints"] = ckpts.states.size();
    datahub::write_file_atomic(artifact(out_dir, "train_summary.json"), summary.dump(2) + "\n");
}

void cmd_group(const RunConfig& cfg, const std::string& out_dir) {
    auto [ds, corruption] = build_dataset(cfg);
    grouping::Method method = grouping::method_from_name(cfg.grouping.method);

    const models::ModelState* model = nullptr;
    models::Checkpoints ckpts;
    if (method == grouping::Method::ReprKMeans || method == grouping::Method::GradKMeans) {
        ckpts = load_checkpoints(out_dir);
        model = &ckpts.states.back();
    }
    grouping::Partition part = grouping::build_partition(ds, model, method,
                                                         cfg.grouping.group_size,
                                                         cfg.grouping.seed, cfg.grouping.kmeans);
    grouping::write_partition(part, artifact(out_dir, "partition.json"));
}

void cmd_attribute(const RunConfig& cfg, const std::string& out_dir) {
    auto [ds, corruption] = build_dataset(cfg);
    grouping::Partition part = grouping::read_partition(artifact(out_dir, "partition.json"));
    part.validate(ds.n_train());
    models::Checkpoints ckpts;
    if (cfg.attribution.method != "loo" && cfg.attribution.method != "trak")
        ckpts = load_checkpoints(out_dir);
    attributors::AttributionScores scores = compute_scores(cfg, ds, part, ckpts);

    datahub::ScoreFile sf;
    sf.method = scores.method;
    sf.grouping = cfg.grouping.method;
    sf.group_size = part.target_group_size;
    sf.seed = cfg.attribution.seed;
    sf.group_members = part.groups;
    sf.scores.assign(scores.scores.data(), scores.scores.data() + scores.scores.size());
    datahub::write_scores(sf, artifact(out_dir, "scores.json"));
}

void cmd_eval(const RunConfig& cfg, const std::string& out_dir, const std::string& metric) {
    auto [ds, corruption] = build_dataset(cfg);
    datahub::ScoreFile sf = datahub::read_scores(artifact(out_dir, "scores.json"));

    attributors::AttributionScores scores;
    scores.method = sf.method;
    scores.seed = sf.seed;
    scores.partition.groups = sf.group_members;
    scores.partition.method = grouping::method_from_name(sf.grouping);
    scores.partition.target_group_size = sf.group_size;
    scores.partition.validate(ds.n_train());
    scores.scores = Eigen::Map<const Vec>(sf.scores.data(),
                                          static_cast<Eigen::Index>(sf.scores.size()));

    models::Architecture arch = make_architecture(cfg.arch, ds.dim(), ds.num_classes);

    if (metric == "retrain") {
        evalkit::EvalReport report;
        report.metric = "retraining_score";
        bool first = true;
        for (std::size_t fi = 0; fi < cfg.eval.retrain_fractions.size(); ++fi) {
            numkit::Rng rng(numkit::Rng::mix(cfg.attribution.seed, 0xE7A + fi));
            evalkit::RemovalPlan plan = evalkit::build_removal_plan(
                scores, cfg.eval.retrain_fractions[fi], evalkit::Direction::TopFirst, rng);
            evalkit::EvalReport one =
                evalkit::retraining_score(plan, arch, ds, cfg.train.cfg, cfg.eval.n_seeds);
            if (first) {
                report.baseline_mean = one.baseline_mean;
                report.baseline_sem = one.baseline_sem;
                report.seeds = one.seeds;
                first = false;
            }
            report.rows.push_back(one.rows.front());
        }
        evalkit::write_report(report, artifact(out_dir, "eval_retrain.json"));
    } else if (metric == "prune") {
        evalkit::EvalReport report = evalkit::pruning_eval(scores, arch, ds, cfg.train.cfg,
                                                           cfg.eval.prune_fractions,
                                                           cfg.eval.n_seeds);
        evalkit::write_report(report, artifact(out_dir, "eval_prune.json"));
    } else if (metric == "noisy") {
        if (!corruption)
            throw ConfigError("dataset.flip_fraction",
                              "noisy-label eval needs flip_fraction > 0");
        double auc = evalkit::noisy_label_auc(scores, *corruption);
        json j;
        j["metric"] = "noisy_label_auc";
        j["auc"] = auc;
        j["flip_fraction"] = corruption->fraction;
        j["n_flips"] = corruption->flipped_indices.size();
        datahub::write_file_atomic(artifact(out_dir, "eval_noisy.json"), j.dump(2) + "\n");
    } else {
        throw ConfigError("metric", "must be retrain|prune|noisy");
    }
}

void cmd_bench(const RunConfig& cfg, const std::string& out_dir) {
    auto [ds, corruption] = build_dataset(cfg);
    models::Checkpoints ckpts = load_checkpoints(out_dir);
    hessians::HessianStrategy hs = make_strategy(cfg.attribution);
    std::vector<evalkit::BenchResult> results =
        evalkit::bench_da_vs_ggda(ckpts.states.back(), ds, hs, cfg.bench.group_sizes,
                                  cfg.bench.reps, cfg.attribution.seed);
    evalkit::write_bench_csv(results, artifact(out_dir, "bench.csv"));
}

}  // namespace cli
}  // namespace ggda
