#include "ggda/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include <filesystem>

#include <nlohmann/json.hpp>

namespace ggda {
namespace evalkit {

using attributors::AttributionScores;
using datahub::Dataset;
using json = nlohmann::ordered_json;

RemovalPlan build_removal_plan(const AttributionScores& scores, double fraction,
                               Direction direction, numkit::Rng& rng) {
    if (fraction <= 0.0 || fraction >= 1.0)
        throw std::invalid_argument("build_removal_plan: fraction must be in (0,1)");
    const auto k = static_cast<std::int64_t>(scores.partition.num_groups());
    if (scores.scores.size() != k)
        throw std::invalid_argument("build_removal_plan: scores/partition mismatch");

    RemovalPlan plan;
    plan.removal_fraction = fraction;
    plan.ordered_group_ids.resize(static_cast<std::size_t>(k));
    std::iota(plan.ordered_group_ids.begin(), plan.ordered_group_ids.end(), 0);
    std::stable_sort(plan.ordered_group_ids.begin(), plan.ordered_group_ids.end(),
                     [&](std::int64_t a, std::int64_t b) {
                         double sa = scores.scores(static_cast<Eigen::Index>(a));
                         double sb = scores.scores(static_cast<Eigen::Index>(b));
                         if (sa != sb)
                             return direction == Direction::TopFirst ? sa > sb : sa < sb;
                         return a < b;
                     });

    const std::int64_t n_train = scores.partition.num_points();
    auto budget = static_cast<std::int64_t>(std::llround(fraction * static_cast<double>(n_train)));
    for (std::int64_t gid : plan.ordered_group_ids) {
        if (budget <= 0) break;
        const auto& members = scores.partition.groups[static_cast<std::size_t>(gid)];
        auto size = static_cast<std::int64_t>(members.size());
        if (size <= budget) {
            plan.indices.insert(plan.indices.end(), members.begin(), members.end());
            budget -= size;
        } else {
            // Boundary group: sample the remainder uniformly.
            std::vector<std::int64_t> picks = rng.sample_without_replacement(size, budget);
            for (std::int64_t pi : picks)
                plan.indices.push_back(members[static_cast<std::size_t>(pi)]);
            budget = 0;
        }
    }
    std::sort(plan.indices.begin(), plan.indices.end());
    return plan;
}

namespace {

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

MeanStderr summarize(const std::vector<double>& xs) {
    MeanStderr out;
    const double n = static_cast<double>(xs.size());
    out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return out;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

EvalReport retraining_score(const RemovalPlan& plan, const models::Architecture& arch,
                            const Dataset& ds, const models::TrainConfig& cfg, int n_seeds) {
    if (n_seeds < 1) throw std::invalid_argument("retraining_score: n_seeds must be >= 1");

    EvalReport report;
    report.metric = "retraining_score";
    Dataset reduced = datahub::remove_train_rows(ds, plan.indices);

    std::vector<double> base_acc, removed_acc;
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < n_seeds; ++r) {
        models::TrainConfig cfg_r = cfg;
        cfg_r.seed = numkit::Rng::mix(cfg.seed, static_cast<std::uint64_t>(r));
        report.seeds.push_back(cfg_r.seed);
        auto [full_state, c1] = models::train(arch, ds, cfg_r);
        base_acc.push_back(models::accuracy(full_state, ds, datahub::Split::Test));
        auto [red_state, c2] = models::train(arch, reduced, cfg_r);
        removed_acc.push_back(models::accuracy(red_state, ds, datahub::Split::Test));
    }
    auto t1 = std::chrono::steady_clock::now();

    MeanStderr base = summarize(base_acc);
    MeanStderr rem = summarize(removed_acc);
    report.baseline_mean = base.mean;
    report.baseline_sem = base.stderr_;
    report.rows.push_back({plan.removal_fraction, rem.mean, rem.stderr_, n_seeds,
                           std::chrono::duration<double>(t1 - t0).count()});
    return report;
}

EvalReport pruning_eval(const AttributionScores& scores, const models::Architecture& arch,
                        const Dataset& ds, const models::TrainConfig& cfg,
                        const std::vector<double>& fractions, int n_seeds) {
    if (fractions.empty()) throw std::invalid_argument("pruning_eval: no fractions");
    EvalReport report;
    report.metric = "pruning";

    bool have_baseline = false;
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
        numkit::Rng plan_rng(numkit::Rng::mix(cfg.seed, 0xB0F + fi));
        RemovalPlan plan = build_removal_plan(scores, fractions[fi], Direction::BottomFirst, plan_rng);
        EvalReport one = retraining_score(plan, arch, ds, cfg, n_seeds);
        if (!have_baseline) {
            report.baseline_mean = one.baseline_mean;
            report.baseline_sem = one.baseline_sem;
            report.seeds = one.seeds;
            have_baseline = true;
        }
        report.rows.push_back(one.rows.front());
    }
    return report;
}

double noisy_label_auc(const AttributionScores& scores,
                       const datahub::CorruptionRecord& corruption) {
    const std::int64_t n_train = scores.partition.num_points();
    if (corruption.flipped_indices.empty())
        throw std::invalid_argument("noisy_label_auc: no flipped labels");

    // Each point inherits its group's score.
    std::vector<double> point_score(static_cast<std::size_t>(n_train));
    for (std::size_t g = 0; g < scores.partition.groups.size(); ++g)
        for (std::int64_t idx : scores.partition.groups[g])
            point_score[static_cast<std::size_t>(idx)] = scores.scores(static_cast<Eigen::Index>(g));

    std::vector<std::int64_t> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        double sa = point_score[static_cast<std::size_t>(a)];
        double sb = point_score[static_cast<std::size_t>(b)];
        if (sa != sb) return sa < sb;
        return a < b;
    });

    std::set<std::int64_t> flipped(corruption.flipped_indices.begin(),
                                   corruption.flipped_indices.end());
    const double total_flips = static_cast<double>(flipped.size());

    // Trapezoid over per-point steps of the detected-fraction curve.
    double auc = 0.0;
    double detected = 0.0;
    double y_prev = 0.0;
    for (std::int64_t i = 0; i < n_train; ++i) {
        if (flipped.count(order[static_cast<std::size_t>(i)])) detected += 1.0;
        double y = detected / total_flips;
        auc += 0.5 * (y + y_prev) / static_cast<double>(n_train);
        y_prev = y;
    }
    return auc;
}

std::vector<BenchResult> bench_da_vs_ggda(const models::ModelState& m, const Dataset& ds,
                                          const hessians::HessianStrategy& hs,
                                          const std::vector<std::int64_t>& group_sizes,
                                          int reps, std::uint64_t seed) {
    if (reps < 1) throw std::invalid_argument("bench: reps must be >= 1");
    if (std::find(group_sizes.begin(), group_sizes.end(), 1) == group_sizes.end())
        throw std::invalid_argument("bench: group_sizes must include 1");

    // Trim the train set to a common multiple of all sizes so every group is
    // full-size and pass ratios come out exact.
    std::int64_t lcm = 1;
    for (std::int64_t s : group_sizes) {
        if (s < 1) throw std::invalid_argument("bench: group size < 1");
        lcm = std::lcm(lcm, s);
    }
    const std::int64_t n_train = ds.n_train();
    std::int64_t trimmed = (n_train / lcm) * lcm;
    if (trimmed < 1) throw std::invalid_argument("bench: train set smaller than size lcm");
    std::vector<std::int64_t> drop;
    for (std::int64_t i = trimmed; i < n_train; ++i) drop.push_back(i);
    Dataset bench_ds = datahub::remove_train_rows(ds, drop);

    hessians::ModelContext ctx;
    ctx.model = &m;
    ctx.dataset = &bench_ds;
    attributors::PropertyFn g = attributors::PropertyFn::mean_test_loss();
    Vec gvec = attributors::grad_property(g, m, bench_ds);

    std::vector<BenchResult> results;
    double base_median = 0.0;
    std::int64_t base_passes = 0;
    for (std::int64_t s : group_sizes) {
        numkit::Rng rng(numkit::Rng::mix(seed, static_cast<std::uint64_t>(s)));
        grouping::Partition part = grouping::random_partition(trimmed, s, rng);

        std::vector<double> times;
        std::int64_t passes = 0;
        for (int rep = 0; rep < reps; ++rep) {
            models::reset_pass_counts();
            auto t0 = std::chrono::steady_clock::now();
            Vec scores = attributors::influence_from_gradient(ctx, part, gvec, hs);
            auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double>(t1 - t0).count());
            passes = models::pass_counts().train_grad;
            (void)scores;
        }
        std::sort(times.begin(), times.end());
        double median = times[times.size() / 2];

        BenchResult r;
        r.group_size = s;
        r.median_s = median;
        r.passes = passes;
        if (s == 1) {
            base_median = median;
            base_passes = passes;
        }
        results.push_back(r);
    }
    for (auto& r : results) {
        r.speedup = base_median / r.median_s;
        r.pass_ratio = static_cast<double>(base_passes) / static_cast<double>(r.passes);
    }
    return results;
}

void write_report(const EvalReport& report, const std::string& json_path) {
    json j;
    j["metric"] = report.metric;
    j["baseline"] = {{"mean", report.baseline_mean}, {"stderr", report.baseline_sem}};
    j["seeds"] = report.seeds;
    j["rows"] = json::array();
    for (const auto& row : report.rows)
        j["rows"].push_back({{"fraction", row.fraction},
                             {"mean", row.mean},
                             {"stderr", row.sem},
                             {"n_seeds", row.n_seeds},
                             {"runtime_s", row.runtime_s}});
    datahub::write_file_atomic(json_path, j.dump(2) + "\n");

    std::ostringstream csv;
    csv << "metric,fraction,mean,stderr,n_seeds,runtime_s\n";
    csv << report.metric << ",0," << format_double(report.baseline_mean) << ","
        << format_double(report.baseline_sem) << "," << report.seeds.size() << ",0\n";
    for (const auto& row : report.rows)
        csv << report.metric << "," << format_double(row.fraction) << ","
            << format_double(row.mean) << "," << format_double(row.sem) << "," << row.n_seeds
            << "," << format_double(row.runtime_s) << "\n";
    std::filesystem::path csv_path(json_path);
    csv_path.replace_extension(".csv");
    datahub::write_file_atomic(csv_path.string(), csv.str());
}

void write_bench_csv(const std::vector<BenchResult>& results, const std::string& path) {
    std::ostringstream csv;
    csv << "group_size,median_s,passes,speedup\n";
    for (const auto& r : results)
        csv << r.group_size << "," << format_double(r.median_s) << "," << r.passes << ","
            << format_double(r.speedup) << "\n";
    datahub::write_file_atomic(path, csv.str());
}

}  // namespace evalkit
}  // namespace ggda
