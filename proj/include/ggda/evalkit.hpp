#ifndef GGDA_EVALKIT_HPP
#define GGDA_EVALKIT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ggda/attributors.hpp"

namespace ggda {
namespace evalkit {

enum class Direction { TopFirst, BottomFirst };

/// Resolved removal set: whole groups in score order up to the point budget,
/// with the boundary group sampled uniformly.
struct RemovalPlan {
    std::vector<std::int64_t> ordered_group_ids;
    double removal_fraction = 0.0;
    std::vector<std::int64_t> indices;  // train indices, unique, sorted
};

RemovalPlan build_removal_plan(const attributors::AttributionScores& scores, double fraction,
                               Direction direction, numkit::Rng& rng);

struct EvalReport {
    std::string metric;
    double baseline_mean = 0.0;
    double baseline_sem = 0.0;  // standard error over seeds
    struct Row {
        double fraction = 0.0;
        double mean = 0.0;
        double sem = 0.0;
        int n_seeds = 0;
        double runtime_s = 0.0;
    };
    std::vector<Row> rows;
    std::vector<std::uint64_t> seeds;
};

/// Retrains with the plan's rows removed, n_seeds times with seeds derived
/// from cfg.seed, and reports mean +/- stderr test accuracy next to the
/// full-data baseline under the same seeds. With TopFirst plans, lower
/// post-removal accuracy means better attribution.
EvalReport retraining_score(const RemovalPlan& plan, const models::Architecture& arch,
                            const datahub::Dataset& ds, const models::TrainConfig& cfg,
                            int n_seeds);

/// BottomFirst removal at each fraction; higher post-pruning accuracy means
/// better attribution.
EvalReport pruning_eval(const attributors::AttributionScores& scores,
                        const models::Architecture& arch, const datahub::Dataset& ds,
                        const models::TrainConfig& cfg, const std::vector<double>& fractions,
                        int n_seeds);

/// Area under the detected-flips vs checked-fraction curve when auditing
/// points ascending by their group's score (ties by index). 1 - f/2 for a
/// perfect ranking at flip fraction f; 0.5 for a random one.
double noisy_label_auc(const attributors::AttributionScores& scores,
                       const datahub::CorruptionRecord& corruption);

struct BenchResult {
    std::int64_t group_size = 0;
    double median_s = 0.0;
    std::int64_t passes = 0;   // batched train-gradient passes per run
    double speedup = 1.0;      // median_s(size 1) / median_s(this size)
    double pass_ratio = 1.0;   // passes(size 1) / passes(this size)
};

/// Times identity-Hessian group attribution (the TracIn core) across group
/// sizes against the singleton baseline. The train set is trimmed to the
/// largest size divisible by every requested group size so each partition
/// has equal-size groups and the pass ratio at size s is exactly s. Runs
/// strictly serially.
std::vector<BenchResult> bench_da_vs_ggda(const models::ModelState& m,
                                          const datahub::Dataset& ds,
                                          const hessians::HessianStrategy& hs,
                                          const std::vector<std::int64_t>& group_sizes,
                                          int reps, std::uint64_t seed);

// Report files: JSON plus a flat CSV for plotting.
void write_report(const EvalReport& report, const std::string& json_path);
void write_bench_csv(const std::vector<BenchResult>& results, const std::string& path);

}  // namespace evalkit
}  // namespace ggda

#endif
