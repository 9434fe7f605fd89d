#ifndef GGDA_CONFIG_HPP
#define GGDA_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ggda/grouping.hpp"
#include "ggda/hessians.hpp"
#include "ggda/models.hpp"

namespace ggda {
namespace cli {

struct DatasetConfig {
    std::string kind = "synthetic";  // synthetic | csv
    std::string path;
    std::string label_column = "label";
    double test_fraction = 0.2;  // applied to csv files without a split column
    std::int64_t n = 1000;
    std::int64_t d = 2;
    int classes = 2;
    double separation = 6.0;
    double flip_fraction = 0.0;  // 0 = no label corruption
    std::uint64_t seed = 0;
};

struct ArchConfig {
    std::string kind = "logreg";  // logreg | mlp
    std::vector<int> hidden;
};

struct TrainSection {
    models::TrainConfig cfg;
    int snapshot_every = 0;
};

struct GroupingConfig {
    std::string method = "random";
    std::int64_t group_size = 1;
    std::uint64_t seed = 0;
    grouping::KMeansParams kmeans;
};

struct HessianConfig {
    std::string kind = "identity";  // exact|identity|cg|lissa|emp_fisher|batched_emp_fisher
    double exact_damp = 0.0;
    double cg_tol = 1e-8;
    int cg_max_iter = 0;
    double lissa_damp = 1e-3;
    double lissa_scale = 50.0;
    int lissa_depth = 200;
    int lissa_repeat = 20;
    double fisher_damp = 1e-3;
    std::optional<int> proj_dim;
};

struct AttributionConfig {
    std::string method = "influence";  // influence | tracin | trak | loo
    HessianConfig hessian;
    std::string property = "mean_test_loss";  // mean_test_loss | test_point_loss
    std::int64_t test_index = 0;
    int trak_members = 10;
    double trak_subsample_frac = 0.5;
    std::optional<int> trak_proj_dim;
    int loo_num_seeds = 1;
    std::uint64_t seed = 0;
};

struct EvalConfig {
    std::vector<double> retrain_fractions{0.01, 0.05, 0.10, 0.20};
    std::vector<double> prune_fractions{0.25, 0.50, 0.75};
    int n_seeds = 10;
};

struct BenchConfig {
    std::vector<std::int64_t> group_sizes{1, 4, 16, 64};
    int reps = 3;
};

struct RunConfig {
    DatasetConfig dataset;
    ArchConfig arch;
    TrainSection train;
    GroupingConfig grouping;
    AttributionConfig attribution;
    EvalConfig eval;
    BenchConfig bench;
    std::string output_dir = "out";
};

/// Parses and validates a JSON config file. Unknown keys are rejected and
/// every violation reports its dotted field path via ConfigError.
RunConfig load_config(const std::string& path);

/// Replaces every per-module seed (dataset, train, grouping, attribution).
void override_seed(RunConfig& cfg, std::uint64_t seed);

models::Architecture make_architecture(const ArchConfig& arch, std::int64_t input_dim,
                                       int num_classes);
hessians::HessianStrategy make_strategy(const AttributionConfig& att);

}  // namespace cli
}  // namespace ggda

#endif
