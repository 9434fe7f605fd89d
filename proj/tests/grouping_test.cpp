#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

#include "ggda/grouping.hpp"
#include "test_util.hpp"

using namespace ggda;
using datahub::Dataset;
using grouping::Partition;
using numkit::Rng;

namespace {

void check_partition_invariants(const Partition& p, std::int64_t n_train) {
    std::set<std::int64_t> seen;
    for (const auto& g : p.groups) {
        REQUIRE(!g.empty());
        for (std::int64_t idx : g) {
            REQUIRE(idx >= 0);
            REQUIRE(idx < n_train);
            REQUIRE(seen.insert(idx).second);
        }
    }
    REQUIRE(static_cast<std::int64_t>(seen.size()) == n_train);
}

std::vector<std::int64_t> labels_of(const Partition& p, std::int64_t n) {
    std::vector<std::int64_t> lab(static_cast<std::size_t>(n), -1);
    for (std::size_t g = 0; g < p.groups.size(); ++g)
        for (std::int64_t idx : p.groups[g]) lab[static_cast<std::size_t>(idx)] = static_cast<std::int64_t>(g);
    return lab;
}

// Adjusted Rand index between two labelings.
double ari(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
    std::map<std::pair<std::int64_t, std::int64_t>, double> table;
    std::map<std::int64_t, double> row_sum, col_sum;
    const double n = static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[{a[i], b[i]}] += 1.0;
        row_sum[a[i]] += 1.0;
        col_sum[b[i]] += 1.0;
    }
    auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
    double sum_table = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [k, v] : table) sum_table += choose2(v);
    for (const auto& [k, v] : row_sum) sum_rows += choose2(v);
    for (const auto& [k, v] : col_sum) sum_cols += choose2(v);
    double expected = sum_rows * sum_cols / choose2(n);
    double max_index = 0.5 * (sum_rows + sum_cols);
    return (sum_table - expected) / (max_index - expected);
}

double variance_ratio(const Mat& X, const std::vector<bool>& in_class) {
    Vec mu = X.colwise().mean().transpose();
    Vec mu0 = Vec::Zero(X.cols()), mu1 = Vec::Zero(X.cols());
    double n0 = 0, n1 = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        if (in_class[static_cast<std::size_t>(i)]) {
            mu1 += X.row(i).transpose();
            n1 += 1;
        } else {
            mu0 += X.row(i).transpose();
            n0 += 1;
        }
    }
    mu0 /= n0;
    mu1 /= n1;
    double between = n0 * (mu0 - mu).squaredNorm() + n1 * (mu1 - mu).squaredNorm();
    double within = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const Vec& mug = in_class[static_cast<std::size_t>(i)] ? mu1 : mu0;
        within += (X.row(i).transpose() - mug).squaredNorm();
    }
    return between / within;
}

}  // namespace

TEST_CASE("random_partition edge sizes") {
    Rng rng(1);
    Partition singles = grouping::random_partition(12, 1, rng);
    CHECK(singles.num_groups() == 12);
    for (const auto& g : singles.groups) CHECK(g.size() == 1);

    Rng rng2(2);
    Partition whole = grouping::random_partition(12, 12, rng2);
    CHECK(whole.num_groups() == 1);
    CHECK(whole.groups[0].size() == 12);
}

TEST_CASE("random_partition chunk sizes and invariants") {
    Rng rng(3);
    Partition p = grouping::random_partition(10, 4, rng);
    REQUIRE(p.num_groups() == 3);
    std::multiset<std::size_t> sizes;
    for (const auto& g : p.groups) sizes.insert(g.size());
    CHECK(sizes == std::multiset<std::size_t>{4, 4, 2});
    check_partition_invariants(p, 10);
}

TEST_CASE("random_partition determinism") {
    Rng a(9), b(9);
    Partition pa = grouping::random_partition(40, 7, a);
    Partition pb = grouping::random_partition(40, 7, b);
    CHECK(pa.groups == pb.groups);
}

TEST_CASE("partition invariants hold over randomized inputs") {
    Rng meta(77);
    for (int trial = 0; trial < 200; ++trial) {
        std::int64_t n = 1 + static_cast<std::int64_t>(meta.next_below(200));
        std::int64_t size = 1 + static_cast<std::int64_t>(meta.next_below(static_cast<std::uint64_t>(n)));
        Rng rng(meta.next_u64());
        Partition p = grouping::random_partition(n, size, rng);
        check_partition_invariants(p, n);
    }
}

TEST_CASE("target_size_to_k ceiling arithmetic") {
    CHECK(grouping::target_size_to_k(60000, 1024) == 59);
    CHECK(grouping::target_size_to_k(100, 1) == 100);
    CHECK(grouping::target_size_to_k(7896, 256) == 31);
}

TEST_CASE("kmeans with k=1 yields one group") {
    Rng rng(5);
    Mat X(8, 2);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 2; ++j) X(i, j) = rng.next_normal();
    Partition p = grouping::kmeans(X, 1, {}, rng);
    CHECK(p.num_groups() == 1);
    CHECK(p.groups[0].size() == 8);
}

TEST_CASE("kmeans recovers duplicate locations exactly") {
    // 9 points at 3 distinct locations.
    Mat X(9, 2);
    double locs[3][2] = {{0, 0}, {10, 0}, {0, 10}};
    for (int i = 0; i < 9; ++i) {
        X(i, 0) = locs[i % 3][0];
        X(i, 1) = locs[i % 3][1];
    }
    Rng rng(7);
    Partition p = grouping::kmeans(X, 3, {}, rng);
    check_partition_invariants(p, 9);
    std::vector<std::int64_t> lab = labels_of(p, 9);
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j)
            if (i % 3 == j % 3)
                CHECK(lab[static_cast<std::size_t>(i)] == lab[static_cast<std::size_t>(j)]);
}

TEST_CASE("kmeans recovers well-separated blobs (ARI >= 0.95 over seeds)") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng gen(1000 + seed);
        Dataset ds = datahub::make_blobs(90, 2, 3, 12.0, gen);
        std::vector<std::int64_t> train = ds.train_rows();
        Mat X(static_cast<Eigen::Index>(train.size()), 2);
        std::vector<std::int64_t> truth;
        for (std::size_t i = 0; i < train.size(); ++i) {
            X.row(static_cast<Eigen::Index>(i)) = ds.features.row(train[i]);
            truth.push_back(ds.labels[static_cast<std::size_t>(train[i])]);
        }
        Rng rng(2000 + seed);
        Partition p = grouping::kmeans(numkit::whiten(X), 3, {}, rng);
        CHECK(ari(labels_of(p, static_cast<std::int64_t>(train.size())), truth) >= 0.95);
    }
}

TEST_CASE("kmeans inertia is non-increasing across iterations") {
    Rng meta(31);
    for (int trial = 0; trial < 25; ++trial) {
        int n = 20 + static_cast<int>(meta.next_below(60));
        int k = 2 + static_cast<int>(meta.next_below(5));
        Mat X(n, 3);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 3; ++j) X(i, j) = meta.next_normal();
        Rng rng(meta.next_u64());
        std::vector<double> trace;
        grouping::KMeansParams params;
        params.tol = 0.0;  // run all iterations
        params.max_iter = 25;
        grouping::kmeans(X, k, params, rng, &trace);
        for (std::size_t t = 1; t < trace.size(); ++t)
            CHECK(trace[t] <= trace[t - 1] + 1e-9);
    }
}

TEST_CASE("kmeans at k=n fulfils the singleton contract") {
    Rng rng(33);
    Mat X(12, 2);
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 2; ++j) X(i, j) = rng.next_normal();
    Partition p = grouping::kmeans(X, 12, {}, rng);
    check_partition_invariants(p, 12);
    CHECK(p.num_groups() == 12);
    for (const auto& g : p.groups) CHECK(g.size() == 1);
}

TEST_CASE("kmeans is deterministic in the seed") {
    Mat X(30, 2);
    Rng gen(35);
    for (int i = 0; i < 30; ++i)
        for (int j = 0; j < 2; ++j) X(i, j) = gen.next_normal();
    Rng a(36), b(36);
    Partition pa = grouping::kmeans(X, 4, {}, a);
    Partition pb = grouping::kmeans(X, 4, {}, b);
    CHECK(pa.groups == pb.groups);
}

TEST_CASE("make_features Raw equals whitened dataset features") {
    Rng gen(41);
    Dataset ds = datahub::make_blobs(30, 3, 2, 5.0, gen);
    models::ModelState dummy;
    dummy.arch = models::logreg(3, 2);
    dummy.theta = Vec::Zero(dummy.arch.param_count());
    Mat feats = grouping::make_features(ds, dummy, grouping::FeatureMode::Raw);

    std::vector<std::int64_t> train = ds.train_rows();
    Mat raw(static_cast<Eigen::Index>(train.size()), 3);
    for (std::size_t i = 0; i < train.size(); ++i)
        raw.row(static_cast<Eigen::Index>(i)) = ds.features.row(train[i]);
    CHECK(feats == numkit::whiten(raw));
}

TEST_CASE("duplicate points produce identical gradient features") {
    Rng gen(43);
    Dataset ds = datahub::make_blobs(20, 2, 2, 5.0, gen);
    std::vector<std::int64_t> train = ds.train_rows();
    ds.features.row(train[0]) = ds.features.row(train[1]);
    ds.labels[static_cast<std::size_t>(train[0])] = ds.labels[static_cast<std::size_t>(train[1])];

    models::TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.epochs = 40;
    cfg.batch_size = 8;
    cfg.seed = 2;
    auto [m, ckpts] = models::train(models::logreg(2, 2), ds, cfg);
    Mat feats = grouping::make_features(ds, m, grouping::FeatureMode::Grad);
    CHECK((feats.row(0) - feats.row(1)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient features separate flipped labels better than raw features") {
    Rng gen(45);
    Dataset clean = datahub::make_blobs(200, 2, 2, 6.0, gen);
    Rng flip_rng(46);
    auto [ds, rec] = datahub::flip_labels(clean, 0.2, flip_rng);

    models::TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.epochs = 60;
    cfg.batch_size = 16;
    cfg.weight_decay = 1e-3;
    cfg.seed = 4;
    auto [m, ckpts] = models::train(models::logreg(2, 2), ds, cfg);

    std::vector<bool> flipped(static_cast<std::size_t>(ds.n_train()), false);
    for (std::int64_t ti : rec.flipped_indices) flipped[static_cast<std::size_t>(ti)] = true;

    Mat raw = grouping::make_features(ds, m, grouping::FeatureMode::Raw);
    Mat grad = grouping::make_features(ds, m, grouping::FeatureMode::Grad);
    CHECK(variance_ratio(grad, flipped) > variance_ratio(raw, flipped));
}

TEST_CASE("build_partition covers all methods deterministically") {
    Rng gen(47);
    Dataset ds = datahub::make_blobs(60, 2, 2, 6.0, gen);
    models::TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.epochs = 30;
    cfg.batch_size = 8;
    cfg.seed = 6;
    auto [m, ckpts] = models::train(models::logreg(2, 2), ds, cfg);

    for (auto method : {grouping::Method::Random, grouping::Method::KMeans,
                        grouping::Method::ReprKMeans, grouping::Method::GradKMeans}) {
        Partition p1 = grouping::build_partition(ds, &m, method, 8, 99);
        Partition p2 = grouping::build_partition(ds, &m, method, 8, 99);
        check_partition_invariants(p1, ds.n_train());
        CHECK(p1.groups == p2.groups);
        CHECK(p1.method == method);
    }
}

TEST_CASE("partition json round trip") {
    Rng rng(51);
    Partition p = grouping::random_partition(17, 5, rng);
    p.method = grouping::Method::GradKMeans;
    p.target_group_size = 5;
    p.seed = 123;
    auto path = std::filesystem::temp_directory_path() / "ggda_grouping_test" / "part.json";
    std::filesystem::create_directories(path.parent_path());
    grouping::write_partition(p, path.string());
    Partition back = grouping::read_partition(path.string());
    CHECK(back.groups == p.groups);
    CHECK(back.method == p.method);
    CHECK(back.target_group_size == p.target_group_size);
    CHECK(back.seed == p.seed);
}
