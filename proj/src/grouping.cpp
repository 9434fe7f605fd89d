#include "ggda/grouping.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

namespace ggda {
namespace grouping {

using json = nlohmann::ordered_json;

std::string method_name(Method m) {
    switch (m) {
        case Method::Random: return "random";
        case Method::KMeans: return "kmeans";
        case Method::ReprKMeans: return "repr_kmeans";
        case Method::GradKMeans: return "grad_kmeans";
    }
    return "random";
}

Method method_from_name(const std::string& name) {
    if (name == "random") return Method::Random;
    if (name == "kmeans") return Method::KMeans;
    if (name == "repr_kmeans") return Method::ReprKMeans;
    if (name == "grad_kmeans") return Method::GradKMeans;
    throw std::invalid_argument("unknown grouping method: " + name);
}

std::int64_t Partition::num_points() const {
    std::int64_t total = 0;
    for (const auto& g : groups) total += static_cast<std::int64_t>(g.size());
    return total;
}

void Partition::validate(std::int64_t n_train) const {
    if (groups.empty()) throw SchemaError("partition: no groups");
    std::set<std::int64_t> seen;
    for (const auto& g : groups) {
        if (g.empty()) throw SchemaError("partition: empty group");
        for (std::int64_t idx : g) {
            if (idx < 0 || idx >= n_train) throw SchemaError("partition: index out of range");
            if (!seen.insert(idx).second) throw SchemaError("partition: groups overlap");
        }
    }
    if (static_cast<std::int64_t>(seen.size()) != n_train)
        throw SchemaError("partition: does not cover all train indices");
}

Partition singleton_partition(std::int64_t n_train) {
    Partition p;
    p.method = Method::Random;
    p.target_group_size = 1;
    p.groups.resize(static_cast<std::size_t>(n_train));
    for (std::int64_t i = 0; i < n_train; ++i)
        p.groups[static_cast<std::size_t>(i)] = {i};
    return p;
}

Partition random_partition(std::int64_t n_train, std::int64_t group_size, numkit::Rng& rng) {
    if (group_size < 1 || group_size > n_train)
        throw std::invalid_argument("random_partition: need 1 <= group_size <= n_train");
    std::vector<std::int64_t> order(static_cast<std::size_t>(n_train));
    for (std::int64_t i = 0; i < n_train; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);

    Partition p;
    p.method = Method::Random;
    p.target_group_size = group_size;
    p.seed = rng.seed();
    for (std::int64_t start = 0; start < n_train; start += group_size) {
        std::int64_t stop = std::min(start + group_size, n_train);
        p.groups.emplace_back(order.begin() + start, order.begin() + stop);
    }
    return p;
}

std::int64_t target_size_to_k(std::int64_t n_train, std::int64_t group_size) {
    if (group_size < 1) throw std::invalid_argument("target_size_to_k: group_size < 1");
    return (n_train + group_size - 1) / group_size;
}

namespace {

double sq_dist(const Mat& X, Eigen::Index row, const Mat& centers, Eigen::Index c) {
    return (X.row(row) - centers.row(c)).squaredNorm();
}

// k-means++: D^2-weighted sampling of successive centers.
Mat seed_centers(const Mat& X, std::int64_t k, numkit::Rng& rng) {
    const Eigen::Index n = X.rows();
    Mat centers(k, X.cols());
    Eigen::Index first = static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(n)));
    centers.row(0) = X.row(first);

    Eigen::VectorXd d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = sq_dist(X, i, centers, 0);
    for (std::int64_t c = 1; c < k; ++c) {
        double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double r = rng.next_double() * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            // All remaining distances zero (duplicates); any point works.
            pick = static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(n)));
        }
        centers.row(c) = X.row(pick);
        for (Eigen::Index i = 0; i < n; ++i)
            d2(i) = std::min(d2(i), sq_dist(X, i, centers, c));
    }
    return centers;
}

}  // namespace

Partition kmeans(const Mat& features, std::int64_t k, const KMeansParams& params,
                 numkit::Rng& rng, std::vector<double>* inertia_trace) {
    const Eigen::Index n = features.rows();
    if (k < 1 || k > n) throw std::invalid_argument("kmeans: need 1 <= k <= n");

    Mat centers = seed_centers(features, k, rng);
    std::vector<std::int64_t> assign(static_cast<std::size_t>(n), 0);

    for (int iter = 0; iter < params.max_iter; ++iter) {
        // Assignment step; ties go to the lowest center index.
        for (Eigen::Index i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::int64_t best_c = 0;
            for (std::int64_t c = 0; c < k; ++c) {
                double d = sq_dist(features, i, centers, static_cast<Eigen::Index>(c));
                if (d < best) {
                    best = d;
                    best_c = c;
                }
            }
            assign[static_cast<std::size_t>(i)] = best_c;
        }

        // Empty-cluster repair: steal the farthest point from the largest cluster.
        std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
        for (std::int64_t a : assign) ++counts[static_cast<std::size_t>(a)];
        for (std::int64_t c = 0; c < k; ++c) {
            while (counts[static_cast<std::size_t>(c)] == 0) {
                std::int64_t donor =
                    static_cast<std::int64_t>(std::max_element(counts.begin(), counts.end()) -
                                              counts.begin());
                Eigen::Index far = -1;
                double far_d = -1.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    if (assign[static_cast<std::size_t>(i)] != donor) continue;
                    double d = sq_dist(features, i, centers, static_cast<Eigen::Index>(donor));
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                assign[static_cast<std::size_t>(far)] = c;
                --counts[static_cast<std::size_t>(donor)];
                ++counts[static_cast<std::size_t>(c)];
            }
        }

        // Update step.
        Mat new_centers = Mat::Zero(k, features.cols());
        for (Eigen::Index i = 0; i < n; ++i)
            new_centers.row(static_cast<Eigen::Index>(assign[static_cast<std::size_t>(i)])) +=
                features.row(i);
        for (std::int64_t c = 0; c < k; ++c)
            new_centers.row(static_cast<Eigen::Index>(c)) /=
                static_cast<double>(counts[static_cast<std::size_t>(c)]);

        double max_shift = 0.0;
        for (std::int64_t c = 0; c < k; ++c)
            max_shift = std::max(max_shift, (new_centers.row(static_cast<Eigen::Index>(c)) -
                                             centers.row(static_cast<Eigen::Index>(c)))
                                                .norm());
        centers = new_centers;

        if (inertia_trace) {
            double inertia = 0.0;
            for (Eigen::Index i = 0; i < n; ++i)
                inertia += sq_dist(features, i, centers,
                                   static_cast<Eigen::Index>(assign[static_cast<std::size_t>(i)]));
            inertia_trace->push_back(inertia);
        }
        if (max_shift <= params.tol) break;
    }

    Partition p;
    p.method = Method::KMeans;
    p.seed = rng.seed();
    p.groups.resize(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < n; ++i)
        p.groups[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])].push_back(i);
    // Final safety: assignment repair above guarantees nonempty clusters.
    p.validate(n);
    return p;
}

Mat make_features(const datahub::Dataset& ds, const models::ModelState& m, FeatureMode mode) {
    std::vector<std::int64_t> train = ds.train_rows();
    const auto n = static_cast<Eigen::Index>(train.size());
    Mat out;
    switch (mode) {
        case FeatureMode::Raw: {
            out.resize(n, ds.dim());
            for (Eigen::Index i = 0; i < n; ++i)
                out.row(i) = ds.features.row(train[static_cast<std::size_t>(i)]);
            break;
        }
        case FeatureMode::Repr: {
            for (Eigen::Index i = 0; i < n; ++i) {
                Vec r = models::hidden_repr(m, ds.train_feature(i));
                if (i == 0) out.resize(n, r.size());
                out.row(i) = r.transpose();
            }
            break;
        }
        case FeatureMode::Grad: {
            for (Eigen::Index i = 0; i < n; ++i) {
                Vec g = models::penult_grad(m, ds.train_feature(i), ds.train_label(i));
                if (i == 0) out.resize(n, g.size());
                out.row(i) = g.transpose();
            }
            break;
        }
    }
    return numkit::whiten(out);
}

Partition build_partition(const datahub::Dataset& ds, const models::ModelState* m,
                          Method method, std::int64_t group_size, std::uint64_t seed,
                          const KMeansParams& params) {
    std::int64_t n_train = ds.n_train();
    numkit::Rng rng(seed);
    Partition p;
    if (method == Method::Random) {
        p = random_partition(n_train, group_size, rng);
    } else {
        if (method != Method::KMeans && m == nullptr)
            throw std::invalid_argument("build_partition: model required for " + method_name(method));
        FeatureMode mode = (method == Method::KMeans)       ? FeatureMode::Raw
                           : (method == Method::ReprKMeans) ? FeatureMode::Repr
                                                            : FeatureMode::Grad;
        Mat feats;
        if (mode == FeatureMode::Raw && m == nullptr) {
            std::vector<std::int64_t> train = ds.train_rows();
            Mat raw(static_cast<Eigen::Index>(train.size()), ds.dim());
            for (std::size_t i = 0; i < train.size(); ++i)
                raw.row(static_cast<Eigen::Index>(i)) = ds.features.row(train[i]);
            feats = numkit::whiten(raw);
        } else {
            feats = make_features(ds, *m, mode);
        }
        p = kmeans(feats, target_size_to_k(n_train, group_size), params, rng);
    }
    p.method = method;
    p.target_group_size = group_size;
    p.seed = seed;
    p.validate(n_train);
    return p;
}

void write_partition(const Partition& part, const std::string& path) {
    json j;
    j["method"] = method_name(part.method);
    j["seed"] = part.seed;
    j["target_group_size"] = part.target_group_size;
    j["groups"] = part.groups;
    datahub::write_file_atomic(path, j.dump() + "\n");
}

Partition read_partition(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("partition: bad JSON: ") + e.what());
    }
    Partition p;
    try {
        p.method = method_from_name(j.at("method").get<std::string>());
        p.seed = j.at("seed").get<std::uint64_t>();
        p.target_group_size = j.at("target_group_size").get<std::int64_t>();
        p.groups = j.at("groups").get<std::vector<std::vector<std::int64_t>>>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("partition: missing field: ") + e.what());
    }
    p.validate(p.num_points());
    return p;
}

}  // namespace grouping
}  // namespace ggda
