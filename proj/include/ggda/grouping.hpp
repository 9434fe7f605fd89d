#ifndef GGDA_GROUPING_HPP
#define GGDA_GROUPING_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ggda/datahub.hpp"
#include "ggda/models.hpp"
#include "ggda/numkit.hpp"

namespace ggda {
namespace grouping {

enum class Method { Random, KMeans, ReprKMeans, GradKMeans };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

/// Disjoint, exhaustive, nonempty grouping of train indices.
struct Partition {
    std::vector<std::vector<std::int64_t>> groups;
    Method method = Method::Random;
    std::int64_t target_group_size = 1;
    std::uint64_t seed = 0;

    std::int64_t num_groups() const { return static_cast<std::int64_t>(groups.size()); }
    std::int64_t num_points() const;
    void validate(std::int64_t n_train) const;  // throws SchemaError
};

/// One group per train index, in index order.
Partition singleton_partition(std::int64_t n_train);

/// Shuffle then chunk into ceil(n/group_size) groups; the last may be smaller.
Partition random_partition(std::int64_t n_train, std::int64_t group_size, numkit::Rng& rng);

/// ceil(n_train / group_size): the k used so group-size sweeps are comparable
/// across grouping methods.
std::int64_t target_size_to_k(std::int64_t n_train, std::int64_t group_size);

struct KMeansParams {
    double tol = 1e-3;   // max center shift (L2) at which to stop
    int max_iter = 60;
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are repaired by
/// stealing the farthest point from the largest cluster. `inertia_trace`
/// (when given) receives the within-cluster sum of squares after each update.
Partition kmeans(const Mat& features, std::int64_t k, const KMeansParams& params,
                 numkit::Rng& rng, std::vector<double>* inertia_trace = nullptr);

enum class FeatureMode { Raw, Repr, Grad };

/// Per-train-row clustering features, whitened: Raw = dataset features,
/// Repr = hidden representations, Grad = loss gradients w.r.t. the
/// penultimate activations.
Mat make_features(const datahub::Dataset& ds, const models::ModelState& m, FeatureMode mode);

/// Full grouping pipeline for one method at one target group size. The model
/// may be null for Random/KMeans.
Partition build_partition(const datahub::Dataset& ds, const models::ModelState* m,
                          Method method, std::int64_t group_size, std::uint64_t seed,
                          const KMeansParams& params = {});

void write_partition(const Partition& part, const std::string& path);
Partition read_partition(const std::string& path);

}  // namespace grouping
}  // namespace ggda

#endif
