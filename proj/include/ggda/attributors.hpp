#ifndef GGDA_ATTRIBUTORS_HPP
#define GGDA_ATTRIBUTORS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ggda/hessians.hpp"

namespace ggda {
namespace attributors {

enum class PropertyKind { TestPointLoss, MeanTestLoss, MeanTestLossOnSubset };

/// Differentiable scalar property of the model: the loss on one test point,
/// or the mean loss over the test split (optionally a subset of it).
struct PropertyFn {
    PropertyKind kind = PropertyKind::MeanTestLoss;
    std::vector<std::int64_t> test_indices;  // TestPointLoss: one entry; subset: several

    static PropertyFn test_point_loss(std::int64_t test_index);
    static PropertyFn mean_test_loss();
    static PropertyFn mean_test_loss_on_subset(std::vector<std::int64_t> indices);

    std::string name() const;
};

/// Per-group attribution scores. Sign convention across every method here:
/// positive score means removing the group is predicted (or, for the LOO
/// oracle, measured) to increase the property. With g = test loss, helpful
/// groups score positive.
struct AttributionScores {
    Vec scores;
    grouping::Partition partition;
    std::string method;
    std::string property;
    std::uint64_t seed = 0;
};

double eval_property(const PropertyFn& g, const models::ModelState& m,
                     const datahub::Dataset& ds);
Vec grad_property(const PropertyFn& g, const models::ModelState& m, const datahub::Dataset& ds);

/// Group influence functions: scores[j] = ∇gᵀ H⁻¹ ∇ℓ(z_j) under the given
/// Hessian strategy. Costs one inverse application of ∇g plus k batched
/// group gradients (per-sample Fisher strategies additionally pay their n
/// per-sample gradients).
AttributionScores influence(const hessians::ModelContext& ctx, const grouping::Partition& part,
                            const PropertyFn& g, const hessians::HessianStrategy& hs);

/// Same scores from a caller-supplied property gradient (length p,
/// unprojected). Lets callers attribute linear combinations of properties.
Vec influence_from_gradient(const hessians::ModelContext& ctx, const grouping::Partition& part,
                            const Vec& property_grad, const hessians::HessianStrategy& hs);

/// Checkpoint-summed identity-Hessian influence.
AttributionScores tracin(const models::Checkpoints& ckpts, const datahub::Dataset& ds,
                         const grouping::Partition& part, const PropertyFn& g,
                         double weight_decay = 0.0);

struct TrainerInputs {
    models::Architecture arch;
    models::TrainConfig cfg;
};

struct TrakOptions {
    int members = 10;
    double subsample_frac = 0.5;
    std::optional<int> proj_dim;
    double fisher_damp = 1e-3;
    std::uint64_t seed = 0;
    std::shared_ptr<const Mat> projection_override;  // test hook: fixed P for all members
};

std::uint64_t trak_member_seed(std::uint64_t base, int member);

/// Ensembled batched-empirical-Fisher influence: each member subsamples the
/// train rows, trains a fresh model, and scores the full partition with group
/// gradients restricted to its sample; the result is the member mean. Each
/// member draws its own projection from its derived seed.
AttributionScores trak(const TrainerInputs& trainer, const datahub::Dataset& ds,
                       const grouping::Partition& part, const PropertyFn& g,
                       const TrakOptions& opt);

AttributionScores trak_with_member_seeds(const TrainerInputs& trainer,
                                         const datahub::Dataset& ds,
                                         const grouping::Partition& part, const PropertyFn& g,
                                         const TrakOptions& opt,
                                         const std::vector<std::uint64_t>& member_seeds);

/// Retraining ground truth: scores[j] = mean over replicates of
/// g(A(D \ z_j)) - g(A(D)), one shared full-data baseline per replicate
/// (replicate r derives its training seed from cfg.seed and r, so an empty
/// removal scores exactly zero). Guarded to k * num_seeds <= 10000
/// retrainings.
AttributionScores loo_oracle(const models::Architecture& arch, const datahub::Dataset& ds,
                             const grouping::Partition& part, const PropertyFn& g,
                             const models::TrainConfig& cfg, int num_seeds);

}  // namespace attributors
}  // namespace ggda

#endif
