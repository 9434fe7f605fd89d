#ifndef GGDA_HESSIANS_HPP
#define GGDA_HESSIANS_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ggda/grouping.hpp"
#include "ggda/models.hpp"
#include "ggda/numkit.hpp"

namespace ggda {
namespace hessians {

enum class StrategyKind { Exact, Identity, Cg, Lissa, EmpFisher, BatchedEmpFisher };

std::string strategy_name(StrategyKind k);

/// Named recipe for v -> H^{-1} v. Fisher variants optionally operate in a
/// randomly projected gradient space; when they do, every gradient entering
/// the attribution (train groups and the property gradient) is projected
/// with the same matrix.
struct HessianStrategy {
    StrategyKind kind = StrategyKind::Identity;
    std::uint64_t seed = 0;

    double exact_damp = 0.0;  // non-PD exact Hessians are retried with 1e-3

    double cg_tol = 1e-8;
    int cg_max_iter = 0;  // 0 = problem dimension

    double lissa_damp = 1e-3;
    double lissa_scale = 50.0;
    int lissa_depth = 200;
    int lissa_repeat = 20;

    double fisher_damp = 1e-3;
    std::optional<int> proj_dim;
    std::shared_ptr<const Mat> projection_override;  // test hook: fixed P

    static HessianStrategy exact(double damp = 0.0);
    static HessianStrategy identity();
    static HessianStrategy cg(double tol = 1e-8, int max_iter = 0);
    static HessianStrategy lissa(double damp = 1e-3, double scale = 50.0, int depth = 200,
                                 int repeat = 20, std::uint64_t seed = 0);
    static HessianStrategy emp_fisher(std::optional<int> proj_dim = std::nullopt,
                                      double damp = 1e-3, std::uint64_t seed = 0);
    static HessianStrategy batched_emp_fisher(std::optional<int> proj_dim = std::nullopt,
                                              double damp = 1e-3, std::uint64_t seed = 0);
};

/// Everything a strategy needs to realize its Hessian surrogate: the trained
/// model, its dataset, the weight-decay term of the trained objective, the
/// partition (batched Fisher), and an optional restriction of the train rows
/// in scope (TRAK subsampling). An empty train_subset means all train rows.
struct ModelContext {
    const models::ModelState* model = nullptr;
    const datahub::Dataset* dataset = nullptr;
    double weight_decay = 0.0;
    const grouping::Partition* partition = nullptr;
    std::vector<std::int64_t> train_subset;

    std::vector<std::int64_t> rows_in_scope() const;
};

/// Gradient basis of an empirical Fisher: F = basisᵀ basis, regularized with
/// damp on the diagonal. Rows are per-sample or per-group loss gradients,
/// possibly projected.
struct FisherAccumulator {
    Mat basis;
    double damp = 0.0;

    Mat matrix() const;          // basisᵀ basis
    Vec solve(const Vec& v) const;  // (matrix() + damp I)^{-1} v
};

/// Accumulates (optionally projected) group loss gradients over the given
/// partition, restricted to ctx.train_subset when set. Pass
/// grouping::singleton_partition for the per-sample Fisher.
FisherAccumulator build_fisher(const ModelContext& ctx, const grouping::Partition& part,
                               std::optional<int> proj_dim, double damp, numkit::Rng& rng,
                               const Mat* projection_override = nullptr);

/// A realized strategy: apply() maps v to H^{-1} v. When `projection` is set,
/// apply() expects and returns vectors in the projected space and callers
/// must premultiply gradients by projectionᵀ.
struct InverseOperator {
    std::function<Vec(const Vec&)> apply;
    std::optional<Mat> projection;  // p x d
};

/// Builds the operator once (factorization, Fisher basis). `group_grads`,
/// when given, supplies precomputed unprojected group gradients (k x p, rows
/// aligned with ctx.partition) so BatchedEmpFisher reuses them instead of
/// recomputing.
InverseOperator make_inverse_operator(const HessianStrategy& hs, const ModelContext& ctx,
                                      const Mat* group_grads = nullptr);

/// One-shot strategy application. v must already live in the projected space
/// for projecting strategies.
Vec apply_inverse(const HessianStrategy& hs, const ModelContext& ctx, const Vec& v);

/// Checks the binary-classification identity ∇ℓ∇ℓᵀ = C(T)·∇f∇fᵀ for the
/// margin loss ℓ = log(1+exp(-y f/T)) on every train row of ds, where f is
/// the logit margin. Deviations are relative to the largest entry of
/// C(T)·∇f∇fᵀ per point.
struct TrakEquivalenceReport {
    double max_proportionality_deviation = 0.0;
    double max_ct_4t2_error = 0.0;  // max |C(T)·4T² - 1| across points
    int points_checked = 0;
};

TrakEquivalenceReport trak_fisher_equivalence_check(const models::ModelState& m,
                                                    const datahub::Dataset& ds, double T_temp);

}  // namespace hessians
}  // namespace ggda

#endif
