#include "ggda/hessians.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace ggda {
namespace hessians {

std::string strategy_name(StrategyKind k) {
    switch (k) {
        case StrategyKind::Exact: return "exact";
        case StrategyKind::Identity: return "identity";
        case StrategyKind::Cg: return "cg";
        case StrategyKind::Lissa: return "lissa";
        case StrategyKind::EmpFisher: return "emp_fisher";
        case StrategyKind::BatchedEmpFisher: return "batched_emp_fisher";
    }
    return "identity";
}

HessianStrategy HessianStrategy::exact(double damp) {
    HessianStrategy s;
    s.kind = StrategyKind::Exact;
    s.exact_damp = damp;
    return s;
}

HessianStrategy HessianStrategy::identity() {
    HessianStrategy s;
    s.kind = StrategyKind::Identity;
    return s;
}

HessianStrategy HessianStrategy::cg(double tol, int max_iter) {
    HessianStrategy s;
    s.kind = StrategyKind::Cg;
    s.cg_tol = tol;
    s.cg_max_iter = max_iter;
    return s;
}

HessianStrategy HessianStrategy::lissa(double damp, double scale, int depth, int repeat,
                                       std::uint64_t seed) {
    HessianStrategy s;
    s.kind = StrategyKind::Lissa;
    s.lissa_damp = damp;
    s.lissa_scale = scale;
    s.lissa_depth = depth;
    s.lissa_repeat = repeat;
    s.seed = seed;
    return s;
}

HessianStrategy HessianStrategy::emp_fisher(std::optional<int> proj_dim, double damp,
                                            std::uint64_t seed) {
    HessianStrategy s;
    s.kind = StrategyKind::EmpFisher;
    s.proj_dim = proj_dim;
    s.fisher_damp = damp;
    s.seed = seed;
    return s;
}

HessianStrategy HessianStrategy::batched_emp_fisher(std::optional<int> proj_dim, double damp,
                                                    std::uint64_t seed) {
    HessianStrategy s = emp_fisher(proj_dim, damp, seed);
    s.kind = StrategyKind::BatchedEmpFisher;
    return s;
}

std::vector<std::int64_t> ModelContext::rows_in_scope() const {
    if (!train_subset.empty()) return train_subset;
    std::vector<std::int64_t> all(static_cast<std::size_t>(dataset->n_train()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int64_t>(i);
    return all;
}

Mat FisherAccumulator::matrix() const { return basis.transpose() * basis; }

Vec FisherAccumulator::solve(const Vec& v) const {
    Mat F = matrix();
    F.diagonal().array() += damp;
    return numkit::solve_spd(F, v);
}

namespace {

// Group gradients over the partition, restricted to the rows in scope.
// Groups that fall entirely outside the scope contribute a zero row.
Mat group_gradient_matrix(const ModelContext& ctx, const grouping::Partition& part) {
    const auto p = static_cast<Eigen::Index>(ctx.model->theta.size());
    Mat G(static_cast<Eigen::Index>(part.num_groups()), p);
    std::set<std::int64_t> scope;
    if (!ctx.train_subset.empty())
        scope.insert(ctx.train_subset.begin(), ctx.train_subset.end());
    for (std::size_t j = 0; j < part.groups.size(); ++j) {
        std::vector<std::int64_t> members;
        if (scope.empty()) {
            members = part.groups[j];
        } else {
            for (std::int64_t idx : part.groups[j])
                if (scope.count(idx)) members.push_back(idx);
        }
        G.row(static_cast<Eigen::Index>(j)) =
            models::grad_group(*ctx.model, *ctx.dataset, members).transpose();
    }
    return G;
}

}  // namespace

FisherAccumulator build_fisher(const ModelContext& ctx, const grouping::Partition& part,
                               std::optional<int> proj_dim, double damp, numkit::Rng& rng,
                               const Mat* projection_override) {
    FisherAccumulator acc;
    acc.damp = damp;
    Mat G = group_gradient_matrix(ctx, part);
    if (projection_override) {
        acc.basis = numkit::apply_projection(G, *projection_override);
    } else if (proj_dim) {
        Mat P = numkit::projection_matrix(static_cast<int>(G.cols()), *proj_dim, rng);
        acc.basis = numkit::apply_projection(G, P);
    } else {
        acc.basis = G;
    }
    return acc;
}

InverseOperator make_inverse_operator(const HessianStrategy& hs, const ModelContext& ctx,
                                      const Mat* group_grads) {
    if (ctx.model == nullptr || ctx.dataset == nullptr)
        throw std::invalid_argument("make_inverse_operator: context missing model/dataset");
    InverseOperator op;
    const auto p = static_cast<Eigen::Index>(ctx.model->theta.size());

    switch (hs.kind) {
        case StrategyKind::Identity: {
            op.apply = [](const Vec& v) { return v; };
            break;
        }
        case StrategyKind::Exact: {
            Mat H = models::exact_hessian(*ctx.model, *ctx.dataset, ctx.rows_in_scope(),
                                          ctx.weight_decay);
            double damp = hs.exact_damp;
            if (damp > 0.0) H.diagonal().array() += damp;
            auto shared_H = std::make_shared<Mat>(std::move(H));
            op.apply = [shared_H](const Vec& v) {
                try {
                    return numkit::solve_spd(*shared_H, v);
                } catch (const NotSPD&) {
                    // Trained-but-not-converged Hessians can be indefinite;
                    // retry with the default regularizer.
                    Mat Hd = *shared_H;
                    Hd.diagonal().array() += 1e-3;
                    return numkit::solve_spd(Hd, v);
                }
            };
            break;
        }
        case StrategyKind::Cg: {
            auto rows = ctx.rows_in_scope();
            const models::ModelState* m = ctx.model;
            const datahub::Dataset* ds = ctx.dataset;
            double wd = ctx.weight_decay;
            int max_iter = hs.cg_max_iter > 0 ? hs.cg_max_iter : static_cast<int>(p);
            double tol = hs.cg_tol;
            op.apply = [m, ds, rows, wd, max_iter, tol](const Vec& v) {
                auto apply_H = [&](const Vec& x) { return models::hvp(*m, *ds, rows, x, wd); };
                return numkit::cg_solve(apply_H, v, max_iter, tol).x;
            };
            break;
        }
        case StrategyKind::Lissa: {
            auto rows = ctx.rows_in_scope();
            const models::ModelState* m = ctx.model;
            const datahub::Dataset* ds = ctx.dataset;
            double wd = ctx.weight_decay;
            HessianStrategy params = hs;
            op.apply = [m, ds, rows, wd, params](const Vec& v) {
                numkit::Rng rng(numkit::Rng::mix(params.seed, 0x115A));
                auto apply_H = [&](const Vec& x) { return models::hvp(*m, *ds, rows, x, wd); };
                return numkit::lissa_inverse_hvp(apply_H, v, params.lissa_damp, params.lissa_scale,
                                                 params.lissa_depth, params.lissa_repeat, rng);
            };
            break;
        }
        case StrategyKind::EmpFisher:
        case StrategyKind::BatchedEmpFisher: {
            FisherAccumulator acc;
            numkit::Rng rng(numkit::Rng::mix(hs.seed, 0xF15E));
            if (hs.projection_override) {
                op.projection = *hs.projection_override;
            } else if (hs.proj_dim) {
                op.projection = numkit::projection_matrix(static_cast<int>(p), *hs.proj_dim, rng);
            }
            if (hs.kind == StrategyKind::EmpFisher) {
                grouping::Partition singles =
                    grouping::singleton_partition(ctx.dataset->n_train());
                if (!ctx.train_subset.empty()) {
                    singles.groups.clear();
                    for (std::int64_t idx : ctx.train_subset) singles.groups.push_back({idx});
                }
                acc = build_fisher(ctx, singles, std::nullopt, hs.fisher_damp, rng,
                                   op.projection ? &*op.projection : nullptr);
            } else {
                if (ctx.partition == nullptr)
                    throw std::invalid_argument(
                        "make_inverse_operator: BatchedEmpFisher needs a partition in the context");
                if (group_grads) {
                    acc.damp = hs.fisher_damp;
                    acc.basis = op.projection ? Mat(*group_grads * *op.projection) : *group_grads;
                } else {
                    acc = build_fisher(ctx, *ctx.partition, std::nullopt, hs.fisher_damp, rng,
                                       op.projection ? &*op.projection : nullptr);
                }
            }
            auto shared = std::make_shared<FisherAccumulator>(std::move(acc));
            op.apply = [shared](const Vec& v) { return shared->solve(v); };
            break;
        }
    }
    return op;
}

Vec apply_inverse(const HessianStrategy& hs, const ModelContext& ctx, const Vec& v) {
    return make_inverse_operator(hs, ctx).apply(v);
}

TrakEquivalenceReport trak_fisher_equivalence_check(const models::ModelState& m,
                                                    const datahub::Dataset& ds, double T_temp) {
    if (m.arch.num_classes() != 2)
        throw std::invalid_argument("trak_fisher_equivalence_check: binary classification only");
    if (T_temp <= 0.0) throw std::invalid_argument("trak_fisher_equivalence_check: T must be > 0");

    TrakEquivalenceReport rep;
    Vec margin_cot(2);
    margin_cot << -1.0, 1.0;  // f = z_1 - z_0

    const auto n_train = ds.n_train();
    for (std::int64_t i = 0; i < n_train; ++i) {
        Vec x = ds.train_feature(i);
        double y_signed = (ds.train_label(i) == 1) ? 1.0 : -1.0;

        Vec grad_f = models::grad_logits_combination(m, x, margin_cot);
        Mat Z = models::logits(m, x.transpose());
        double f = Z(0, 1) - Z(0, 0);

        // dl/df for l = log(1 + exp(-y f / T)), evaluated stably.
        double t = -y_signed * f / T_temp;
        double sigma = (t > 0.0) ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
        double dl_df = -y_signed / T_temp * sigma;
        Vec grad_l = models::grad_logits_combination(m, x, dl_df * margin_cot);

        double c_of_t = sigma * sigma / (T_temp * T_temp);
        Mat lhs = grad_l * grad_l.transpose();
        Mat rhs = c_of_t * (grad_f * grad_f.transpose());
        double scale = std::max(rhs.cwiseAbs().maxCoeff(), 1e-300);
        double dev = (lhs - rhs).cwiseAbs().maxCoeff() / scale;
        rep.max_proportionality_deviation = std::max(rep.max_proportionality_deviation, dev);
        rep.max_ct_4t2_error = std::max(rep.max_ct_4t2_error,
                                        std::abs(c_of_t * 4.0 * T_temp * T_temp - 1.0));
        ++rep.points_checked;
    }
    return rep;
}

}  // namespace hessians
}  // namespace ggda
