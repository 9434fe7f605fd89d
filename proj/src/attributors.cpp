#include "ggda/attributors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace ggda {
namespace attributors {

using datahub::Dataset;
using grouping::Partition;
using hessians::HessianStrategy;
using hessians::ModelContext;
using models::ModelState;

PropertyFn PropertyFn::test_point_loss(std::int64_t test_index) {
    PropertyFn g;
    g.kind = PropertyKind::TestPointLoss;
    g.test_indices = {test_index};
    return g;
}

PropertyFn PropertyFn::mean_test_loss() {
    PropertyFn g;
    g.kind = PropertyKind::MeanTestLoss;
    return g;
}

PropertyFn PropertyFn::mean_test_loss_on_subset(std::vector<std::int64_t> indices) {
    if (indices.empty())
        throw std::invalid_argument("mean_test_loss_on_subset: empty subset");
    PropertyFn g;
    g.kind = PropertyKind::MeanTestLossOnSubset;
    g.test_indices = std::move(indices);
    return g;
}

std::string PropertyFn::name() const {
    switch (kind) {
        case PropertyKind::TestPointLoss:
            return "test_point_loss[" + std::to_string(test_indices.front()) + "]";
        case PropertyKind::MeanTestLoss: return "mean_test_loss";
        case PropertyKind::MeanTestLossOnSubset:
            return "mean_test_loss_on_subset[" + std::to_string(test_indices.size()) + "]";
    }
    return "mean_test_loss";
}

namespace {

std::vector<std::int64_t> resolve_test_indices(const PropertyFn& g, const Dataset& ds) {
    std::int64_t n_test = ds.n_test();
    std::vector<std::int64_t> idx;
    if (g.kind == PropertyKind::MeanTestLoss) {
        idx.resize(static_cast<std::size_t>(n_test));
        for (std::int64_t i = 0; i < n_test; ++i) idx[static_cast<std::size_t>(i)] = i;
    } else {
        idx = g.test_indices;
    }
    if (idx.empty()) throw std::invalid_argument("property: no test rows");
    for (std::int64_t i : idx)
        if (i < 0 || i >= n_test) throw std::invalid_argument("property: test index out of range");
    return idx;
}

}  // namespace

double eval_property(const PropertyFn& g, const ModelState& m, const Dataset& ds) {
    std::vector<std::int64_t> idx = resolve_test_indices(g, ds);
    double total = 0.0;
    for (std::int64_t i : idx) total += models::loss(m, ds.test_feature(i), ds.test_label(i));
    if (g.kind == PropertyKind::TestPointLoss) return total;
    return total / static_cast<double>(idx.size());
}

Vec grad_property(const PropertyFn& g, const ModelState& m, const Dataset& ds) {
    std::vector<std::int64_t> idx = resolve_test_indices(g, ds);
    Vec sum = models::grad_test_group(m, ds, idx);
    if (g.kind == PropertyKind::TestPointLoss) return sum;
    return sum / static_cast<double>(idx.size());
}

Vec influence_from_gradient(const ModelContext& ctx, const Partition& part,
                            const Vec& property_grad, const HessianStrategy& hs) {
    const auto k = static_cast<Eigen::Index>(part.num_groups());
    const auto p = static_cast<Eigen::Index>(ctx.model->theta.size());

    // One batched gradient per group; the same rows feed the batched Fisher.
    Mat G(k, p);
    std::set<std::int64_t> scope(ctx.train_subset.begin(), ctx.train_subset.end());
    for (Eigen::Index j = 0; j < k; ++j) {
        std::vector<std::int64_t> members;
        if (scope.empty()) {
            members = part.groups[static_cast<std::size_t>(j)];
        } else {
            for (std::int64_t idx : part.groups[static_cast<std::size_t>(j)])
                if (scope.count(idx)) members.push_back(idx);
        }
        G.row(j) = models::grad_group(*ctx.model, *ctx.dataset, members).transpose();
    }

    ModelContext ctx_with_part = ctx;
    if (ctx_with_part.partition == nullptr) ctx_with_part.partition = &part;
    hessians::InverseOperator op = hessians::make_inverse_operator(hs, ctx_with_part, &G);

    if (op.projection) {
        Vec q = op.projection->transpose() * property_grad;
        Vec u = op.apply(q);
        return (G * *op.projection) * u;
    }
    Vec u = op.apply(property_grad);
    return G * u;
}

AttributionScores influence(const ModelContext& ctx, const Partition& part, const PropertyFn& g,
                            const HessianStrategy& hs) {
    if (ctx.model == nullptr || ctx.dataset == nullptr)
        throw std::invalid_argument("influence: context missing model/dataset");
    Vec gvec = grad_property(g, *ctx.model, *ctx.dataset);
    AttributionScores out;
    out.scores = influence_from_gradient(ctx, part, gvec, hs);
    out.partition = part;
    out.method = "influence_" + hessians::strategy_name(hs.kind);
    out.property = g.name();
    out.seed = hs.seed;
    return out;
}

AttributionScores tracin(const models::Checkpoints& ckpts, const Dataset& ds,
                         const Partition& part, const PropertyFn& g, double weight_decay) {
    if (ckpts.states.empty()) throw std::invalid_argument("tracin: no checkpoints");
    AttributionScores out;
    out.scores = Vec::Zero(part.num_groups());
    HessianStrategy id = HessianStrategy::identity();
    for (const auto& state : ckpts.states) {
        ModelContext ctx;
        ctx.model = &state;
        ctx.dataset = &ds;
        ctx.weight_decay = weight_decay;
        Vec gvec = grad_property(g, state, ds);
        out.scores += influence_from_gradient(ctx, part, gvec, id);
    }
    out.partition = part;
    out.method = "tracin";
    out.property = g.name();
    return out;
}

std::uint64_t trak_member_seed(std::uint64_t base, int member) {
    return numkit::Rng::mix(base, 0x7AA5u + static_cast<std::uint64_t>(member));
}

AttributionScores trak_with_member_seeds(const TrainerInputs& trainer, const Dataset& ds,
                                         const Partition& part, const PropertyFn& g,
                                         const TrakOptions& opt,
                                         const std::vector<std::uint64_t>& member_seeds) {
    if (member_seeds.empty()) throw std::invalid_argument("trak: needs >= 1 member");
    if (opt.subsample_frac <= 0.0 || opt.subsample_frac > 1.0)
        throw std::invalid_argument("trak: subsample_frac must be in (0, 1]");

    const std::int64_t n_train = ds.n_train();
    Vec total = Vec::Zero(part.num_groups());
    for (std::uint64_t ms : member_seeds) {
        numkit::Rng member_rng(ms);

        std::vector<std::int64_t> sample;
        if (opt.subsample_frac >= 1.0) {
            for (std::int64_t i = 0; i < n_train; ++i) sample.push_back(i);
        } else {
            auto count = static_cast<std::int64_t>(
                std::llround(opt.subsample_frac * static_cast<double>(n_train)));
            count = std::max<std::int64_t>(count, 1);
            sample = member_rng.sample_without_replacement(n_train, count);
        }

        Dataset member_ds = ds;
        if (opt.subsample_frac < 1.0) {
            std::set<std::int64_t> keep(sample.begin(), sample.end());
            std::vector<std::int64_t> drop;
            for (std::int64_t i = 0; i < n_train; ++i)
                if (!keep.count(i)) drop.push_back(i);
            member_ds = datahub::remove_train_rows(ds, drop);
        }
        models::TrainConfig cfg = trainer.cfg;
        cfg.seed = ms;
        auto [state, ckpts] = models::train(trainer.arch, member_ds, cfg);

        // Score the full partition at the member model, group gradients
        // restricted to the member's sampled rows (of the original dataset).
        ModelContext ctx;
        ctx.model = &state;
        ctx.dataset = &ds;
        ctx.weight_decay = trainer.cfg.weight_decay;
        ctx.partition = &part;
        if (opt.subsample_frac < 1.0) ctx.train_subset = sample;

        // Fresh projection per member, drawn from the member's derived seed.
        HessianStrategy hs = HessianStrategy::batched_emp_fisher(
            opt.proj_dim, opt.fisher_damp, member_rng.derive(0x712A).seed());
        hs.projection_override = opt.projection_override;

        Vec gvec = grad_property(g, state, ds);
        total += influence_from_gradient(ctx, part, gvec, hs);
    }

    AttributionScores out;
    out.scores = total / static_cast<double>(member_seeds.size());
    out.partition = part;
    out.method = "trak";
    out.property = g.name();
    out.seed = opt.seed;
    return out;
}

AttributionScores trak(const TrainerInputs& trainer, const Dataset& ds, const Partition& part,
                       const PropertyFn& g, const TrakOptions& opt) {
    if (opt.members < 1) throw std::invalid_argument("trak: members must be >= 1");
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < opt.members; ++i) seeds.push_back(trak_member_seed(opt.seed, i));
    return trak_with_member_seeds(trainer, ds, part, g, opt, seeds);
}

AttributionScores loo_oracle(const models::Architecture& arch, const Dataset& ds,
                             const Partition& part, const PropertyFn& g,
                             const models::TrainConfig& cfg, int num_seeds) {
    if (num_seeds < 1) throw std::invalid_argument("loo_oracle: num_seeds must be >= 1");
    const std::int64_t k = part.num_groups();
    if (k * num_seeds > 10000)
        throw std::invalid_argument("loo_oracle: k * num_seeds exceeds the 10000-retraining guard");

    Vec total = Vec::Zero(k);
    for (int r = 0; r < num_seeds; ++r) {
        models::TrainConfig cfg_r = cfg;
        cfg_r.seed = numkit::Rng::mix(cfg.seed, static_cast<std::uint64_t>(r));
        auto [full_state, full_ckpts] = models::train(arch, ds, cfg_r);
        double g_full = eval_property(g, full_state, ds);
        for (std::int64_t j = 0; j < k; ++j) {
            Dataset reduced = datahub::remove_train_rows(ds, part.groups[static_cast<std::size_t>(j)]);
            auto [state_j, ckpts_j] = models::train(arch, reduced, cfg_r);
            total(static_cast<Eigen::Index>(j)) += eval_property(g, state_j, ds) - g_full;
        }
    }

    AttributionScores out;
    out.scores = total / static_cast<double>(num_seeds);
    out.partition = part;
    out.method = "loo";
    out.property = g.name();
    out.seed = cfg.seed;
    return out;
}

}  // namespace attributors
}  // namespace ggda
