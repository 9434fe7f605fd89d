#ifndef GGDA_MODELS_HPP
#define GGDA_MODELS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ggda/datahub.hpp"
#include "ggda/numkit.hpp"

namespace ggda {
namespace models {

enum class ArchKind { LogReg, Mlp };

/// Layer sizes run input, hidden..., classes. LogReg has no hidden layers;
/// Mlp applies ReLU after every hidden layer. The output layer is linear and
/// feeds a softmax cross-entropy loss.
struct Architecture {
    ArchKind kind = ArchKind::LogReg;
    std::vector<int> layer_sizes;

    int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
    int input_dim() const { return layer_sizes.front(); }
    int num_classes() const { return layer_sizes.back(); }
    std::int64_t param_count() const;
    void validate() const;
};

Architecture logreg(int input_dim, int classes);
Architecture mlp(int input_dim, const std::vector<int>& hidden, int classes);

/// Flat parameter vector. Layout is layer-major, weights before biases:
/// [W_0 (out x in, row-major), b_0, W_1, b_1, ...]. This order is part of
/// the checkpoint format.
struct ModelState {
    Architecture arch;
    Vec theta;
    std::string checkpoint_tag;
};

struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 100;
    int batch_size = 32;
    double weight_decay = 0.0;
    double momentum = 0.0;  // 0 = plain GD
    std::uint64_t seed = 0;
    // Early stop once the full-objective gradient 2-norm falls below this;
    // 0 disables the check. Used for solver-grade convex fits.
    double grad_tol = 0.0;
};

struct Checkpoints {
    std::vector<ModelState> states;
};

/// Counters for batched forward/backward passes, by purpose. Thread-local.
struct PassCounts {
    std::int64_t train_grad = 0;     // grad_group / grad_single calls
    std::int64_t property_grad = 0;  // test-side gradient batches
    std::int64_t hvp = 0;
    std::int64_t trainer = 0;        // minibatch steps inside train()
};

void reset_pass_counts();
PassCounts pass_counts();

/// Minibatch gradient descent on mean cross-entropy + (weight_decay/2)||θ||²
/// with deterministic shuffling from cfg.seed. Snapshots are taken every
/// `snapshot_every` epochs (0 = final state only); the final state is always
/// the last snapshot. Throws NonFiniteLoss when the objective leaves the
/// reals.
std::pair<ModelState, Checkpoints> train(const Architecture& arch,
                                         const datahub::Dataset& ds,
                                         const TrainConfig& cfg,
                                         int snapshot_every = 0);

/// Cross-entropy -log softmax(f(x))[y], capped at 1e4.
double loss(const ModelState& m, const Vec& x, int y);

Mat logits(const ModelState& m, const Mat& X);

double accuracy(const ModelState& m, const datahub::Dataset& ds, datahub::Split which);
double mean_split_loss(const ModelState& m, const datahub::Dataset& ds, datahub::Split which);

/// Gradient of the summed loss over the given train rows, one batched
/// forward/backward pass. grad_single is the singleton case and shares the
/// code path bit for bit.
Vec grad_group(const ModelState& m, const datahub::Dataset& ds,
               const std::vector<std::int64_t>& train_indices);
Vec grad_single(const ModelState& m, const Vec& x, int y);

/// Summed loss gradient over test rows, counted separately from train
/// gradients so attribution pass accounting stays exact.
Vec grad_test_group(const ModelState& m, const datahub::Dataset& ds,
                    const std::vector<std::int64_t>& test_indices);

/// Hessian-vector product of the mean loss over the given train rows plus
/// weight_decay * v, computed by forward-over-reverse differentiation (exact
/// up to roundoff; ReLU second derivative vanishes a.e.).
Vec hvp(const ModelState& m, const datahub::Dataset& ds,
        const std::vector<std::int64_t>& train_indices, const Vec& v,
        double weight_decay = 0.0);

/// Dense p x p Hessian of the mean loss + weight_decay I, assembled from
/// HVP columns. Guarded to p <= 2000 (throws TooLarge).
Mat exact_hessian(const ModelState& m, const datahub::Dataset& ds,
                  const std::vector<std::int64_t>& train_indices,
                  double weight_decay = 0.0);

/// Gradient w.r.t. theta of cot · logits(x), single input. Diagnostic path,
/// not pass-counted.
Vec grad_logits_combination(const ModelState& m, const Vec& x, const Vec& cot);

/// Last hidden activation. For LogReg the input itself (no hidden layers).
Vec hidden_repr(const ModelState& m, const Vec& x);

/// Gradient of the loss w.r.t. the penultimate activations: W_lastᵀ(p - e_y).
Vec penult_grad(const ModelState& m, const Vec& x, int y);

// Checkpoint file I/O: JSON {arch, theta:[...], tag} per state.
void write_checkpoints(const Checkpoints& ckpts, const std::string& path);
Checkpoints read_checkpoints(const std::string& path);

}  // namespace models
}  // namespace ggda

#endif
