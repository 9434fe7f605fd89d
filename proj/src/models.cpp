#include "ggda/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace ggda {
namespace models {

using datahub::Dataset;
using datahub::Split;
using json = nlohmann::ordered_json;

namespace {

constexpr double kLossCap = 1e4;

thread_local PassCounts g_pass_counts;

enum class PassTag { TrainGrad, PropertyGrad, Hvp, Trainer };

void count_pass(PassTag tag) {
    switch (tag) {
        case PassTag::TrainGrad: ++g_pass_counts.train_grad; break;
        case PassTag::PropertyGrad: ++g_pass_counts.property_grad; break;
        case PassTag::Hvp: ++g_pass_counts.hvp; break;
        case PassTag::Trainer: ++g_pass_counts.trainer; break;
    }
}

struct LayerView {
    Eigen::Map<const Mat> W;
    Eigen::Map<const Vec> b;
};

std::vector<LayerView> layer_views(const Architecture& arch, const Vec& theta) {
    std::vector<LayerView> views;
    const double* base = theta.data();
    std::int64_t off = 0;
    for (int l = 0; l < arch.num_layers(); ++l) {
        int in = arch.layer_sizes[static_cast<std::size_t>(l)];
        int out = arch.layer_sizes[static_cast<std::size_t>(l) + 1];
        views.push_back({Eigen::Map<const Mat>(base + off, out, in),
                         Eigen::Map<const Vec>(base + off + static_cast<std::int64_t>(in) * out, out)});
        off += static_cast<std::int64_t>(in) * out + out;
    }
    return views;
}

struct LayerViewMut {
    Eigen::Map<Mat> W;
    Eigen::Map<Vec> b;
};

std::vector<LayerViewMut> layer_views_mut(const Architecture& arch, Vec& theta) {
    std::vector<LayerViewMut> views;
    double* base = theta.data();
    std::int64_t off = 0;
    for (int l = 0; l < arch.num_layers(); ++l) {
        int in = arch.layer_sizes[static_cast<std::size_t>(l)];
        int out = arch.layer_sizes[static_cast<std::size_t>(l) + 1];
        views.push_back({Eigen::Map<Mat>(base + off, out, in),
                         Eigen::Map<Vec>(base + off + static_cast<std::int64_t>(in) * out, out)});
        off += static_cast<std::int64_t>(in) * out + out;
    }
    return views;
}

Mat gather_rows(const Dataset& ds, const std::vector<std::int64_t>& dataset_rows) {
    Mat X(static_cast<Eigen::Index>(dataset_rows.size()), ds.dim());
    for (std::size_t i = 0; i < dataset_rows.size(); ++i)
        X.row(static_cast<Eigen::Index>(i)) = ds.features.row(dataset_rows[i]);
    return X;
}

std::vector<int> gather_labels(const Dataset& ds, const std::vector<std::int64_t>& dataset_rows) {
    std::vector<int> y(dataset_rows.size());
    for (std::size_t i = 0; i < dataset_rows.size(); ++i)
        y[i] = ds.labels[static_cast<std::size_t>(dataset_rows[i])];
    return y;
}

struct ForwardCache {
    std::vector<Mat> activations;  // A_0 = X, A_1, ..., A_{L-1}
    std::vector<Mat> preacts;      // Z_1, ..., Z_L
    Mat probs;                     // softmax of final preacts
};

ForwardCache forward(const ModelState& m, const Mat& X) {
    auto views = layer_views(m.arch, m.theta);
    ForwardCache c;
    c.activations.push_back(X);
    for (int l = 0; l < m.arch.num_layers(); ++l) {
        Mat Z = c.activations.back() * views[static_cast<std::size_t>(l)].W.transpose();
        Z.rowwise() += views[static_cast<std::size_t>(l)].b.transpose();
        c.preacts.push_back(Z);
        if (l + 1 < m.arch.num_layers()) c.activations.push_back(Z.cwiseMax(0.0));
    }
    const Mat& Zout = c.preacts.back();
    c.probs.resize(Zout.rows(), Zout.cols());
    for (Eigen::Index i = 0; i < Zout.rows(); ++i) {
        double zmax = Zout.row(i).maxCoeff();
        Eigen::ArrayXd e = (Zout.row(i).array() - zmax).exp();
        c.probs.row(i) = (e / e.sum()).matrix();
    }
    return c;
}

double batch_loss_sum(const ForwardCache& c, const std::vector<int>& y) {
    const Mat& Z = c.preacts.back();
    double total = 0.0;
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        double zmax = Z.row(i).maxCoeff();
        double lse = zmax + std::log((Z.row(i).array() - zmax).exp().sum());
        total += std::min(lse - Z(i, y[static_cast<std::size_t>(i)]), kLossCap);
    }
    return total;
}

// Backprop of an arbitrary output cotangent into a flat gradient vector.
Vec backward_from_delta(const ModelState& m, const ForwardCache& c, Mat delta) {
    auto views = layer_views(m.arch, m.theta);
    const int L = m.arch.num_layers();

    Vec grad = Vec::Zero(m.theta.size());
    auto gviews = layer_views_mut(m.arch, grad);
    for (int l = L - 1; l >= 0; --l) {
        gviews[static_cast<std::size_t>(l)].W = delta.transpose() * c.activations[static_cast<std::size_t>(l)];
        gviews[static_cast<std::size_t>(l)].b = delta.colwise().sum().transpose();
        if (l > 0) {
            Mat prev = delta * views[static_cast<std::size_t>(l)].W;
            // ReLU mask from the stored preactivation.
            delta = (c.preacts[static_cast<std::size_t>(l) - 1].array() > 0.0)
                        .select(prev.array(), 0.0)
                        .matrix();
        }
    }
    return grad;
}

// Backprop of the summed batch loss.
Vec backward_sum(const ModelState& m, const ForwardCache& c, const std::vector<int>& y,
                 PassTag tag) {
    count_pass(tag);
    Mat delta = c.probs;
    for (Eigen::Index i = 0; i < delta.rows(); ++i)
        delta(i, y[static_cast<std::size_t>(i)]) -= 1.0;
    return backward_from_delta(m, c, std::move(delta));
}

Vec sum_grad(const ModelState& m, const Mat& X, const std::vector<int>& y, PassTag tag) {
    ForwardCache c = forward(m, X);
    return backward_sum(m, c, y, tag);
}

}  // namespace

std::int64_t Architecture::param_count() const {
    std::int64_t p = 0;
    for (int l = 0; l < num_layers(); ++l)
        p += static_cast<std::int64_t>(layer_sizes[static_cast<std::size_t>(l)]) *
                 layer_sizes[static_cast<std::size_t>(l) + 1] +
             layer_sizes[static_cast<std::size_t>(l) + 1];
    return p;
}

void Architecture::validate() const {
    if (layer_sizes.size() < 2) throw std::invalid_argument("architecture: needs >= 1 layer");
    for (int s : layer_sizes)
        if (s < 1) throw std::invalid_argument("architecture: layer size < 1");
    if (kind == ArchKind::LogReg && layer_sizes.size() != 2)
        throw std::invalid_argument("architecture: LogReg has no hidden layers");
}

Architecture logreg(int input_dim, int classes) {
    Architecture a;
    a.kind = ArchKind::LogReg;
    a.layer_sizes = {input_dim, classes};
    a.validate();
    return a;
}

Architecture mlp(int input_dim, const std::vector<int>& hidden, int classes) {
    Architecture a;
    a.kind = ArchKind::Mlp;
    a.layer_sizes.push_back(input_dim);
    for (int h : hidden) a.layer_sizes.push_back(h);
    a.layer_sizes.push_back(classes);
    a.validate();
    return a;
}

void reset_pass_counts() { g_pass_counts = PassCounts{}; }
PassCounts pass_counts() { return g_pass_counts; }

std::pair<ModelState, Checkpoints> train(const Architecture& arch, const Dataset& ds,
                                         const TrainConfig& cfg, int snapshot_every) {
    arch.validate();
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (cfg.learning_rate <= 0.0) throw std::invalid_argument("train: learning_rate must be > 0");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (arch.input_dim() != ds.dim()) throw std::invalid_argument("train: input dim mismatch");
    std::vector<std::int64_t> train_rows = ds.train_rows();
    if (train_rows.empty()) throw std::invalid_argument("train: no train rows");

    ModelState m;
    m.arch = arch;
    m.theta = Vec::Zero(arch.param_count());

    // He-style init, biases zero.
    numkit::Rng init_rng(numkit::Rng::mix(cfg.seed, 0x1217));
    auto wviews = layer_views_mut(arch, m.theta);
    for (int l = 0; l < arch.num_layers(); ++l) {
        double sd = std::sqrt(2.0 / arch.layer_sizes[static_cast<std::size_t>(l)]);
        auto& W = wviews[static_cast<std::size_t>(l)].W;
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index cidx = 0; cidx < W.cols(); ++cidx)
                W(r, cidx) = sd * init_rng.next_normal();
    }

    numkit::Rng shuffle_rng(numkit::Rng::mix(cfg.seed, 0x50FF1E));
    Vec velocity = Vec::Zero(m.theta.size());
    Checkpoints ckpts;
    const auto n_train = static_cast<std::int64_t>(train_rows.size());
    const double inv_n = 1.0 / static_cast<double>(n_train);

    std::vector<std::int64_t> order = train_rows;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::int64_t start = 0; start < n_train; start += cfg.batch_size) {
            std::int64_t stop = std::min(start + cfg.batch_size, n_train);
            std::vector<std::int64_t> batch(order.begin() + start, order.begin() + stop);
            Mat X = gather_rows(ds, batch);
            std::vector<int> y = gather_labels(ds, batch);
            ForwardCache c = forward(m, X);
            epoch_loss += batch_loss_sum(c, y);
            Vec g = backward_sum(m, c, y, PassTag::Trainer) / static_cast<double>(batch.size());
            g += cfg.weight_decay * m.theta;
            if (cfg.momentum > 0.0) {
                velocity = cfg.momentum * velocity + g;
                m.theta -= cfg.learning_rate * velocity;
            } else {
                m.theta -= cfg.learning_rate * g;
            }
        }
        double objective = epoch_loss * inv_n + 0.5 * cfg.weight_decay * m.theta.squaredNorm();
        if (!std::isfinite(objective))
            throw NonFiniteLoss("train: non-finite loss at epoch " + std::to_string(epoch) +
                                " (learning rate too high?)");

        bool converged = false;
        if (cfg.grad_tol > 0.0) {
            Mat X = gather_rows(ds, train_rows);
            Vec full = sum_grad(m, X, gather_labels(ds, train_rows), PassTag::Trainer) * inv_n +
                       cfg.weight_decay * m.theta;
            converged = full.norm() <= cfg.grad_tol;
        }

        if (snapshot_every > 0 && epoch % snapshot_every == 0) {
            ModelState snap = m;
            snap.checkpoint_tag = "epoch" + std::to_string(epoch);
            ckpts.states.push_back(std::move(snap));
        }
        if (converged) break;
    }

    m.checkpoint_tag = "final";
    if (ckpts.states.empty() || ckpts.states.back().theta != m.theta) ckpts.states.push_back(m);
    return {m, ckpts};
}

double loss(const ModelState& m, const Vec& x, int y) {
    Mat X = x.transpose();
    ForwardCache c = forward(m, X);
    return batch_loss_sum(c, {y});
}

Mat logits(const ModelState& m, const Mat& X) {
    ForwardCache c = forward(m, X);
    return c.preacts.back();
}

double accuracy(const ModelState& m, const Dataset& ds, Split which) {
    std::vector<std::int64_t> rows = (which == Split::Train) ? ds.train_rows() : ds.test_rows();
    if (rows.empty()) throw std::invalid_argument("accuracy: empty split");
    Mat Z = logits(m, gather_rows(ds, rows));
    std::int64_t correct = 0;
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        Eigen::Index best;
        Z.row(i).maxCoeff(&best);
        if (static_cast<int>(best) == ds.labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])])
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(rows.size());
}

double mean_split_loss(const ModelState& m, const Dataset& ds, Split which) {
    std::vector<std::int64_t> rows = (which == Split::Train) ? ds.train_rows() : ds.test_rows();
    if (rows.empty()) throw std::invalid_argument("mean_split_loss: empty split");
    ForwardCache c = forward(m, gather_rows(ds, rows));
    return batch_loss_sum(c, gather_labels(ds, rows)) / static_cast<double>(rows.size());
}

Vec grad_group(const ModelState& m, const Dataset& ds,
               const std::vector<std::int64_t>& train_indices) {
    if (train_indices.empty()) return Vec::Zero(m.theta.size());
    std::vector<std::int64_t> train = ds.train_rows();
    std::vector<std::int64_t> rows(train_indices.size());
    for (std::size_t i = 0; i < train_indices.size(); ++i)
        rows[i] = train.at(static_cast<std::size_t>(train_indices[i]));
    return sum_grad(m, gather_rows(ds, rows), gather_labels(ds, rows), PassTag::TrainGrad);
}

Vec grad_single(const ModelState& m, const Vec& x, int y) {
    Mat X = x.transpose();
    return sum_grad(m, X, {y}, PassTag::TrainGrad);
}

Vec grad_test_group(const ModelState& m, const Dataset& ds,
                    const std::vector<std::int64_t>& test_indices) {
    if (test_indices.empty()) return Vec::Zero(m.theta.size());
    std::vector<std::int64_t> test = ds.test_rows();
    std::vector<std::int64_t> rows(test_indices.size());
    for (std::size_t i = 0; i < test_indices.size(); ++i)
        rows[i] = test.at(static_cast<std::size_t>(test_indices[i]));
    return sum_grad(m, gather_rows(ds, rows), gather_labels(ds, rows), PassTag::PropertyGrad);
}

Vec hvp(const ModelState& m, const Dataset& ds,
        const std::vector<std::int64_t>& train_indices, const Vec& v, double weight_decay) {
    if (v.size() != m.theta.size()) throw std::invalid_argument("hvp: dimension mismatch");
    if (!v.allFinite()) throw std::invalid_argument("hvp: non-finite direction");
    if (train_indices.empty()) return weight_decay * v;
    count_pass(PassTag::Hvp);

    std::vector<std::int64_t> train = ds.train_rows();
    std::vector<std::int64_t> rows(train_indices.size());
    for (std::size_t i = 0; i < train_indices.size(); ++i)
        rows[i] = train.at(static_cast<std::size_t>(train_indices[i]));
    Mat X = gather_rows(ds, rows);
    std::vector<int> y = gather_labels(ds, rows);

    auto views = layer_views(m.arch, m.theta);
    auto vviews = layer_views(m.arch, v);
    const int L = m.arch.num_layers();
    const double inv_n = 1.0 / static_cast<double>(rows.size());

    // Forward with tangents: Adot tracks dA/deps along theta + eps*v.
    ForwardCache c = forward(m, X);
    std::vector<Mat> zdots;
    Mat adot = Mat::Zero(X.rows(), X.cols());
    for (int l = 0; l < L; ++l) {
        const auto& lv = views[static_cast<std::size_t>(l)];
        const auto& tv = vviews[static_cast<std::size_t>(l)];
        Mat zdot = adot * lv.W.transpose() + c.activations[static_cast<std::size_t>(l)] * tv.W.transpose();
        zdot.rowwise() += tv.b.transpose();
        zdots.push_back(zdot);
        if (l + 1 < L)
            adot = (c.preacts[static_cast<std::size_t>(l)].array() > 0.0)
                       .select(zdot.array(), 0.0)
                       .matrix();
    }

    // delta = P - Y; deltadot via softmax Jacobian applied to the tangent.
    Mat delta = c.probs;
    for (Eigen::Index i = 0; i < delta.rows(); ++i)
        delta(i, y[static_cast<std::size_t>(i)]) -= 1.0;
    const Mat& zdot_out = zdots.back();
    Mat deltadot(delta.rows(), delta.cols());
    for (Eigen::Index i = 0; i < delta.rows(); ++i) {
        double dot = c.probs.row(i).dot(zdot_out.row(i));
        deltadot.row(i) =
            (c.probs.row(i).array() * (zdot_out.row(i).array() - dot)).matrix();
    }

    Vec out = Vec::Zero(m.theta.size());
    auto oviews = layer_views_mut(m.arch, out);
    for (int l = L - 1; l >= 0; --l) {
        const Mat& A = c.activations[static_cast<std::size_t>(l)];
        Mat Adot;
        if (l == 0) {
            Adot = Mat::Zero(A.rows(), A.cols());
        } else {
            Adot = (c.preacts[static_cast<std::size_t>(l) - 1].array() > 0.0)
                       .select(zdots[static_cast<std::size_t>(l) - 1].array(), 0.0)
                       .matrix();
        }
        oviews[static_cast<std::size_t>(l)].W = deltadot.transpose() * A + delta.transpose() * Adot;
        oviews[static_cast<std::size_t>(l)].b = deltadot.colwise().sum().transpose();
        if (l > 0) {
            const auto& lv = views[static_cast<std::size_t>(l)];
            const auto& tv = vviews[static_cast<std::size_t>(l)];
            Mat prev = delta * lv.W;
            Mat prevdot = deltadot * lv.W + delta * tv.W;
            auto mask = c.preacts[static_cast<std::size_t>(l) - 1].array() > 0.0;
            delta = mask.select(prev.array(), 0.0).matrix();
            deltadot = mask.select(prevdot.array(), 0.0).matrix();
        }
    }
    return out * inv_n + weight_decay * v;
}

Mat exact_hessian(const ModelState& m, const Dataset& ds,
                  const std::vector<std::int64_t>& train_indices, double weight_decay) {
    const std::int64_t p = m.theta.size();
    if (p > 2000) throw TooLarge("exact_hessian: p > 2000");
    Mat H(p, p);
    for (std::int64_t j = 0; j < p; ++j) {
        Vec e = Vec::Zero(p);
        e(j) = 1.0;
        H.col(j) = hvp(m, ds, train_indices, e, weight_decay);
    }
    return 0.5 * (H + Mat(H.transpose()));
}

Vec grad_logits_combination(const ModelState& m, const Vec& x, const Vec& cot) {
    if (cot.size() != m.arch.num_classes())
        throw std::invalid_argument("grad_logits_combination: cotangent size mismatch");
    ForwardCache c = forward(m, x.transpose());
    return backward_from_delta(m, c, cot.transpose());
}

Vec hidden_repr(const ModelState& m, const Vec& x) {
    if (m.arch.num_layers() == 1) return x;
    ForwardCache c = forward(m, x.transpose());
    return c.activations.back().row(0).transpose();
}

Vec penult_grad(const ModelState& m, const Vec& x, int y) {
    ForwardCache c = forward(m, x.transpose());
    Vec pe = c.probs.row(0).transpose();
    pe(y) -= 1.0;
    auto views = layer_views(m.arch, m.theta);
    return views.back().W.transpose() * pe;
}

void write_checkpoints(const Checkpoints& ckpts, const std::string& path) {
    if (ckpts.states.empty()) throw std::invalid_argument("write_checkpoints: empty");
    json j = json::array();
    for (const auto& s : ckpts.states) {
        json e;
        e["arch"]["kind"] = (s.arch.kind == ArchKind::LogReg) ? "logreg" : "mlp";
        e["arch"]["layer_sizes"] = s.arch.layer_sizes;
        e["theta"] = std::vector<double>(s.theta.data(), s.theta.data() + s.theta.size());
        e["tag"] = s.checkpoint_tag;
        j.push_back(e);
    }
    datahub::write_file_atomic(path, j.dump() + "\n");
}

Checkpoints read_checkpoints(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("checkpoints: bad JSON: ") + e.what());
    }
    Checkpoints out;
    for (const auto& e : j) {
        ModelState s;
        std::string kind = e.at("arch").at("kind").get<std::string>();
        s.arch.kind = (kind == "logreg") ? ArchKind::LogReg : ArchKind::Mlp;
        s.arch.layer_sizes = e.at("arch").at("layer_sizes").get<std::vector<int>>();
        s.arch.validate();
        auto t = e.at("theta").get<std::vector<double>>();
        if (static_cast<std::int64_t>(t.size()) != s.arch.param_count())
            throw SchemaError("checkpoints: theta length mismatch");
        s.theta = Eigen::Map<const Vec>(t.data(), static_cast<Eigen::Index>(t.size()));
        s.checkpoint_tag = e.value("tag", "");
        out.states.push_back(std::move(s));
    }
    if (out.states.empty()) throw SchemaError("checkpoints: empty file");
    return out;
}

}  // namespace models
}  // namespace ggda
