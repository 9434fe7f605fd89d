#include "ggda/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace ggda {
namespace cli {

using json = nlohmann::json;

namespace {

// Typed field access with dotted-path diagnostics.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    Section child(const std::string& key) const { return Section(j_.at(key), dotted(key)); }

    template <typename T>
    T get(const std::string& key, const T& fallback) const {
        if (!j_.contains(key)) return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(dotted(key), "has the wrong type");
        }
    }

    template <typename T>
    T require(const std::string& key) const {
        if (!j_.contains(key)) throw ConfigError(dotted(key), "is required");
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(dotted(key), "has the wrong type");
        }
    }

    void allow_only(const std::set<std::string>& keys) const {
        for (const auto& item : j_.items())
            if (!keys.count(item.key()))
                throw ConfigError(dotted(item.key()), "unknown field");
    }

    std::string dotted(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

private:
    const json& j_;
    std::string path_;
};

void check_positive(double v, const std::string& path) {
    if (!(v > 0.0)) throw ConfigError(path, "must be > 0");
}

void check_fraction(double v, const std::string& path) {
    if (!(v > 0.0 && v < 1.0)) throw ConfigError(path, "must be in (0,1)");
}

DatasetConfig parse_dataset(const Section& s) {
    DatasetConfig d;
    s.allow_only({"kind", "path", "label_column", "test_fraction", "n", "d", "classes",
                  "separation", "flip_fraction", "seed"});
    d.kind = s.get<std::string>("kind", d.kind);
    if (d.kind != "synthetic" && d.kind != "csv")
        throw ConfigError(s.dotted("kind"), "must be synthetic|csv");
    if (d.kind == "csv") {
        d.path = s.require<std::string>("path");
        if (!std::filesystem::exists(d.path))
            throw ConfigError(s.dotted("path"), "file not found: " + d.path);
    }
    d.label_column = s.get<std::string>("label_column", d.label_column);
    d.test_fraction = s.get<double>("test_fraction", d.test_fraction);
    check_fraction(d.test_fraction, s.dotted("test_fraction"));
    d.n = s.get<std::int64_t>("n", d.n);
    d.d = s.get<std::int64_t>("d", d.d);
    d.classes = s.get<int>("classes", d.classes);
    d.separation = s.get<double>("separation", d.separation);
    if (d.kind == "synthetic") {
        if (d.n < 1) throw ConfigError(s.dotted("n"), "must be >= 1");
        if (d.d < 1) throw ConfigError(s.dotted("d"), "must be >= 1");
        if (d.classes < 1) throw ConfigError(s.dotted("classes"), "must be >= 1");
        if (d.n < d.classes) throw ConfigError(s.dotted("n"), "must be >= classes");
    }
    d.flip_fraction = s.get<double>("flip_fraction", d.flip_fraction);
    if (d.flip_fraction != 0.0) check_fraction(d.flip_fraction, s.dotted("flip_fraction"));
    d.seed = s.get<std::uint64_t>("seed", d.seed);
    return d;
}

ArchConfig parse_arch(const Section& s) {
    ArchConfig a;
    s.allow_only({"kind", "hidden"});
    a.kind = s.get<std::string>("kind", a.kind);
    if (a.kind != "logreg" && a.kind != "mlp")
        throw ConfigError(s.dotted("kind"), "must be logreg|mlp");
    a.hidden = s.get<std::vector<int>>("hidden", a.hidden);
    if (a.kind == "mlp" && a.hidden.empty())
        throw ConfigError(s.dotted("hidden"), "mlp needs at least one hidden layer");
    for (int h : a.hidden)
        if (h < 1) throw ConfigError(s.dotted("hidden"), "layer sizes must be >= 1");
    return a;
}

TrainSection parse_train(const Section& s) {
    TrainSection t;
    s.allow_only({"learning_rate", "epochs", "batch_size", "weight_decay", "momentum", "seed",
                  "grad_tol", "snapshot_every"});
    t.cfg.learning_rate = s.get<double>("learning_rate", t.cfg.learning_rate);
    check_positive(t.cfg.learning_rate, s.dotted("learning_rate"));
    t.cfg.epochs = s.get<int>("epochs", t.cfg.epochs);
    if (t.cfg.epochs < 1) throw ConfigError(s.dotted("epochs"), "must be >= 1");
    t.cfg.batch_size = s.get<int>("batch_size", t.cfg.batch_size);
    if (t.cfg.batch_size < 1) throw ConfigError(s.dotted("batch_size"), "must be >= 1");
    t.cfg.weight_decay = s.get<double>("weight_decay", t.cfg.weight_decay);
    if (t.cfg.weight_decay < 0.0) throw ConfigError(s.dotted("weight_decay"), "must be >= 0");
    t.cfg.momentum = s.get<double>("momentum", t.cfg.momentum);
    if (t.cfg.momentum < 0.0 || t.cfg.momentum >= 1.0)
        throw ConfigError(s.dotted("momentum"), "must be in [0,1)");
    t.cfg.seed = s.get<std::uint64_t>("seed", t.cfg.seed);
    t.cfg.grad_tol = s.get<double>("grad_tol", t.cfg.grad_tol);
    if (t.cfg.grad_tol < 0.0) throw ConfigError(s.dotted("grad_tol"), "must be >= 0");
    t.snapshot_every = s.get<int>("snapshot_every", t.snapshot_every);
    if (t.snapshot_every < 0) throw ConfigError(s.dotted("snapshot_every"), "must be >= 0");
    return t;
}

GroupingConfig parse_grouping(const Section& s) {
    GroupingConfig g;
    s.allow_only({"method", "group_size", "seed", "kmeans_tol", "kmeans_max_iter"});
    g.method = s.get<std::string>("method", g.method);
    try {
        grouping::method_from_name(g.method);
    } catch (const std::invalid_argument&) {
        throw ConfigError(s.dotted("method"), "must be random|kmeans|repr_kmeans|grad_kmeans");
    }
    g.group_size = s.get<std::int64_t>("group_size", g.group_size);
    if (g.group_size < 1) throw ConfigError(s.dotted("group_size"), "must be >= 1");
    g.seed = s.get<std::uint64_t>("seed", g.seed);
    g.kmeans.tol = s.get<double>("kmeans_tol", g.kmeans.tol);
    check_positive(g.kmeans.tol, s.dotted("kmeans_tol"));
    g.kmeans.max_iter = s.get<int>("kmeans_max_iter", g.kmeans.max_iter);
    if (g.kmeans.max_iter < 1) throw ConfigError(s.dotted("kmeans_max_iter"), "must be >= 1");
    return g;
}

HessianConfig parse_hessian(const Section& s) {
    HessianConfig h;
    s.allow_only({"kind", "exact_damp", "cg_tol", "cg_max_iter", "lissa_damp", "lissa_scale",
                  "lissa_depth", "lissa_repeat", "fisher_damp", "proj_dim"});
    h.kind = s.get<std::string>("kind", h.kind);
    static const std::set<std::string> kinds{"exact",  "identity",   "cg",
                                             "lissa",  "emp_fisher", "batched_emp_fisher"};
    if (!kinds.count(h.kind))
        throw ConfigError(s.dotted("kind"),
                          "must be exact|identity|cg|lissa|emp_fisher|batched_emp_fisher");
    h.exact_damp = s.get<double>("exact_damp", h.exact_damp);
    if (h.exact_damp < 0.0) throw ConfigError(s.dotted("exact_damp"), "must be >= 0");
    h.cg_tol = s.get<double>("cg_tol", h.cg_tol);
    check_positive(h.cg_tol, s.dotted("cg_tol"));
    h.cg_max_iter = s.get<int>("cg_max_iter", h.cg_max_iter);
    if (h.cg_max_iter < 0) throw ConfigError(s.dotted("cg_max_iter"), "must be >= 0");
    h.lissa_damp = s.get<double>("lissa_damp", h.lissa_damp);
    h.lissa_scale = s.get<double>("lissa_scale", h.lissa_scale);
    check_positive(h.lissa_scale, s.dotted("lissa_scale"));
    h.lissa_depth = s.get<int>("lissa_depth", h.lissa_depth);
    if (h.lissa_depth < 1) throw ConfigError(s.dotted("lissa_depth"), "must be >= 1");
    h.lissa_repeat = s.get<int>("lissa_repeat", h.lissa_repeat);
    if (h.lissa_repeat < 1) throw ConfigError(s.dotted("lissa_repeat"), "must be >= 1");
    h.fisher_damp = s.get<double>("fisher_damp", h.fisher_damp);
    check_positive(h.fisher_damp, s.dotted("fisher_damp"));
    if (s.has("proj_dim")) {
        int pd = s.require<int>("proj_dim");
        if (pd < 1) throw ConfigError(s.dotted("proj_dim"), "must be >= 1");
        h.proj_dim = pd;
    }
    return h;
}

AttributionConfig parse_attribution(const Section& s) {
    AttributionConfig a;
    s.allow_only({"method", "hessian", "property", "test_index", "trak_members",
                  "trak_subsample_frac", "trak_proj_dim", "loo_num_seeds", "seed"});
    a.method = s.get<std::string>("method", a.method);
    static const std::set<std::string> methods{"influence", "tracin", "trak", "loo"};
    if (!methods.count(a.method))
        throw ConfigError(s.dotted("method"), "must be influence|tracin|trak|loo");
    if (s.has("hessian")) a.hessian = parse_hessian(s.child("hessian"));
    a.property = s.get<std::string>("property", a.property);
    if (a.property != "mean_test_loss" && a.property != "test_point_loss")
        throw ConfigError(s.dotted("property"), "must be mean_test_loss|test_point_loss");
    a.test_index = s.get<std::int64_t>("test_index", a.test_index);
    if (a.test_index < 0) throw ConfigError(s.dotted("test_index"), "must be >= 0");
    a.trak_members = s.get<int>("trak_members", a.trak_members);
    if (a.trak_members < 1) throw ConfigError(s.dotted("trak_members"), "must be >= 1");
    a.trak_subsample_frac = s.get<double>("trak_subsample_frac", a.trak_subsample_frac);
    if (!(a.trak_subsample_frac > 0.0 && a.trak_subsample_frac <= 1.0))
        throw ConfigError(s.dotted("trak_subsample_frac"), "must be in (0,1]");
    if (s.has("trak_proj_dim")) {
        int pd = s.require<int>("trak_proj_dim");
        if (pd < 1) throw ConfigError(s.dotted("trak_proj_dim"), "must be >= 1");
        a.trak_proj_dim = pd;
    }
    a.loo_num_seeds = s.get<int>("loo_num_seeds", a.loo_num_seeds);
    if (a.loo_num_seeds < 1) throw ConfigError(s.dotted("loo_num_seeds"), "must be >= 1");
    a.seed = s.get<std::uint64_t>("seed", a.seed);
    return a;
}

EvalConfig parse_eval(const Section& s) {
    EvalConfig e;
    s.allow_only({"retrain_fractions", "prune_fractions", "n_seeds"});
    e.retrain_fractions = s.get<std::vector<double>>("retrain_fractions", e.retrain_fractions);
    for (double f : e.retrain_fractions) check_fraction(f, s.dotted("retrain_fractions"));
    e.prune_fractions = s.get<std::vector<double>>("prune_fractions", e.prune_fractions);
    for (double f : e.prune_fractions) check_fraction(f, s.dotted("prune_fractions"));
    e.n_seeds = s.get<int>("n_seeds", e.n_seeds);
    if (e.n_seeds < 1) throw ConfigError(s.dotted("n_seeds"), "must be >= 1");
    return e;
}

BenchConfig parse_bench(const Section& s) {
    BenchConfig b;
    s.allow_only({"group_sizes", "reps"});
    b.group_sizes = s.get<std::vector<std::int64_t>>("group_sizes", b.group_sizes);
    if (b.group_sizes.empty()) throw ConfigError(s.dotted("group_sizes"), "must be nonempty");
    for (std::int64_t gs : b.group_sizes)
        if (gs < 1) throw ConfigError(s.dotted("group_sizes"), "sizes must be >= 1");
    b.reps = s.get<int>("reps", b.reps);
    if (b.reps < 1) throw ConfigError(s.dotted("reps"), "must be >= 1");
    return b;
}

}  // namespace

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config", std::string("invalid JSON: ") + e.what());
    }

    Section root(j, "");
    root.allow_only({"dataset", "arch", "train", "grouping", "attribution", "eval", "bench",
                     "output_dir"});
    RunConfig cfg;
    if (root.has("dataset")) cfg.dataset = parse_dataset(root.child("dataset"));
    if (root.has("arch")) cfg.arch = parse_arch(root.child("arch"));
    if (root.has("train")) cfg.train = parse_train(root.child("train"));
    if (root.has("grouping")) cfg.grouping = parse_grouping(root.child("grouping"));
    if (root.has("attribution")) cfg.attribution = parse_attribution(root.child("attribution"));
    if (root.has("eval")) cfg.eval = parse_eval(root.child("eval"));
    if (root.has("bench")) cfg.bench = parse_bench(root.child("bench"));
    cfg.output_dir = root.get<std::string>("output_dir", cfg.output_dir);
    // Output dir override is the one env knob, so scripted runs can redirect
    // artifacts without editing configs.
    if (const char* env = std::getenv("GGDA_OUT")) cfg.output_dir = env;
    return cfg;
}

void override_seed(RunConfig& cfg, std::uint64_t seed) {
    cfg.dataset.seed = seed;
    cfg.train.cfg.seed = seed;
    cfg.grouping.seed = seed;
    cfg.attribution.seed = seed;
}

models::Architecture make_architecture(const ArchConfig& arch, std::int64_t input_dim,
                                       int num_classes) {
    if (arch.kind == "logreg") return models::logreg(static_cast<int>(input_dim), num_classes);
    return models::mlp(static_cast<int>(input_dim), arch.hidden, num_classes);
}

hessians::HessianStrategy make_strategy(const AttributionConfig& att) {
    const HessianConfig& h = att.hessian;
    hessians::HessianStrategy hs;
    if (h.kind == "exact") {
        hs = hessians::HessianStrategy::exact(h.exact_damp);
    } else if (h.kind == "identity") {
        hs = hessians::HessianStrategy::identity();
    } else if (h.kind == "cg") {
        hs = hessians::HessianStrategy::cg(h.cg_tol, h.cg_max_iter);
    } else if (h.kind == "lissa") {
        hs = hessians::HessianStrategy::lissa(h.lissa_damp, h.lissa_scale, h.lissa_depth,
                                              h.lissa_repeat, att.seed);
    } else if (h.kind == "emp_fisher") {
        hs = hessians::HessianStrategy::emp_fisher(h.proj_dim, h.fisher_damp, att.seed);
    } else {
        hs = hessians::HessianStrategy::batched_emp_fisher(h.proj_dim, h.fisher_damp, att.seed);
    }
    hs.seed = att.seed;
    return hs;
}

}  // namespace cli
}  // namespace ggda
