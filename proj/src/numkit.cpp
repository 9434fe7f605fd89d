#include "ggda/numkit.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

namespace ggda {
namespace numkit {

std::uint64_t Rng::mix(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer over the combined state.
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::vector<std::int64_t> Rng::sample_without_replacement(std::int64_t n, std::int64_t count) {
    std::vector<std::int64_t> pool(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    shuffle(pool);
    pool.resize(static_cast<std::size_t>(count));
    std::sort(pool.begin(), pool.end());
    return pool;
}

Vec solve_spd(const Mat& A, const Vec& b) {
    if (A.rows() != A.cols() || A.rows() != b.size())
        throw std::invalid_argument("solve_spd: dimension mismatch");
    double asym = (A - A.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-8 * (1.0 + A.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("solve_spd: matrix not symmetric");

    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success)
        throw NotSPD("solve_spd: Cholesky factorization failed (non-positive pivot)");
    Vec x = llt.solve(b);
    // One refinement step when the residual misses the contract bound.
    double bound = 1e-8 * (1.0 + b.cwiseAbs().maxCoeff());
    Vec r = b - A * x;
    if (r.cwiseAbs().maxCoeff() > bound) x += llt.solve(r);
    return x;
}

CgResult cg_solve(const std::function<Vec(const Vec&)>& apply_A, const Vec& b,
                  int max_iter, double tol) {
    CgResult out;
    out.x = Vec::Zero(b.size());
    double bnorm = b.norm();
    if (bnorm == 0.0) return out;

    Vec r = b;
    Vec p = r;
    double rs = r.squaredNorm();
    for (int it = 0; it < max_iter; ++it) {
        Vec Ap = apply_A(p);
        double pAp = p.dot(Ap);
        if (!std::isfinite(pAp) || pAp <= 0.0)
            throw Divergence("cg_solve: operator not positive definite on search direction");
        double alpha = rs / pAp;
        out.x += alpha * p;
        r -= alpha * Ap;
        out.iterations = it + 1;
        double rs_next = r.squaredNorm();
        if (!std::isfinite(rs_next))
            throw Divergence("cg_solve: residual became non-finite");
        if (std::sqrt(rs_next) <= tol * bnorm) break;
        p = r + (rs_next / rs) * p;
        rs = rs_next;
    }
    return out;
}

Vec lissa_inverse_hvp(const std::function<Vec(const Vec&, Rng&)>& apply_H,
                      const Vec& v, double damp, double scale, int depth,
                      int repeat, Rng& rng) {
    if (repeat < 1 || depth < 0) throw std::invalid_argument("lissa: bad depth/repeat");
    Vec acc = Vec::Zero(v.size());
    for (int run = 0; run < repeat; ++run) {
        Rng run_rng = rng.derive(static_cast<std::uint64_t>(run));
        Vec r = v;
        for (int t = 0; t < depth; ++t) {
            Vec Hr = apply_H(r, run_rng);
            r = v + r - (Hr + damp * r) / scale;
            double nrm = r.norm();
            if (!std::isfinite(nrm) || nrm > 1e12)
                throw Divergence("lissa_inverse_hvp: iterate diverged (scale too small?)");
        }
        acc += r / scale;
    }
    return acc / static_cast<double>(repeat);
}

Vec lissa_inverse_hvp(const std::function<Vec(const Vec&)>& apply_H, const Vec& v,
                      double damp, double scale, int depth, int repeat, Rng& rng) {
    return lissa_inverse_hvp(
        [&apply_H](const Vec& x, Rng&) { return apply_H(x); },
        v, damp, scale, depth, repeat, rng);
}

Mat projection_matrix(int p, int d, Rng& rng) {
    if (d < 1) throw std::invalid_argument("projection_matrix: target_dim < 1");
    Mat P(p, d);
    double sd = 1.0 / std::sqrt(static_cast<double>(d));
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < d; ++j) P(i, j) = sd * rng.next_normal();
    return P;
}

Mat apply_projection(const Mat& rows, const Mat& P) {
    if (rows.cols() != P.rows())
        throw std::invalid_argument("apply_projection: dimension mismatch");
    return rows * P;
}

Mat random_projection(const Mat& rows, int target_dim, Rng& rng) {
    if (target_dim > rows.cols())
        throw std::invalid_argument("random_projection: target_dim exceeds input dimension");
    Mat P = projection_matrix(static_cast<int>(rows.cols()), target_dim, rng);
    return apply_projection(rows, P);
}

Mat whiten(const Mat& X, double eps) {
    if (X.rows() < 2) throw std::invalid_argument("whiten: need at least 2 rows");
    Mat out(X.rows(), X.cols());
    const double n = static_cast<double>(X.rows());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        double mean = X.col(j).mean();
        double var = (X.col(j).array() - mean).square().sum() / n;
        double sd = std::sqrt(var);
        if (sd == 0.0) {
            out.col(j).setZero();
        } else {
            out.col(j) = (X.col(j).array() - mean) / (sd + eps);
        }
    }
    return out;
}

}  // namespace numkit
}  // namespace ggda
