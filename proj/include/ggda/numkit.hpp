#ifndef GGDA_NUMKIT_HPP
#define GGDA_NUMKIT_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "ggda/errors.hpp"

namespace ggda {

using Vec = Eigen::VectorXd;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace numkit {

/// Deterministic random generator. The raw 64-bit stream is the standard
/// mt19937_64 sequence (bit-exact everywhere); uniform/shuffle/sampling
/// transforms are pure bit manipulation and equally portable. The normal
/// transform goes through libm (log/cos), so its values are deterministic
/// per toolchain rather than bit-pinned across every libm. std distributions
/// are avoided throughout because their streams are unspecified.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, n). Modulo reduction; bias is immaterial at the
    /// n values used here and keeps the stream layout trivial.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    /// Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller. Consumes two uniforms per draw.
    double next_normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Sample `count` distinct values from [0, n) in sorted order.
    std::vector<std::int64_t> sample_without_replacement(std::int64_t n, std::int64_t count);

    /// Child generator for an independent derived stream.
    Rng derive(std::uint64_t stream) const { return Rng(mix(seed_, stream)); }

    /// splitmix64-style mixing of (seed, stream) into a child seed.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

/// Solves A x = b for symmetric positive-definite A via Cholesky.
/// Throws NotSPD when the factorization meets a non-positive pivot.
Vec solve_spd(const Mat& A, const Vec& b);

struct CgResult {
    Vec x;
    int iterations = 0;
};

/// Conjugate gradients on an SPD operator given as a vector-to-vector map.
/// Stops when ||Ax - b||_2 <= tol * ||b||_2 or after max_iter iterations.
CgResult cg_solve(const std::function<Vec(const Vec&)>& apply_A, const Vec& b,
                  int max_iter, double tol);

/// Truncated Neumann-series estimate of (H + damp I)^{-1} v: the recurrence
/// r_0 = v, r_t = v + (I - (H + damp I)/scale) r_{t-1} run for `depth` steps,
/// divided by `scale`, averaged over `repeat` runs in seed order. Each run
/// receives its own derived Rng for stochastic apply_H maps; deterministic
/// maps make the runs identical.
/// Throws Divergence when an iterate norm exceeds 1e12.
Vec lissa_inverse_hvp(const std::function<Vec(const Vec&, Rng&)>& apply_H,
                      const Vec& v, double damp, double scale, int depth,
                      int repeat, Rng& rng);

Vec lissa_inverse_hvp(const std::function<Vec(const Vec&)>& apply_H, const Vec& v,
                      double damp, double scale, int depth, int repeat, Rng& rng);

/// Gaussian projection matrix, p x d, entries N(0, 1/d). The same seed
/// reproduces the same matrix, which is what keeps train/test gradient
/// projections consistent.
Mat projection_matrix(int p, int d, Rng& rng);

Mat apply_projection(const Mat& rows, const Mat& P);

/// rows (n x p) -> rows * P with a fresh P drawn from rng.
Mat random_projection(const Mat& rows, int target_dim, Rng& rng);

/// Column-standardizes X: subtract column means, divide by (std + eps) with
/// population std. Zero-variance columns become all-zero.
Mat whiten(const Mat& X, double eps = 1e-8);

}  // namespace numkit
}  // namespace ggda

#endif
