#pragma once

// Dense reference constructions shared by the unit tests. Everything here is
// written from the defining formulas and never calls the FFT paths under test.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "otfs/modem.hpp"
#include "otfs/types.hpp"

namespace otfs::testing {

inline Eigen::MatrixXcd dft_matrix(int n) {
    Eigen::MatrixXcd f(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            f(a, b) = std::polar(1.0 / std::sqrt(static_cast<double>(n)),
                                 -2.0 * kPi * static_cast<double>(a) * b / n);
    return f;
}

inline Eigen::MatrixXcd kron(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    Eigen::MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// I_n(shift): identity with rows circularly shifted, (I(s) x)_p = x_{p-s}.
inline Eigen::MatrixXcd shift_matrix(int n, int shift) {
    Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(n, n);
    for (int p = 0; p < n; ++p) s(p, ((p - shift) % n + n) % n) = 1.0;
    return s;
}

/// F = F_N kron F_M for the column-major M x N grid.
inline Eigen::MatrixXcd grid_dft(int M, int N) { return kron(dft_matrix(N), dft_matrix(M)); }

inline Eigen::VectorXcd to_eigen(const CVec& v) {
    return Eigen::Map<const Eigen::VectorXcd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline CVec from_eigen(const Eigen::VectorXcd& v) { return CVec(v.data(), v.data() + v.size()); }

inline CVec random_cvec(std::mt19937_64& eng, std::size_t n, double var = 1.0) {
    std::normal_distribution<double> g(0.0, std::sqrt(var / 2.0));
    CVec v(n);
    for (auto& x : v) x = {g(eng), g(eng)};
    return v;
}

inline double max_abs_diff(const CVec& a, const CVec& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double rel_diff(const CVec& a, const CVec& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += std::norm(a[i] - b[i]);
        den += std::norm(b[i]);
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Exhaustive ML (= MAP under uniform priors) symbol vector for y = H x + w.
inline std::vector<int> brute_force_map(const Eigen::MatrixXcd& H, const CVec& y, const Constellation& c) {
    const int n = static_cast<int>(H.cols());
    const int A = c.size();
    long total = 1;
    for (int i = 0; i < n; ++i) total *= A;
    const Eigen::VectorXcd ye = to_eigen(y);
    std::vector<int> idx(static_cast<std::size_t>(n), 0), best;
    double best_cost = std::numeric_limits<double>::infinity();
    Eigen::VectorXcd x(n);
    for (long code = 0; code < total; ++code) {
        long rest = code;
        for (int i = 0; i < n; ++i) {
            idx[static_cast<std::size_t>(i)] = static_cast<int>(rest % A);
            rest /= A;
            x(i) = c.point(idx[static_cast<std::size_t>(i)]);
        }
        const double cost = (ye - H * x).squaredNorm();
        if (cost < best_cost) {
            best_cost = cost;
            best = idx;
        }
    }
    return best;
}

/// One iterate of the dense UAMP reference.
struct DenseUampIterate {
    CVec p, z, q, x_hat;
    double eps_hat = 0.0;
    double nu_q = 0.0;
    double nu_x = 0.0;
};

/// UAMP on r = diag(d) Phi x + w with explicit matrices, uniform priors,
/// noise precision estimated from eps = 1. Same safeguards as the detector:
/// variances floored at 1e-15, eps clamped to [1e-12, 1e12].
inline std::vector<DenseUampIterate> dense_uamp(const Eigen::MatrixXcd& Phi, const CVec& d, const CVec& r,
                                                const Constellation& c, int iters) {
    const int n = static_cast<int>(r.size());
    Eigen::VectorXcd de = to_eigen(d), re = to_eigen(r);
    Eigen::VectorXd lambda = de.cwiseAbs2();
    Eigen::VectorXcd s = Eigen::VectorXcd::Zero(n), x = Eigen::VectorXcd::Zero(n);
    double nu_x = 1.0, eps = 1.0;
    std::vector<DenseUampIterate> out;
    for (int t = 0; t < iters; ++t) {
        Eigen::VectorXd nu_p = (nu_x * lambda).cwiseMax(1e-15);
        Eigen::VectorXcd p = de.cwiseProduct(Phi * x) - nu_p.cast<Complex>().cwiseProduct(s);
        Eigen::VectorXd nu_z = (nu_p.cwiseInverse().array() + eps).inverse().matrix();
        Eigen::VectorXcd z = nu_z.cast<Complex>().cwiseProduct(
            p.cwiseQuotient(nu_p.cast<Complex>()) + eps * re);
        eps = std::clamp(n / std::max((re - z).squaredNorm() + nu_z.sum(), n * 1e-12), 1e-12, 1e12);
        Eigen::VectorXd nu_s = (nu_p.array() + 1.0 / eps).inverse().matrix().cwiseMax(1e-15);
        s = nu_s.cast<Complex>().cwiseProduct(re - p);
        const double nu_q = std::max(n / lambda.dot(nu_s), 1e-15);
        Eigen::VectorXcd q = x + nu_q * (Phi.adjoint() * de.conjugate().cwiseProduct(s));
        double vsum = 0.0;
        for (int j = 0; j < n; ++j) {
            double w[64], total = 0.0, mx = -1e300;
            for (int a = 0; a < c.size(); ++a) {
                w[a] = -std::norm(c.point(a) - q(j)) / nu_q;
                mx = std::max(mx, w[a]);
            }
            for (int a = 0; a < c.size(); ++a) total += (w[a] = std::exp(w[a] - mx));
            Complex m = 0.0;
            for (int a = 0; a < c.size(); ++a) m += w[a] / total * c.point(a);
            double v = 0.0;
            for (int a = 0; a < c.size(); ++a) v += w[a] / total * std::norm(c.point(a) - m);
            x(j) = m;
            vsum += v;
        }
        nu_x = vsum / n;
        out.push_back({from_eigen(p), from_eigen(z), from_eigen(q), from_eigen(x), eps, nu_q, nu_x});
    }
    return out;
}

/// QPSK MMSE at pseudo-noise variance tau, each axis a BPSK of amplitude
/// 1/sqrt(2) with noise variance tau/2, by trapezoidal integration.
inline double qpsk_mmse(double tau) {
    const double a = 1.0 / std::sqrt(2.0), s2 = tau / 2.0, sd = std::sqrt(s2);
    const int steps = 20000;
    const double lo = -12.0, hi = 12.0, h = (hi - lo) / steps;
    double acc = 0.0;
    for (int i = 0; i <= steps; ++i) {
        const double zz = lo + i * h;
        const double pdf = std::exp(-zz * zz / 2.0) / std::sqrt(2.0 * kPi);
        const double est = a * std::tanh(a * (a + sd * zz) / s2);
        const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
        acc += w * pdf * (a - est) * (a - est);
    }
    return 2.0 * acc * h;
}

}  // namespace otfs::testing
