#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "channel.hpp"
#include "fft.hpp"
#include "modem.hpp"
#include "types.hpp"

namespace otfs {

/// Row-major |symbols| x |alphabet| probability table p(x_j = alpha_a).
struct SymbolPriors {
    int symbols = 0;
    int alphabet = 0;
    RVec prob;

    static SymbolPriors uniform(int symbols, int alphabet) {
        return {symbols, alphabet,
                RVec(static_cast<std::size_t>(symbols) * alphabet, 1.0 / alphabet)};
    }
    double operator()(int j, int a) const {
        return prob[static_cast<std::size_t>(j) * alphabet + a];
    }
};

/// Decoupled scalar observations q_j = x_j + noise. nu_q has one entry when
/// the variance is shared by every symbol.
struct PseudoObservation {
    CVec q;
    RVec nu_q;

    bool shared_variance() const { return nu_q.size() == 1; }
    double variance(std::size_t j) const { return shared_variance() ? nu_q[0] : nu_q[j]; }
};

struct SymbolPosterior {
    int alphabet = 0;
    RVec beta;  // row-major MN x |A|
    CVec mean;
    RVec var;

    double prob(int j, int a) const { return beta[static_cast<std::size_t>(j) * alphabet + a]; }
};

/// Posterior over a discrete alphabet given Gaussian pseudo observations and
/// per-symbol priors (uniform when priors is null). Evaluated in the log
/// domain with the row maximum subtracted.
inline SymbolPosterior discrete_posterior(const PseudoObservation& obs, const SymbolPriors* priors,
                                          const Constellation& c) {
    const std::size_t n = obs.q.size();
    const int A = c.size();
    if (!obs.shared_variance() && obs.nu_q.size() != n)
        throw InvalidArgument("nu_q", "variance vector length must match q");
    if (priors && (priors->symbols != static_cast<int>(n) || priors->alphabet != A))
        throw InvalidArgument("priors", "prior table shape mismatch");

    SymbolPosterior post{A, RVec(n * static_cast<std::size_t>(A)), CVec(n), RVec(n)};
    RVec logxi(static_cast<std::size_t>(A));
    for (std::size_t j = 0; j < n; ++j) {
        const double inv_var = 1.0 / obs.variance(j);
        double mx = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < A; ++a) {
            double lp = -std::norm(c.point(a) - obs.q[j]) * inv_var;
            if (priors) {
                const double pr = (*priors)(static_cast<int>(j), a);
                lp = pr > 0.0 ? lp + std::log(pr) : -std::numeric_limits<double>::infinity();
            }
            logxi[a] = lp;
            mx = std::max(mx, lp);
        }
        if (!std::isfinite(mx))
            throw InvalidArgument("priors", "prior row " + std::to_string(j) + " is all zero");
        double total = 0.0;
        double* row = post.beta.data() + j * static_cast<std::size_t>(A);
        for (int a = 0; a < A; ++a) {
            row[a] = std::exp(logxi[a] - mx);
            total += row[a];
        }
        Complex m = 0.0;
        for (int a = 0; a < A; ++a) {
            row[a] /= total;
            m += row[a] * c.point(a);
        }
        double v = 0.0;
        for (int a = 0; a < A; ++a) v += row[a] * std::norm(c.point(a) - m);
        post.mean[j] = m;
        post.var[j] = v;
    }
    return post;
}

struct DetectorOptions {
    int max_iter = 15;
    /// x_hat <- (1 - damping) x_new + damping x_old, same for nu_x. 0 disables.
    double damping = 0.0;
    bool early_stop = false;
    double early_stop_tol = 1e-6;
    /// Freeze the noise precision instead of estimating it (UAMP only).
    std::optional<double> fixed_noise_precision;
    double variance_floor = 1e-15;
};

struct DetectorState {
    CVec s;
    CVec x_hat;
    RVec nu_x;  // one entry for UAMP, MN entries for AMP
    double eps_hat = 1.0;
    int t = 0;
};

/// Everything one iteration produced.
struct DetectorIterate {
    PseudoObservation obs;
    SymbolPosterior post;
    double eps_hat = 0.0;
    CVec p;      // UAMP only
    CVec z_hat;  // UAMP only
};

/// A detector split into its observation half (pseudo observations q, nu_q
/// from the current estimate) and its posterior half (symbol beliefs given
/// q and priors), so a decoder can run in between.
class IterativeDetector {
public:
    virtual ~IterativeDetector() = default;

    virtual PseudoObservation observe() = 0;

    const SymbolPosterior& absorb(const PseudoObservation& obs, const SymbolPriors* priors) {
        SymbolPosterior post = discrete_posterior(obs, priors, constellation_);
        const double g = options_.damping;
        if (g > 0.0 && state_.t > 0) {
            for (std::size_t j = 0; j < post.mean.size(); ++j)
                post.mean[j] = (1.0 - g) * post.mean[j] + g * state_.x_hat[j];
        }
        state_.x_hat = post.mean;
        if (state_.nu_x.size() == 1) {
            double avg = 0.0;
            for (double v : post.var) avg += v;
            avg /= static_cast<double>(post.var.size());
            state_.nu_x[0] = g > 0.0 && state_.t > 0 ? (1.0 - g) * avg + g * state_.nu_x[0] : avg;
        } else {
            for (std::size_t j = 0; j < post.var.size(); ++j)
                state_.nu_x[j] =
                    g > 0.0 && state_.t > 0 ? (1.0 - g) * post.var[j] + g * state_.nu_x[j] : post.var[j];
        }
        ++state_.t;
        posterior_ = std::move(post);
        return posterior_;
    }

    DetectorIterate step(const SymbolPriors* priors = nullptr) {
        DetectorIterate it;
        it.obs = observe();
        it.p = last_p_;
        it.z_hat = last_z_;
        it.eps_hat = state_.eps_hat;
        it.post = absorb(it.obs, priors);
        return it;
    }

    /// Runs up to max_iter iterations with fixed priors.
    std::vector<DetectorIterate> run(const SymbolPriors* priors = nullptr) {
        std::vector<DetectorIterate> trace;
        for (int i = 0; i < options_.max_iter; ++i) {
            const CVec before = state_.x_hat;
            trace.push_back(step(priors));
            if (options_.early_stop && i > 0) {
                double diff = 0.0, ref = 0.0;
                for (std::size_t j = 0; j < before.size(); ++j) {
                    diff += std::norm(state_.x_hat[j] - before[j]);
                    ref += std::norm(before[j]);
                }
                if (ref > 0.0 && std::sqrt(diff / ref) < options_.early_stop_tol) break;
            }
        }
        return trace;
    }

    const DetectorState& state() const { return state_; }
    const SymbolPosterior& posterior() const { return posterior_; }
    const Constellation& constellation() const { return constellation_; }
    double eps_hat() const { return state_.eps_hat; }
    int dim() const { return static_cast<int>(state_.x_hat.size()); }

protected:
    IterativeDetector(int dim, bool vector_variance, const Constellation& c, DetectorOptions opt)
        : constellation_(c), options_(opt) {
        state_.s.assign(static_cast<std::size_t>(dim), 0.0);
        state_.x_hat.assign(static_cast<std::size_t>(dim), 0.0);
        state_.nu_x.assign(vector_variance ? static_cast<std::size_t>(dim) : 1, 1.0);
        state_.eps_hat = 1.0;
    }

    void check_finite(const PseudoObservation& obs) const {
        if (!all_finite(obs.q))
            throw DetectorDivergence(state_.t, "non-finite pseudo observation");
        for (double v : obs.nu_q)
            if (!std::isfinite(v) || v > 1e12)
                throw DetectorDivergence(state_.t, "pseudo observation variance exploded");
    }

    Constellation constellation_;
    DetectorOptions options_;
    DetectorState state_;
    SymbolPosterior posterior_;
    CVec last_p_;
    CVec last_z_;
};

// ---------------------------------------------------------------------------
// AMP on the DD-domain model y = H x + w with known noise precision
// ---------------------------------------------------------------------------

class AmpDetector final : public IterativeDetector {
public:
    AmpDetector(const SparseChannelMatrix& h, CVec y, double noise_precision,
                const Constellation& c, DetectorOptions opt = {})
        : IterativeDetector(h.dim(), true, c, opt), h_(h), y_(std::move(y)) {
        if (static_cast<int>(y_.size()) != h.dim()) throw InvalidArgument("y", "length mismatch");
        if (!(noise_precision > 0.0))
            throw InvalidArgument("noise_precision", "AMP needs a known positive noise precision");
        state_.eps_hat = noise_precision;
    }

    PseudoObservation observe() override {
        const double floor = options_.variance_floor;
        const double noise_var = 1.0 / state_.eps_hat;
        RVec nu_p = h_.multiply_abs2(state_.nu_x);
        const CVec hx = h_.multiply(state_.x_hat);
        const std::size_t n = y_.size();
        CVec p(n);
        RVec nu_s(n);
        for (std::size_t j = 0; j < n; ++j) {
            nu_p[j] = std::max(nu_p[j], floor);
            p[j] = hx[j] - nu_p[j] * state_.s[j];
            nu_s[j] = std::max(1.0 / (nu_p[j] + noise_var), floor);
            state_.s[j] = nu_s[j] * (y_[j] - p[j]);
        }
        const RVec inv_nu_q = h_.multiply_abs2_adjoint(nu_s);
        const CVec hs = h_.multiply_adjoint(state_.s);
        PseudoObservation obs{CVec(n), RVec(n)};
        for (std::size_t j = 0; j < n; ++j) {
            obs.nu_q[j] = std::max(1.0 / inv_nu_q[j], floor);
            obs.q[j] = state_.x_hat[j] + obs.nu_q[j] * hs[j];
        }
        check_finite(obs);
        return obs;
    }

private:
    const SparseChannelMatrix& h_;
    CVec y_;
};

// ---------------------------------------------------------------------------
// UAMP on r = diag(d) Phi x + w with Phi unitary
// ---------------------------------------------------------------------------

/// Phi = F_N kron F_M via 2D FFTs (bi-orthogonal waveform).
class DftTransform {
public:
    explicit DftTransform(const SpectralChannel& s) : fft_(s.M, s.N), d_(s.d), lambda_(s.lambda) {}
    CVec forward(const CVec& x) { return fft_.forward2(x); }
    CVec adjoint(const CVec& v) { return fft_.inverse2(v); }
    const CVec& d() const { return d_; }
    const RVec& lambda() const { return lambda_; }

private:
    GridFft fft_;
    CVec d_;
    RVec lambda_;
};

/// Phi = V (F_N^H kron I_M), V block diagonal (rectangular waveform).
class RectTransform {
public:
    explicit RectTransform(const RectSvdChannel& s)
        : svd_(s), fft_(s.M, s.N), d_(s.d.begin(), s.d.end()), lambda_(s.lambda) {}
    CVec forward(const CVec& x) { return svd_.apply_v(fft_.rows_inverse(x)); }
    CVec adjoint(const CVec& v) { return fft_.rows_forward(svd_.apply_v_adjoint(v)); }
    const CVec& d() const { return d_; }
    const RVec& lambda() const { return lambda_; }

private:
    const RectSvdChannel& svd_;
    GridFft fft_;
    CVec d_;
    RVec lambda_;
};

template <class Transform>
class UampDetector final : public IterativeDetector {
public:
    template <class Channel>
    UampDetector(const Channel& ch, CVec r, const Constellation& c, DetectorOptions opt = {})
        : IterativeDetector(static_cast<int>(r.size()), false, c, opt), phi_(ch), r_(std::move(r)) {
        if (phi_.d().size() != r_.size()) throw InvalidArgument("r", "length mismatch");
        if (opt.fixed_noise_precision) {
            if (!(*opt.fixed_noise_precision > 0.0))
                throw InvalidArgument("noise_precision", "must be > 0");
            state_.eps_hat = *opt.fixed_noise_precision;
        }
        for (double l : phi_.lambda()) singular_ |= !(l > 0.0);
    }

    /// True when some lambda_j is zero; the variance floors keep the
    /// iteration finite but that direction carries no information.
    bool singular_channel() const { return singular_; }

    PseudoObservation observe() override {
        const double floor = options_.variance_floor;
        const std::size_t n = r_.size();
        const double mn = static_cast<double>(n);
        const CVec& d = phi_.d();
        const RVec& lambda = phi_.lambda();
        const double nu_x = state_.nu_x[0];
        const double eps = state_.eps_hat;

        // output-side estimate z
        const CVec phix = phi_.forward(state_.x_hat);
        RVec nu_p(n), nu_z(n);
        CVec p(n), z(n);
        double resid = 0.0, nu_z_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            nu_p[j] = std::max(nu_x * lambda[j], floor);
            p[j] = d[j] * phix[j] - nu_p[j] * state_.s[j];
            nu_z[j] = 1.0 / (1.0 / nu_p[j] + eps);
            z[j] = nu_z[j] * (p[j] / nu_p[j] + eps * r_[j]);
            resid += std::norm(r_[j] - z[j]);
            nu_z_sum += nu_z[j];
        }

        // noise precision, used by s and nu_s below
        double eps_next = eps;
        if (!options_.fixed_noise_precision) {
            const double denom = std::max(resid + nu_z_sum, mn * kMinNoiseVar);
            eps_next = std::clamp(mn / denom, kMinPrecision, 1.0 / kMinNoiseVar);
        }
        state_.eps_hat = eps_next;

        // back to the symbol domain
        double lambda_nu_s = 0.0;
        CVec ds(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double nu_s = std::max(1.0 / (nu_p[j] + 1.0 / eps_next), floor);
            state_.s[j] = nu_s * (r_[j] - p[j]);
            lambda_nu_s += lambda[j] * nu_s;
            ds[j] = std::conj(d[j]) * state_.s[j];
        }
        const double nu_q = std::max(mn / lambda_nu_s, floor);
        const CVec back = phi_.adjoint(ds);
        PseudoObservation obs{CVec(n), RVec{nu_q}};
        for (std::size_t j = 0; j < n; ++j) obs.q[j] = state_.x_hat[j] + nu_q * back[j];

        last_p_ = std::move(p);
        last_z_ = std::move(z);
        check_finite(obs);
        return obs;
    }

private:
    static constexpr double kMinNoiseVar = 1e-12;
    static constexpr double kMinPrecision = 1e-12;

    Transform phi_;
    CVec r_;
    bool singular_ = false;
};

using UampDftDetector = UampDetector<DftTransform>;
using UampRectDetector = UampDetector<RectTransform>;

// Whole-run conveniences.

inline std::vector<DetectorIterate> amp_detect(const SparseChannelMatrix& h, const CVec& y,
                                               double noise_precision, const SymbolPriors* priors,
                                               const Constellation& c, DetectorOptions opt = {}) {
    AmpDetector det(h, y, noise_precision, c, opt);
    return det.run(priors);
}

inline std::vector<DetectorIterate> uamp_detect(const SpectralChannel& spec, const CVec& r,
                                                const SymbolPriors* priors, const Constellation& c,
                                                DetectorOptions opt = {}) {
    UampDftDetector det(spec, r, c, opt);
    return det.run(priors);
}

inline std::vector<DetectorIterate> uamp_rect_detect(const RectSvdChannel& svd, const CVec& r,
                                                     const SymbolPriors* priors,
                                                     const Constellation& c,
                                                     DetectorOptions opt = {}) {
    UampRectDetector det(svd, r, c, opt);
    return det.run(priors);
}

}  // namespace otfs
