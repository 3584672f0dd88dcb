#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "detectors.hpp"
#include "modem.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace otfs {

/// LLR convention: L = ln P(c = 0) / P(c = 1), so positive favours bit 0.
inline constexpr double kLlrClamp = 30.0;

inline double clamp_llr(double l) { return std::clamp(l, -kLlrClamp, kLlrClamp); }

namespace detail {

inline double log_sum_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double mx = std::max(a, b);
    return mx + std::log1p(std::exp(-std::abs(a - b)));
}

// log(1 + e^x) without overflow
inline double softplus(double x) {
    if (x == std::numeric_limits<double>::infinity()) return x;
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// ln P(c = bit) from the LLR of c.
inline double log_bit_prob(double llr, int bit) {
    return bit == 0 ? -softplus(-llr) : -softplus(llr);
}

inline int parity(unsigned v) { return __builtin_parity(v); }

}  // namespace detail

/// Feed-forward rate-1/2 convolutional code, generators in octal with the
/// most significant tap on the current input. Default [5,7]_8, K = 3.
struct CodeSpec {
    unsigned g1 = 05;
    unsigned g2 = 07;
    int constraint_length = 3;
    bool terminated = true;

    int memory() const { return constraint_length - 1; }
    int states() const { return 1 << memory(); }
    int coded_length(int info_bits) const {
        return 2 * (info_bits + (terminated ? memory() : 0));
    }
    /// Info bits that fill exactly coded_bits (zero tail included).
    int info_length(int coded_bits) const {
        if (coded_bits % 2 != 0) throw InvalidArgument("coded_bits", "rate-1/2 needs an even length");
        const int k = coded_bits / 2 - (terminated ? memory() : 0);
        if (k < 1) throw InvalidArgument("coded_bits", "frame too short for the code");
        return k;
    }

    // Input u in state s: register (u << m) | s, next state reg >> 1.
    int next_state(int s, int u) const { return ((u << memory()) | s) >> 1; }
    std::array<int, 2> outputs(int s, int u) const {
        const unsigned reg = (static_cast<unsigned>(u) << memory()) | static_cast<unsigned>(s);
        return {detail::parity(reg & g1), detail::parity(reg & g2)};
    }
};

inline Bits conv_encode(const Bits& info, const CodeSpec& code) {
    const int m = code.memory();
    const std::size_t steps = info.size() + (code.terminated ? static_cast<std::size_t>(m) : 0);
    Bits out;
    out.reserve(2 * steps);
    int s = 0;
    for (std::size_t t = 0; t < steps; ++t) {
        const int u = t < info.size() ? (info[t] & 1) : 0;
        const auto o = code.outputs(s, u);
        out.push_back(static_cast<std::uint8_t>(o[0]));
        out.push_back(static_cast<std::uint8_t>(o[1]));
        s = code.next_state(s, u);
    }
    return out;
}

struct BcjrOutput {
    RVec extrinsic;  // per coded bit: app - channel - apriori, clamped
    RVec app;        // per coded bit, unclamped
    RVec info_llr;   // a-posteriori LLR per information bit
};

/// Exact log-domain forward-backward (log-sum-exp with the exact
/// log1p(exp(-|d|)) correction). apriori may be empty (all zero).
inline BcjrOutput bcjr_decode(const RVec& channel, const RVec& apriori, const CodeSpec& code) {
    if (channel.size() % 2 != 0) throw InvalidArgument("channel_llrs", "length must be even");
    if (!apriori.empty() && apriori.size() != channel.size())
        throw InvalidArgument("apriori_llrs", "length must match channel LLRs");
    const int S = code.states();
    const int m = code.memory();
    const int T = static_cast<int>(channel.size() / 2);
    const int info_len = code.terminated ? T - m : T;
    if (info_len < 1) throw InvalidArgument("channel_llrs", "frame too short for the code");
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();

    RVec in(channel);
    if (!apriori.empty())
        for (std::size_t i = 0; i < in.size(); ++i) in[i] += apriori[i];

    auto gamma = [&](int t, int s, int u) {
        const auto o = code.outputs(s, u);
        return 0.5 * ((1 - 2 * o[0]) * in[2 * t] + (1 - 2 * o[1]) * in[2 * t + 1]);
    };
    auto allowed = [&](int t, int u) { return !(code.terminated && t >= info_len && u == 1); };

    std::vector<double> alpha(static_cast<std::size_t>(T + 1) * S, kNegInf);
    std::vector<double> beta(static_cast<std::size_t>(T + 1) * S, kNegInf);
    auto A = [&](int t, int s) -> double& { return alpha[static_cast<std::size_t>(t) * S + s]; };
    auto B = [&](int t, int s) -> double& { return beta[static_cast<std::size_t>(t) * S + s]; };

    A(0, 0) = 0.0;
    for (int t = 0; t < T; ++t) {
        for (int s = 0; s < S; ++s) {
            if (A(t, s) == kNegInf) continue;
            for (int u = 0; u < 2; ++u) {
                if (!allowed(t, u)) continue;
                double& dst = A(t + 1, code.next_state(s, u));
                dst = detail::log_sum_exp(dst, A(t, s) + gamma(t, s, u));
            }
        }
    }
    if (code.terminated) {
        B(T, 0) = 0.0;
    } else {
        for (int s = 0; s < S; ++s) B(T, s) = 0.0;
    }
    for (int t = T - 1; t >= 0; --t) {
        for (int s = 0; s < S; ++s) {
            double acc = kNegInf;
            for (int u = 0; u < 2; ++u) {
                if (!allowed(t, u)) continue;
                acc = detail::log_sum_exp(acc, gamma(t, s, u) + B(t + 1, code.next_state(s, u)));
            }
            B(t, s) = acc;
        }
    }

    BcjrOutput out{RVec(channel.size()), RVec(channel.size()),
                   RVec(static_cast<std::size_t>(info_len))};
    for (int t = 0; t < T; ++t) {
        std::array<double, 2> u_num{kNegInf, kNegInf};
        std::array<std::array<double, 2>, 2> c_num{{{kNegInf, kNegInf}, {kNegInf, kNegInf}}};
        for (int s = 0; s < S; ++s) {
            if (A(t, s) == kNegInf) continue;
            for (int u = 0; u < 2; ++u) {
                if (!allowed(t, u)) continue;
                const double metric = A(t, s) + gamma(t, s, u) + B(t + 1, code.next_state(s, u));
                u_num[u] = detail::log_sum_exp(u_num[u], metric);
                const auto o = code.outputs(s, u);
                c_num[0][o[0]] = detail::log_sum_exp(c_num[0][o[0]], metric);
                c_num[1][o[1]] = detail::log_sum_exp(c_num[1][o[1]], metric);
            }
        }
        if (t < info_len) out.info_llr[t] = u_num[0] - u_num[1];
        for (int i = 0; i < 2; ++i) {
            const std::size_t idx = 2 * static_cast<std::size_t>(t) + i;
            out.app[idx] = c_num[i][0] - c_num[i][1];
            out.extrinsic[idx] = clamp_llr(out.app[idx] - in[idx]);
        }
    }
    return out;
}

/// Seeded uniform random permutation: interleave(x)[i] = x[perm[i]].
class Interleaver {
public:
    Interleaver() = default;
    Interleaver(std::size_t length, std::uint64_t seed) : perm_(length) {
        std::iota(perm_.begin(), perm_.end(), 0);
        Engine eng(seed);
        for (std::size_t i = length; i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(perm_[i - 1], perm_[pick(eng)]);
        }
    }

    std::size_t size() const { return perm_.size(); }
    const std::vector<std::size_t>& permutation() const { return perm_; }

    template <class T>
    std::vector<T> interleave(const std::vector<T>& in) const {
        check(in.size());
        std::vector<T> out(in.size());
        for (std::size_t i = 0; i < perm_.size(); ++i) out[i] = in[perm_[i]];
        return out;
    }

    template <class T>
    std::vector<T> deinterleave(const std::vector<T>& in) const {
        check(in.size());
        std::vector<T> out(in.size());
        for (std::size_t i = 0; i < perm_.size(); ++i) out[perm_[i]] = in[i];
        return out;
    }

private:
    void check(std::size_t n) const {
        if (n != perm_.size()) throw InvalidArgument("bits", "interleaver length mismatch");
    }
    std::vector<std::size_t> perm_;
};

// ---------------------------------------------------------------------------
// Symbol <-> bit soft information
// ---------------------------------------------------------------------------

struct ExtrinsicStats {
    CVec mean;
    RVec var;  // one entry when shared by all symbols
};

/// The detector's pseudo observations already exclude the symbol's own prior,
/// so they are the extrinsic statistics.
inline ExtrinsicStats extrinsic_stats(const PseudoObservation& obs) { return {obs.q, obs.nu_q}; }

struct GaussianExtrinsic {
    Complex mean;
    double var;
    bool informative;  // false when the posterior gained nothing over the prior
};

/// Remove a Gaussian prior (m, v) from a posterior (m_p, v_p).
inline GaussianExtrinsic gaussian_extrinsic(Complex m_post, double v_post, Complex m_prior,
                                            double v_prior) {
    const double precision = 1.0 / v_post - 1.0 / v_prior;
    if (!(precision > 0.0))
        return {Complex{0.0, 0.0}, std::numeric_limits<double>::infinity(), false};
    const double ve = 1.0 / precision;
    return {ve * (m_post / v_post - m_prior / v_prior), ve, true};
}

/// Extrinsic coded-bit LLRs from Gaussian symbol messages (exact sum, no
/// max-log). apriori holds the decoder's LLRs in symbol bit order, or is
/// empty for uniform. Output clamped to +-30.
inline RVec demap_llr(const CVec& mean, const RVec& var, const RVec& apriori,
                      const Constellation& c) {
    const int Q = c.bits_per_symbol();
    const int A = c.size();
    const std::size_t n = mean.size();
    if (var.size() != 1 && var.size() != n) throw InvalidArgument("v_e", "variance length mismatch");
    if (!apriori.empty() && apriori.size() != n * static_cast<std::size_t>(Q))
        throw InvalidArgument("apriori", "length must be symbols * bits per symbol");
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();

    RVec out(n * static_cast<std::size_t>(Q));
    RVec total(static_cast<std::size_t>(A));
    RVec bitlog(static_cast<std::size_t>(A) * Q);
    for (std::size_t j = 0; j < n; ++j) {
        const double v = var.size() == 1 ? var[0] : var[j];
        if (!(v > 0.0)) throw InvalidArgument("v_e", "extrinsic variance must be > 0");
        for (int a = 0; a < A; ++a) {
            double t = -std::norm(c.point(a) - mean[j]) / v;
            for (int q = 0; q < Q; ++q) {
                const double lp =
                    apriori.empty() ? 0.0
                                    : detail::log_bit_prob(apriori[j * Q + q], c.label_bit(a, q));
                bitlog[static_cast<std::size_t>(a) * Q + q] = lp;
                t += lp;
            }
            total[a] = t;
        }
        for (int q = 0; q < Q; ++q) {
            double num = kNegInf, den = kNegInf;
            for (int a = 0; a < A; ++a) {
                const double t = total[a] - bitlog[static_cast<std::size_t>(a) * Q + q];
                if (c.label_bit(a, q) == 0)
                    num = detail::log_sum_exp(num, t);
                else
                    den = detail::log_sum_exp(den, t);
            }
            out[j * Q + q] = clamp_llr(num - den);
        }
    }
    return out;
}

/// p(x_j = alpha_a) = prod_q P(c_j^q = alpha_a^q).
inline SymbolPriors priors_from_llr(const RVec& llr, const Constellation& c) {
    const int Q = c.bits_per_symbol();
    const int A = c.size();
    if (llr.size() % static_cast<std::size_t>(Q) != 0)
        throw InvalidArgument("llr", "length must be a multiple of bits per symbol");
    const int n = static_cast<int>(llr.size() / static_cast<std::size_t>(Q));
    SymbolPriors pr{n, A, RVec(static_cast<std::size_t>(n) * A)};
    for (int j = 0; j < n; ++j) {
        double sum = 0.0;
        for (int a = 0; a < A; ++a) {
            double lp = 0.0;
            for (int q = 0; q < Q; ++q)
                lp += detail::log_bit_prob(llr[static_cast<std::size_t>(j) * Q + q], c.label_bit(a, q));
            const double p = std::exp(lp);
            pr.prob[static_cast<std::size_t>(j) * A + a] = p;
            sum += p;
        }
        for (int a = 0; a < A; ++a) pr.prob[static_cast<std::size_t>(j) * A + a] /= sum;
    }
    return pr;
}

inline Bits hard_bits(const RVec& llr) {
    Bits b(llr.size());
    for (std::size_t i = 0; i < llr.size(); ++i) b[i] = llr[i] < 0.0 ? 1 : 0;
    return b;
}

inline long count_bit_errors(const Bits& a, const Bits& b) {
    if (a.size() != b.size()) throw InvalidArgument("bits", "length mismatch");
    long e = 0;
    for (std::size_t i = 0; i < a.size(); ++i) e += (a[i] != b[i]);
    return e;
}

}  // namespace otfs
