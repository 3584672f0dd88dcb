#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "fft.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace otfs {

// ---------------------------------------------------------------------------
// Grid and channel description
// ---------------------------------------------------------------------------

struct OtfsGrid {
    int M = 64;                        // delay bins / subcarriers
    int N = 16;                        // Doppler bins / time slots
    double subcarrier_spacing = 2.0e3;  // Hz
    double carrier_freq = 3.0e9;        // Hz

    int size() const { return M * N; }
    double symbol_duration() const { return 1.0 / subcarrier_spacing; }
    double delay_resolution() const { return 1.0 / (M * subcarrier_spacing); }
    double doppler_resolution() const { return subcarrier_spacing / N; }

    void validate() const {
        if (M < 2) throw InvalidArgument("M", "must be >= 2");
        if (N < 2) throw InvalidArgument("N", "must be >= 2");
        if (!(subcarrier_spacing > 0.0))
            throw InvalidArgument("subcarrier_spacing", "must be positive");
        if (!(carrier_freq > 0.0)) throw InvalidArgument("carrier_freq", "must be positive");
    }
};

/// Largest integer Doppler index reached by a terminal moving at speed_kmh.
inline int max_doppler_index(const OtfsGrid& grid, double speed_kmh) {
    constexpr double kLightSpeed = 299792458.0;
    const double nu_max = speed_kmh / 3.6 * grid.carrier_freq / kLightSpeed;
    return static_cast<int>(std::floor(nu_max / grid.doppler_resolution() + 1e-3));
}

struct ChannelPath {
    Complex gain{1.0, 0.0};
    int delay = 0;             // l_i
    int doppler = 0;           // k_i, any integer (shifts act mod N)
    double frac_doppler = 0.0;  // kappa_i in [-1/2, 1/2]
};

struct DdChannel {
    OtfsGrid grid;
    std::vector<ChannelPath> paths;

    bool integer_doppler() const {
        return std::all_of(paths.begin(), paths.end(),
                           [](const ChannelPath& p) { return p.frac_doppler == 0.0; });
    }

    void validate() const {
        grid.validate();
        if (paths.empty()) throw InvalidArgument("paths", "need at least one path");
        for (const auto& p : paths) {
            if (p.delay < 0 || p.delay >= grid.M)
                throw InvalidArgument("delay", "delay index outside [0, M)");
            if (!(std::abs(p.frac_doppler) <= 0.5))
                throw InvalidArgument("kappa", "fractional Doppler outside [-1/2, 1/2]");
        }
    }
};

struct ChannelDrawParams {
    int paths = 10;
    double pdp_alpha = 0.0;
    int k_max = 6;
    int l_max = 14;
    bool fractional = false;
    bool distinct_delays = true;  // draw delays of paths 2..P without replacement
};

/// Normalized power-delay profile: exp(-alpha*l_i) / sum_i exp(-alpha*l_i).
inline RVec path_variances(const std::vector<int>& delays, double alpha) {
    RVec eta(delays.size());
    double total = 0.0;
    for (std::size_t i = 0; i < delays.size(); ++i) {
        eta[i] = std::exp(-alpha * delays[i]);
        total += eta[i];
    }
    for (auto& e : eta) e /= total;
    return eta;
}

/// Random DD channel: path 1 at delay 0, the rest uniform on [1, l_max],
/// Doppler uniform on [-k_max, k_max], gains CN(0, eta_i).
inline DdChannel sample_channel(const OtfsGrid& grid, const ChannelDrawParams& prm,
                                std::uint64_t seed) {
    grid.validate();
    if (prm.paths < 1) throw InvalidArgument("P", "must be >= 1");
    if (prm.l_max < 0 || prm.l_max >= grid.M) throw InvalidArgument("l_max", "must satisfy 0 <= l_max < M");
    if (prm.k_max < 0 || 2 * prm.k_max >= grid.N) throw InvalidArgument("k_max", "must satisfy 0 <= k_max < N/2");
    if (prm.paths > 1 && prm.l_max == 0)
        throw InvalidArgument("l_max", "must be >= 1 when P > 1");
    if (prm.distinct_delays && prm.paths - 1 > prm.l_max)
        throw InvalidArgument("P", "distinct delays need P - 1 <= l_max");

    Engine eng(seed);
    std::vector<int> delays(static_cast<std::size_t>(prm.paths), 0);
    if (prm.paths > 1) {
        if (prm.distinct_delays) {
            std::vector<int> pool(static_cast<std::size_t>(prm.l_max));
            std::iota(pool.begin(), pool.end(), 1);
            // partial Fisher-Yates
            for (int i = 0; i < prm.paths - 1; ++i) {
                std::uniform_int_distribution<int> pick(i, prm.l_max - 1);
                std::swap(pool[static_cast<std::size_t>(i)],
                          pool[static_cast<std::size_t>(pick(eng))]);
                delays[static_cast<std::size_t>(i) + 1] = pool[static_cast<std::size_t>(i)];
            }
        } else {
            std::uniform_int_distribution<int> pick(1, prm.l_max);
            for (int i = 1; i < prm.paths; ++i) delays[static_cast<std::size_t>(i)] = pick(eng);
        }
    }
    const RVec eta = path_variances(delays, prm.pdp_alpha);

    std::uniform_int_distribution<int> dopp(-prm.k_max, prm.k_max);
    std::uniform_real_distribution<double> frac(-0.5, 0.5);

    DdChannel ch{grid, {}};
    ch.paths.resize(static_cast<std::size_t>(prm.paths));
    for (std::size_t i = 0; i < ch.paths.size(); ++i) {
        auto& p = ch.paths[i];
        p.delay = delays[i];
        p.doppler = dopp(eng);
        p.frac_doppler = prm.fractional ? frac(eng) : 0.0;
        p.gain = complex_gaussian(eng, eta[i]);
    }
    return ch;
}

/// Doppler spreading coefficient g(c, kappa_i) of one path, including the
/// delay-Doppler phase term. The 0/0 point (-c - kappa a multiple of N)
/// evaluates to its limit.
inline Complex spreading_coeff(int c, const ChannelPath& path, const OtfsGrid& grid) {
    const int N = grid.N;
    if (c <= -N || c >= N) throw InvalidArgument("c", "must satisfy -N < c < N");
    const double x = -static_cast<double>(c) - path.frac_doppler;
    const Complex phase = std::exp(-kJ * (2.0 * kPi * path.delay *
                                          (path.doppler + path.frac_doppler) /
                                          static_cast<double>(grid.M * N)));
    const double nearest = std::round(x);
    if (std::abs(x - nearest) < 1e-12) {
        const long n = std::lround(nearest);
        return (n % N == 0) ? phase : Complex{0.0, 0.0};
    }
    const Complex num = 1.0 - std::exp(-kJ * (2.0 * kPi * x));
    const Complex den = 1.0 - std::exp(-kJ * (2.0 * kPi * x / N));
    return num / den / static_cast<double>(N) * phase;
}

// ---------------------------------------------------------------------------
// Sparse DD-domain channel matrix
// ---------------------------------------------------------------------------

/// Row-compressed MN x MN complex matrix with matrix-vector products for the
/// message-passing detectors.
class SparseChannelMatrix {
public:
    SparseChannelMatrix() = default;

    /// Assemble from per-row triplets; duplicate columns are summed.
    SparseChannelMatrix(int dim, std::vector<std::vector<std::pair<int, Complex>>> rows)
        : dim_(dim) {
        row_ptr_.reserve(static_cast<std::size_t>(dim) + 1);
        row_ptr_.push_back(0);
        for (auto& row : rows) {
            std::sort(row.begin(), row.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            for (std::size_t i = 0; i < row.size();) {
                int col = row[i].first;
                Complex v = 0.0;
                for (; i < row.size() && row[i].first == col; ++i) v += row[i].second;
                cols_.push_back(col);
                vals_.push_back(v);
                abs2_.push_back(std::norm(v));
            }
            row_ptr_.push_back(static_cast<int>(cols_.size()));
        }
    }

    int dim() const { return dim_; }
    std::size_t nonzeros() const { return vals_.size(); }
    int row_nonzeros(int r) const { return row_ptr_[r + 1] - row_ptr_[r]; }

    Complex at(int r, int c) const {
        for (int i = row_ptr_[r]; i < row_ptr_[r + 1]; ++i)
            if (cols_[i] == c) return vals_[i];
        return 0.0;
    }

    CVec multiply(const CVec& x) const {
        CVec y(static_cast<std::size_t>(dim_));
        for (int r = 0; r < dim_; ++r) {
            Complex acc = 0.0;
            for (int i = row_ptr_[r]; i < row_ptr_[r + 1]; ++i) acc += vals_[i] * x[cols_[i]];
            y[r] = acc;
        }
        return y;
    }

    /// H^H s
    CVec multiply_adjoint(const CVec& s) const {
        CVec y(static_cast<std::size_t>(dim_));
        for (int r = 0; r < dim_; ++r)
            for (int i = row_ptr_[r]; i < row_ptr_[r + 1]; ++i)
                y[cols_[i]] += std::conj(vals_[i]) * s[r];
        return y;
    }

    /// |H|^2 v
    RVec multiply_abs2(const RVec& v) const {
        RVec y(static_cast<std::size_t>(dim_));
        for (int r = 0; r < dim_; ++r) {
            double acc = 0.0;
            for (int i = row_ptr_[r]; i < row_ptr_[r + 1]; ++i) acc += abs2_[i] * v[cols_[i]];
            y[r] = acc;
        }
        return y;
    }

    /// |H^H|^2 v
    RVec multiply_abs2_adjoint(const RVec& v) const {
        RVec y(static_cast<std::size_t>(dim_));
        for (int r = 0; r < dim_; ++r)
            for (int i = row_ptr_[r]; i < row_ptr_[r + 1]; ++i) y[cols_[i]] += abs2_[i] * v[r];
        return y;
    }

    CVec column(int c) const {
        CVec col(static_cast<std::size_t>(dim_));
        for (int r = 0; r < dim_; ++r) col[r] = at(r, c);
        return col;
    }

    Eigen::MatrixXcd dense() const {
        Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim_, dim_);
        for (int r = 0; r < dim_; ++r)
            for (int i = row_ptr_[r]; i < row_ptr_[r + 1]; ++i) m(r, cols_[i]) += vals_[i];
        return m;
    }

private:
    int dim_ = 0;
    std::vector<int> row_ptr_;
    std::vector<int> cols_;
    CVec vals_;
    RVec abs2_;
};

namespace detail {

// Adds coeff * I_N(shift_n) kron I_M(shift_m) to the row lists.
inline void add_shift_block(std::vector<std::vector<std::pair<int, Complex>>>& rows, int M,
                            int N, int shift_n, int shift_m, Complex coeff) {
    for (int k = 0; k < N; ++k) {
        const int kc = positive_mod(k - shift_n, N);
        for (int l = 0; l < M; ++l) {
            const int lc = positive_mod(l - shift_m, M);
            rows[static_cast<std::size_t>(k * M + l)].emplace_back(kc * M + lc, coeff);
        }
    }
}

}  // namespace detail

/// Bi-orthogonal DD channel matrix with fractional Doppler. The c-sum runs
/// over [-trunc_ni, trunc_ni] but each Doppler residue mod N is taken once.
/// trunc_ni < 0 selects floor(N/2), which covers every Doppler bin.
inline SparseChannelMatrix build_h_biorth(const DdChannel& ch, int trunc_ni = -1) {
    ch.validate();
    const int M = ch.grid.M;
    const int N = ch.grid.N;
    if (trunc_ni < 0) trunc_ni = N / 2;
    if (trunc_ni >= N) throw InvalidArgument("trunc_ni", "must be < N");

    std::vector<std::vector<std::pair<int, Complex>>> rows(static_cast<std::size_t>(M * N));
    std::vector<char> seen(static_cast<std::size_t>(N));
    for (const auto& path : ch.paths) {
        std::fill(seen.begin(), seen.end(), 0);
        for (int c = -trunc_ni; c <= trunc_ni; ++c) {
            const int residue = positive_mod(c, N);
            if (seen[residue]) continue;
            seen[residue] = 1;
            const Complex g = spreading_coeff(c, path, ch.grid);
            if (g == Complex{0.0, 0.0}) continue;
            detail::add_shift_block(rows, M, N, positive_mod(path.doppler - c, N), path.delay,
                                    path.gain * g);
        }
    }
    return SparseChannelMatrix(M * N, std::move(rows));
}

/// Integer-Doppler DD channel matrix.
inline SparseChannelMatrix build_h_integer(const DdChannel& ch) {
    ch.validate();
    if (!ch.integer_doppler())
        throw InvalidArgument("kappa", "integer-Doppler construction needs all kappa_i = 0");
    const int M = ch.grid.M;
    const int N = ch.grid.N;
    std::vector<std::vector<std::pair<int, Complex>>> rows(static_cast<std::size_t>(M * N));
    for (const auto& path : ch.paths) {
        const Complex phase =
            std::exp(-kJ * (2.0 * kPi * path.delay * path.doppler / static_cast<double>(M * N)));
        detail::add_shift_block(rows, M, N, positive_mod(path.doppler, N), path.delay,
                                path.gain * phase);
    }
    return SparseChannelMatrix(M * N, std::move(rows));
}

// ---------------------------------------------------------------------------
// BCCB spectrum
// ---------------------------------------------------------------------------

struct SpectralChannel {
    int M = 0;
    int N = 0;
    CVec d;       // eigenvalues: F H F^H = diag(d)
    RVec lambda;  // |d|^2
};

/// Eigenvalues of a BCCB matrix from its first column: the unnormalized 2D
/// DFT of reshape_M(H(:,1)).
inline SpectralChannel bccb_spectrum(const CVec& first_column, const OtfsGrid& grid) {
    if (static_cast<int>(first_column.size()) != grid.size())
        throw InvalidArgument("first_column", "length must be M*N");
    GridFft fft(grid.M, grid.N);
    SpectralChannel s{grid.M, grid.N, fft.fft2_unnormalized(first_column), {}};
    s.lambda.resize(s.d.size());
    for (std::size_t j = 0; j < s.d.size(); ++j) s.lambda[j] = std::norm(s.d[j]);
    return s;
}

inline SpectralChannel bccb_spectrum(const SparseChannelMatrix& h, const OtfsGrid& grid) {
    return bccb_spectrum(h.column(0), grid);
}

/// Matrix-free H x = F^H (d . (F x)).
inline CVec apply_bccb(const SpectralChannel& spec, const CVec& x, GridFft& fft) {
    if (x.size() != spec.d.size()) throw InvalidArgument("x", "length must be M*N");
    CVec fx = fft.forward2(x);
    for (std::size_t j = 0; j < fx.size(); ++j) fx[j] *= spec.d[j];
    return fft.inverse2(fx);
}

inline CVec apply_bccb(const SpectralChannel& spec, const CVec& x) {
    GridFft fft(spec.M, spec.N);
    return apply_bccb(spec, x, fft);
}

// ---------------------------------------------------------------------------
// Rectangular waveform: block-diagonal time channel and its per-block SVD
// ---------------------------------------------------------------------------

struct RectBlocks {
    int M = 0;
    int N = 0;
    std::vector<Eigen::MatrixXcd> blocks;  // H_1 .. H_N, each M x M
};

/// Per-sub-block time-domain channel under a CP on each length-M sub-block:
/// H_n[p, (p - l_i) mod M] += h_i exp(j2pi (k_i + kappa_i)(nM + p - l_i) / (MN)).
inline RectBlocks build_rect_blocks(const DdChannel& ch) {
    ch.validate();
    const int M = ch.grid.M;
    const int N = ch.grid.N;
    RectBlocks rb{M, N, std::vector<Eigen::MatrixXcd>(static_cast<std::size_t>(N),
                                                      Eigen::MatrixXcd::Zero(M, M))};
    for (const auto& path : ch.paths) {
        const double nu = path.doppler + path.frac_doppler;
        for (int n = 0; n < N; ++n) {
            auto& h = rb.blocks[static_cast<std::size_t>(n)];
            for (int p = 0; p < M; ++p) {
                const double t = static_cast<double>(n * M + p - path.delay);
                h(p, positive_mod(p - path.delay, M)) +=
                    path.gain * std::exp(kJ * (2.0 * kPi * nu * t / static_cast<double>(M * N)));
            }
        }
    }
    return rb;
}

/// y = (F_N kron I_M) H_T (F_N^H kron I_M) x, evaluated block by block.
inline CVec apply_rect(const RectBlocks& rb, const CVec& x, GridFft& fft) {
    const CVec s = fft.rows_inverse(x);
    CVec u(s.size());
    for (int n = 0; n < rb.N; ++n) {
        Eigen::Map<const Eigen::VectorXcd> sn(s.data() + static_cast<std::size_t>(n) * rb.M, rb.M);
        Eigen::Map<Eigen::VectorXcd> un(u.data() + static_cast<std::size_t>(n) * rb.M, rb.M);
        un.noalias() = rb.blocks[static_cast<std::size_t>(n)] * sn;
    }
    return fft.rows_forward(u);
}

/// Effective DD matrix of the rectangular waveform in sparse form (P*N
/// nonzeros per row at most): entry ((k,p), (k',p')) is
/// (1/N) sum_n H_n[p,p'] exp(-j2pi n (k - k') / N).
inline SparseChannelMatrix build_h_rect(const DdChannel& ch) {
    ch.validate();
    const int M = ch.grid.M;
    const int N = ch.grid.N;
    Eigen::FFT<double> fft;
    std::vector<std::vector<std::pair<int, Complex>>> rows(static_cast<std::size_t>(M * N));
    CVec a(static_cast<std::size_t>(N)), coeff(static_cast<std::size_t>(N));
    for (const auto& path : ch.paths) {
        const double nu = path.doppler + path.frac_doppler;
        for (int p = 0; p < M; ++p) {
            for (int n = 0; n < N; ++n) {
                const double t = static_cast<double>(n * M + p - path.delay);
                a[n] = path.gain * std::exp(kJ * (2.0 * kPi * nu * t / static_cast<double>(M * N)));
            }
            fft.fwd(coeff.data(), a.data(), N);  // coeff[delta] = sum_n a_n e^{-j2pi n delta/N}
            const int pc = positive_mod(p - path.delay, M);
            for (int k = 0; k < N; ++k)
                for (int kc = 0; kc < N; ++kc)
                    rows[static_cast<std::size_t>(k * M + p)].emplace_back(
                        kc * M + pc, coeff[positive_mod(k - kc, N)] / static_cast<double>(N));
        }
    }
    return SparseChannelMatrix(M * N, std::move(rows));
}

/// H_n = U_n diag(sigma_n) V_n with V_n the conjugate transpose of the right
/// singular vectors; d stacks the singular values block after block.
struct RectSvdChannel {
    int M = 0;
    int N = 0;
    std::vector<Eigen::MatrixXcd> U;
    std::vector<Eigen::MatrixXcd> V;
    RVec d;
    RVec lambda;

    /// Blockwise V x.
    CVec apply_v(const CVec& x) const { return apply_blocks(V, x, false); }
    /// Blockwise V^H x.
    CVec apply_v_adjoint(const CVec& x) const { return apply_blocks(V, x, true); }
    /// Blockwise U^H x.
    CVec apply_u_adjoint(const CVec& x) const { return apply_blocks(U, x, true); }

private:
    CVec apply_blocks(const std::vector<Eigen::MatrixXcd>& mats, const CVec& x,
                      bool adjoint) const {
        CVec y(x.size());
        for (int n = 0; n < N; ++n) {
            Eigen::Map<const Eigen::VectorXcd> xn(x.data() + static_cast<std::size_t>(n) * M, M);
            Eigen::Map<Eigen::VectorXcd> yn(y.data() + static_cast<std::size_t>(n) * M, M);
            if (adjoint)
                yn.noalias() = mats[static_cast<std::size_t>(n)].adjoint() * xn;
            else
                yn.noalias() = mats[static_cast<std::size_t>(n)] * xn;
        }
        return y;
    }
};

inline RectSvdChannel rect_block_svd(const RectBlocks& rb) {
    if (static_cast<int>(rb.blocks.size()) != rb.N)
        throw InvalidArgument("blocks", "expected N blocks");
    RectSvdChannel out{rb.M, rb.N, {}, {}, RVec(static_cast<std::size_t>(rb.M * rb.N)), {}};
    out.U.reserve(rb.blocks.size());
    out.V.reserve(rb.blocks.size());
    for (int n = 0; n < rb.N; ++n) {
        const auto& h = rb.blocks[static_cast<std::size_t>(n)];
        if (h.rows() != rb.M || h.cols() != rb.M)
            throw InvalidArgument("blocks", "every block must be M x M");
        Eigen::BDCSVD<Eigen::MatrixXcd> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
        if (svd.info() != Eigen::Success || !svd.singularValues().allFinite()) throw SvdFailure(n);
        out.U.push_back(svd.matrixU());
        out.V.push_back(svd.matrixV().adjoint());
        for (int i = 0; i < rb.M; ++i)
            out.d[static_cast<std::size_t>(n * rb.M + i)] = svd.singularValues()(i);
    }
    out.lambda.resize(out.d.size());
    for (std::size_t j = 0; j < out.d.size(); ++j) out.lambda[j] = out.d[j] * out.d[j];
    return out;
}

// ---------------------------------------------------------------------------
// Interchangeable channel operators and received-signal synthesis
// ---------------------------------------------------------------------------

enum class Waveform { Biorthogonal, Rectangular };

using ChannelOperator = std::variant<SparseChannelMatrix, SpectralChannel, RectSvdChannel>;

/// Squared magnitudes of the diagonal of the unitarily transformed channel.
inline RVec channel_lambda(const SpectralChannel& s) { return s.lambda; }
inline RVec channel_lambda(const RectSvdChannel& s) { return s.lambda; }

struct RxSignal {
    CVec y;  // DD-domain observation
    CVec r;  // unitary transform of y used by the UAMP detectors
};

inline void add_noise(CVec& y, double noise_precision, Engine& eng) {
    if (std::isinf(noise_precision)) return;
    if (!(noise_precision > 0.0)) throw InvalidArgument("noise_precision", "must be > 0");
    const double var = 1.0 / noise_precision;
    for (auto& v : y) v += complex_gaussian(eng, var);
}

/// y = H x + w and r = F y (bi-orthogonal waveform).
inline RxSignal simulate_rx(const SparseChannelMatrix& h, const OtfsGrid& grid, const CVec& x,
                            double noise_precision, std::uint64_t seed) {
    if (static_cast<int>(x.size()) != grid.size()) throw InvalidArgument("x", "length must be M*N");
    Engine eng(seed);
    RxSignal rx;
    rx.y = h.multiply(x);
    add_noise(rx.y, noise_precision, eng);
    GridFft fft(grid.M, grid.N);
    rx.r = fft.forward2(rx.y);
    return rx;
}

/// Rectangular waveform: y from the block channel, r = U^H (F_N^H kron I_M) y.
/// r is left empty when svd is null.
inline RxSignal simulate_rx(const RectBlocks& rb, const RectSvdChannel* svd, const CVec& x,
                            double noise_precision, std::uint64_t seed) {
    if (static_cast<int>(x.size()) != rb.M * rb.N) throw InvalidArgument("x", "length must be M*N");
    Engine eng(seed);
    GridFft fft(rb.M, rb.N);
    RxSignal rx;
    rx.y = apply_rect(rb, x, fft);
    add_noise(rx.y, noise_precision, eng);
    if (svd) rx.r = svd->apply_u_adjoint(fft.rows_inverse(rx.y));
    return rx;
}

/// Convenience form that builds the required channel representation.
inline RxSignal simulate_rx(const DdChannel& ch, const CVec& x, double noise_precision,
                            Waveform waveform, std::uint64_t seed) {
    if (waveform == Waveform::Biorthogonal)
        return simulate_rx(build_h_biorth(ch), ch.grid, x, noise_precision, seed);
    const RectBlocks rb = build_rect_blocks(ch);
    const RectSvdChannel svd = rect_block_svd(rb);
    return simulate_rx(rb, &svd, x, noise_precision, seed);
}

}  // namespace otfs
