#include <chrono>
#include <cmath>
#include <random>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>

#include "otfs/channel.hpp"
#include "otfs/detectors.hpp"
#include "otfs/rng.hpp"
#include "support.hpp"

using namespace otfs;
using namespace otfs::testing;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

const Constellation kQpsk(ConstellationKind::QPSK);
const Constellation kQam(ConstellationKind::QAM16);

CVec random_symbols(Engine& eng, int n, const Constellation& c) {
    return map_bits(random_bits(eng, static_cast<std::size_t>(n * c.bits_per_symbol())), c);
}

DdChannel toy_channel() {
    DdChannel ch;
    ch.grid = {4, 3};
    ch.paths = {{{0.8, -0.3}, 0, 1, -0.1}, {{-0.2, 0.5}, 1, 3, 0.1}, {{0.4, 0.4}, 2, 4, 0.2}};
    return ch;
}

long symbol_errors(const CVec& x_hat, const CVec& x, const Constellation& c) {
    const auto a = hard_decision(x_hat, c), b = hard_decision(x, c);
    long e = 0;
    for (std::size_t j = 0; j < a.size(); ++j) e += a[j] != b[j];
    return e;
}

}  // namespace

// ---------------------------------------------------------------------------
// discrete_posterior
// ---------------------------------------------------------------------------

TEST(Posterior, VagueObservationGivesPrior) {
    PseudoObservation obs{{Complex(0.3, -0.2), Complex(5.0, 1.0)}, {1e30}};
    for (const auto& c : {kQpsk, kQam}) {
        const SymbolPosterior p = discrete_posterior(obs, nullptr, c);
        for (int j = 0; j < 2; ++j) {
            for (int a = 0; a < c.size(); ++a) EXPECT_NEAR(p.prob(j, a), 1.0 / c.size(), 1e-12);
            EXPECT_NEAR(std::abs(p.mean[j]), 0.0, 1e-12);
            EXPECT_NEAR(p.var[j], 1.0, 1e-12);
        }
    }
}

TEST(Posterior, SharpObservationPicksPoint) {
    PseudoObservation obs{{kQam.point(2)}, {1e-30}};
    const SymbolPosterior p = discrete_posterior(obs, nullptr, kQam);
    EXPECT_EQ(p.prob(0, 2), 1.0);
    EXPECT_EQ(p.var[0], 0.0);
    EXPECT_EQ(p.mean[0], kQam.point(2));
}

TEST(Posterior, HighPrecisionOracle) {
    const Complex q(0.3, 0.1);
    const double nu = 0.5;
    const SymbolPosterior p = discrete_posterior({{q}, {nu}}, nullptr, kQpsk);
    Big xi[4], total = 0;
    const Big s = 1 / sqrt(Big(2));
    const Big qr("0.3"), qi("0.1"), nub("0.5");
    Big pr[4], pi[4];
    for (int a = 0; a < 4; ++a) {
        pr[a] = s * (1 - 2 * ((a >> 1) & 1));
        pi[a] = s * (1 - 2 * (a & 1));
        xi[a] = exp(-((pr[a] - qr) * (pr[a] - qr) + (pi[a] - qi) * (pi[a] - qi)) / nub);
        total += xi[a];
    }
    Big mr = 0, mi = 0;
    for (int a = 0; a < 4; ++a) {
        mr += xi[a] / total * pr[a];
        mi += xi[a] / total * pi[a];
    }
    Big v = 0;
    for (int a = 0; a < 4; ++a)
        v += xi[a] / total * ((pr[a] - mr) * (pr[a] - mr) + (pi[a] - mi) * (pi[a] - mi));
    for (int a = 0; a < 4; ++a) EXPECT_NEAR(p.prob(0, a), static_cast<double>(xi[a] / total), 1e-15);
    EXPECT_NEAR(p.mean[0].real(), static_cast<double>(mr), 1e-15);
    EXPECT_NEAR(p.mean[0].imag(), static_cast<double>(mi), 1e-15);
    EXPECT_NEAR(p.var[0], static_cast<double>(v), 1e-15);
}

TEST(Posterior, PriorsWeightTheLikelihood) {
    SymbolPriors pri = SymbolPriors::uniform(1, 4);
    pri.prob = {0.7, 0.1, 0.1, 0.1};
    const double nu = 0.8;
    const Complex q(0.1, -0.2);
    const SymbolPosterior p = discrete_posterior({{q}, {nu}}, &pri, kQpsk);
    double w[4], t = 0.0;
    for (int a = 0; a < 4; ++a) t += (w[a] = pri.prob[a] * std::exp(-std::norm(kQpsk.point(a) - q) / nu));
    for (int a = 0; a < 4; ++a) EXPECT_NEAR(p.prob(0, a), w[a] / t, 1e-14);
}

TEST(Posterior, RowsSumToOneAndStayInHull) {
    Engine eng(3);
    std::uniform_real_distribution<double> u(-3.0, 3.0), lv(-12.0, 3.0);
    for (int t = 0; t < 200; ++t) {
        PseudoObservation obs{{Complex(u(eng), u(eng))}, {std::pow(10.0, lv(eng))}};
        const SymbolPosterior p = discrete_posterior(obs, nullptr, kQam);
        double s = 0.0;
        for (int a = 0; a < 16; ++a) s += p.prob(0, a);
        EXPECT_NEAR(s, 1.0, 1e-12);
        EXPECT_GE(p.var[0], 0.0);
        EXPECT_LE(std::abs(p.mean[0].real()), 3.0 / std::sqrt(10.0) + 1e-12);
        EXPECT_LE(std::abs(p.mean[0].imag()), 3.0 / std::sqrt(10.0) + 1e-12);
    }
}

TEST(Posterior, ZeroPriorRowRejected) {
    SymbolPriors pri{1, 4, {0.0, 0.0, 0.0, 0.0}};
    EXPECT_THROW(discrete_posterior({{Complex(0.0, 0.0)}, {1.0}}, &pri, kQpsk), InvalidArgument);
}

TEST(Posterior, FarObservationNoUnderflow) {
    const SymbolPosterior p = discrete_posterior({{Complex(1e3, -1e3)}, {1e-6}}, nullptr, kQpsk);
    EXPECT_NEAR(p.prob(0, 1), 1.0, 1e-12);
    EXPECT_TRUE(std::isfinite(p.var[0]));
}

// ---------------------------------------------------------------------------
// AMP
// ---------------------------------------------------------------------------

TEST(Amp, IdentityChannelNoiseFree) {
    DdChannel ch{{8, 4}, {{1.0, 0, 0, 0.0}}};
    const SparseChannelMatrix H = build_h_biorth(ch);
    Engine eng(1);
    const CVec x = random_symbols(eng, 32, kQpsk);
    AmpDetector det(H, x, 1e12, kQpsk);
    const DetectorIterate first = det.step();
    EXPECT_LE(max_abs_diff(first.obs.q, x), 1e-9);
    EXPECT_EQ(symbol_errors(first.post.mean, x, kQpsk), 0);
    for (int i = 1; i < 15; ++i) det.step();
    EXPECT_LE(max_abs_diff(det.state().x_hat, x), 1e-6);
    for (double v : det.state().nu_x) EXPECT_LT(v, 1e-6);
}

TEST(Amp, VectorVariancesAndInputChecks) {
    DdChannel ch{{8, 4}, {{1.0, 0, 0, 0.0}}};
    const SparseChannelMatrix H = build_h_biorth(ch);
    EXPECT_THROW(AmpDetector(H, CVec(31), 10.0, kQpsk), InvalidArgument);
    EXPECT_THROW(AmpDetector(H, CVec(32), 0.0, kQpsk), InvalidArgument);
    AmpDetector det(H, CVec(32, 0.5), 10.0, kQpsk);
    const DetectorIterate it = det.step();
    EXPECT_EQ(it.obs.nu_q.size(), 32u);
    EXPECT_EQ(det.state().nu_x.size(), 32u);
}

TEST(Amp, MatchesMapOnTinyFrames) {
    // M=4, N=2, QPSK, two integer paths at 20 dB: the AMP decision vector
    // equals exhaustive MAP over all 4^8 hypotheses.
    const OtfsGrid grid{4, 2};
    const double eps = 100.0;
    int agree = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        const DdChannel ch = sample_channel(grid, {2, 0.0, 0, 3, false}, rng::derive(9, "ch", t));
        const SparseChannelMatrix H = build_h_biorth(ch);
        Engine eng(rng::derive(9, "x", t));
        const CVec x = random_symbols(eng, 8, kQpsk);
        const RxSignal rx = simulate_rx(H, grid, x, eps, rng::derive(9, "w", t));
        const auto map = brute_force_map(H.dense(), rx.y, kQpsk);
        const auto trace = amp_detect(H, rx.y, eps, nullptr, kQpsk);
        agree += hard_decision(trace.back().post.mean, kQpsk) == map;
    }
    EXPECT_GE(agree, 0.99 * trials) << agree << "/" << trials;
}

TEST(Amp, TracksStateEvolutionOnIidMatrix) {
    // 256 x 256 i.i.d. CN(0, 1/256) matrix at 10 dB: the per-iteration MSE of
    // AMP follows tau_t = 1/eps + mse_t, mse_{t+1} = mmse(tau_t), mse_0 = 1.
    // At n = 64 finite-size error events double the MSE by iteration 5.
    const int n = 256, frames = 50, iters = 5;
    const double eps = 10.0;
    std::vector<double> mse(iters, 0.0);
    std::mt19937_64 eng(17);
    for (int f = 0; f < frames; ++f) {
        std::vector<std::vector<std::pair<int, Complex>>> rows(n);
        const CVec entries = random_cvec(eng, static_cast<std::size_t>(n * n), 1.0 / n);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) rows[r].emplace_back(c, entries[static_cast<std::size_t>(r * n + c)]);
        const SparseChannelMatrix H(n, rows);
        Engine e2(eng());
        const CVec x = random_symbols(e2, n, kQpsk);
        CVec y = H.multiply(x);
        for (auto& v : y) v += complex_gaussian(e2, 1.0 / eps);
        const auto trace = amp_detect(H, y, eps, nullptr, kQpsk, DetectorOptions{iters});
        for (int t = 0; t < iters; ++t)
            for (int j = 0; j < n; ++j) mse[t] += std::norm(trace[t].post.mean[j] - x[j]) / (n * frames);
    }
    double se = 1.0;
    for (int t = 0; t < iters; ++t) {
        se = qpsk_mmse(1.0 / eps + se);
        EXPECT_NEAR(mse[t], se, 0.2 * se) << "iteration " << t + 1;
    }
}

TEST(Amp, DivergenceIsReported) {
    DdChannel ch{{4, 2}, {{1.0, 0, 0, 0.0}}};
    const SparseChannelMatrix H = build_h_biorth(ch);
    CVec y(8, 0.0);
    y[3] = Complex(std::numeric_limits<double>::quiet_NaN(), 0.0);
    AmpDetector det(H, y, 10.0, kQpsk);
    try {
        det.step();
        FAIL();
    } catch (const DetectorDivergence& e) {
        EXPECT_EQ(e.iteration(), 0);
    }
}

// ---------------------------------------------------------------------------
// UAMP, bi-orthogonal
// ---------------------------------------------------------------------------

TEST(Uamp, IdentityChannelNoiseFree) {
    const int M = 8, N = 4;
    SpectralChannel ones{M, N, CVec(32, 1.0), RVec(32, 1.0)};
    Engine eng(2);
    const CVec x = random_symbols(eng, 32, kQpsk);
    GridFft fft(M, N);
    const CVec r = fft.forward2(x);
    UampDftDetector det(ones, r, kQpsk);
    const auto trace = det.run();
    EXPECT_LE(max_abs_diff(det.state().x_hat, x), 1e-9);
    EXPECT_NEAR(trace.back().eps_hat, 1e12, 1.0);
}

TEST(Uamp, MatchesDenseReferenceOnToy) {
    const DdChannel ch = toy_channel();
    const SparseChannelMatrix H = build_h_biorth(ch, 1);
    const SpectralChannel spec = bccb_spectrum(H, ch.grid);
    Engine eng(3);
    const CVec x = random_symbols(eng, 12, kQpsk);
    const RxSignal rx = simulate_rx(H, ch.grid, x, std::pow(10.0, 2.5), 5);
    const auto ref = dense_uamp(grid_dft(4, 3), spec.d, rx.r, kQpsk, 15);
    UampDftDetector det(spec, rx.r, kQpsk);
    for (int t = 0; t < 15; ++t) {
        const DetectorIterate it = det.step();
        const auto& r = ref[static_cast<std::size_t>(t)];
        EXPECT_LE(rel_diff(it.p, r.p), 1e-9) << t;
        EXPECT_LE(rel_diff(it.z_hat, r.z), 1e-9) << t;
        EXPECT_LE(rel_diff(it.obs.q, r.q), 1e-9) << t;
        EXPECT_LE(rel_diff(it.post.mean, r.x_hat), 1e-9) << t;
        EXPECT_NEAR(det.eps_hat(), r.eps_hat, 1e-9 * r.eps_hat) << t;
        EXPECT_NEAR(it.obs.nu_q[0], r.nu_q, 1e-9 * r.nu_q) << t;
    }
}

TEST(Uamp, MatchesDenseReferenceOnRandomGrids) {
    std::mt19937_64 eng(4);
    for (int trial = 0; trial < 4; ++trial) {
        const int M = 8 + 4 * trial, N = 4;
        const DdChannel ch = sample_channel({M, N}, {4, 0.0, 1, M - 1, true}, eng());
        const SparseChannelMatrix H = build_h_biorth(ch);
        const SpectralChannel spec = bccb_spectrum(H, ch.grid);
        Engine e2(eng());
        const CVec x = random_symbols(e2, M * N, kQam);
        const RxSignal rx = simulate_rx(H, ch.grid, x, 100.0, eng());
        const auto ref = dense_uamp(grid_dft(M, N), spec.d, rx.r, kQam, 15);
        UampDftDetector det(spec, rx.r, kQam);
        const auto trace = det.run();
        for (int t = 0; t < 15; ++t) {
            EXPECT_LE(rel_diff(trace[t].obs.q, ref[t].q), 1e-9);
            EXPECT_LE(rel_diff(trace[t].post.mean, ref[t].x_hat), 1e-9);
        }
    }
}

TEST(Uamp, NoiseFreeRecoveryWithFrozenPrecision) {
    const OtfsGrid grid{16, 8};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const DdChannel ch = sample_channel(grid, {4, 0.0, 3, 10, true}, seed);
        const SparseChannelMatrix H = build_h_biorth(ch);
        const SpectralChannel spec = bccb_spectrum(H, grid);
        double dmin = 1e9;
        for (const auto& d : spec.d) dmin = std::min(dmin, std::abs(d));
        if (dmin < 1e-3) continue;
        Engine eng(seed);
        const CVec x = random_symbols(eng, 128, kQpsk);
        const RxSignal rx = simulate_rx(H, grid, x, std::numeric_limits<double>::infinity(), 0);
        DetectorOptions opt;
        opt.fixed_noise_precision = 1e10;
        UampDftDetector det(spec, rx.r, kQpsk, opt);
        det.run();
        EXPECT_EQ(symbol_errors(det.state().x_hat, x, kQpsk), 0) << seed;
    }
}

TEST(Uamp, NoisePrecisionEstimate) {
    const OtfsGrid grid{64, 16};
    const double eps = 10.0;
    int within = 0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
        const DdChannel ch = sample_channel(grid, {10, 0.0, 6, 14, true}, rng::derive(5, "ch", t));
        const SparseChannelMatrix H = build_h_biorth(ch);
        Engine eng(rng::derive(5, "x", t));
        const CVec x = random_symbols(eng, 1024, kQpsk);
        const RxSignal rx = simulate_rx(H, grid, x, eps, rng::derive(5, "w", t));
        const auto trace = uamp_detect(bccb_spectrum(H, grid), rx.r, nullptr, kQpsk);
        within += std::abs(10.0 * std::log10(trace.back().eps_hat / eps)) <= 1.0;
    }
    EXPECT_GE(within, 0.9 * trials);
}

TEST(Uamp, ResidualNoWorseThanAmp) {
    // Known noise, P <= 6 integer Doppler, 15 dB: UAMP's fixed point fits y at
    // least as well as AMP's.
    const OtfsGrid grid{16, 8};
    const double eps = std::pow(10.0, 1.5);
    double res_amp = 0.0, res_uamp = 0.0;
    int no_worse = 0;
    const int seeds = 100;
    for (int s = 0; s < seeds; ++s) {
        const DdChannel ch = sample_channel(grid, {6, 0.0, 3, 10, false}, rng::derive(6, "ch", s));
        const SparseChannelMatrix H = build_h_biorth(ch);
        Engine eng(rng::derive(6, "x", s));
        const CVec x = random_symbols(eng, 128, kQpsk);
        const RxSignal rx = simulate_rx(H, grid, x, eps, rng::derive(6, "w", s));
        const auto a = amp_detect(H, rx.y, eps, nullptr, kQpsk);
        DetectorOptions opt;
        opt.fixed_noise_precision = eps;
        const auto u = uamp_detect(bccb_spectrum(H, grid), rx.r, nullptr, kQpsk, opt);
        auto residual = [&](const CVec& xh) {
            const CVec hx = H.multiply(xh);
            double r = 0.0;
            for (std::size_t j = 0; j < hx.size(); ++j) r += std::norm(rx.y[j] - hx[j]);
            return std::sqrt(r);
        };
        const double ra = residual(a.back().post.mean), ru = residual(u.back().post.mean);
        res_amp += ra;
        res_uamp += ru;
        no_worse += ru <= ra * (1.0 + 1e-9);
    }
    EXPECT_LE(res_uamp, res_amp);
    EXPECT_GE(no_worse, 0.9 * seeds) << no_worse;
}

TEST(Uamp, SerNonIncreasingInSnr) {
    const OtfsGrid grid{16, 8};
    std::vector<long> errs;
    for (double snr = 5.0; snr <= 25.0; snr += 5.0) {
        long e = 0;
        for (int s = 0; s < 40; ++s) {
            const DdChannel ch = sample_channel(grid, {6, 0.0, 3, 10, true}, rng::derive(7, "ch", s));
            const SparseChannelMatrix H = build_h_biorth(ch);
            Engine eng(rng::derive(7, "x", s));
            const CVec x = random_symbols(eng, 128, kQpsk);
            const RxSignal rx = simulate_rx(H, grid, x, std::pow(10.0, snr / 10.0), rng::derive(7, "w", s));
            const auto u = uamp_detect(bccb_spectrum(H, grid), rx.r, nullptr, kQpsk);
            e += symbol_errors(u.back().post.mean, x, kQpsk);
        }
        errs.push_back(e);
    }
    int inversions = 0;
    for (std::size_t i = 1; i < errs.size(); ++i)
        if (errs[i] > errs[i - 1]) {
            ++inversions;
            EXPECT_LE(errs[i], 1.1 * errs[i - 1]);
        }
    EXPECT_LE(inversions, 1);
}

TEST(Uamp, PosteriorVarianceInUnitRange) {
    const OtfsGrid grid{16, 8};
    const DdChannel ch = sample_channel(grid, {5, 0.0, 3, 10, true}, 8);
    const SparseChannelMatrix H = build_h_biorth(ch);
    Engine eng(8);
    const CVec x = random_symbols(eng, 128, kQpsk);
    const RxSignal rx = simulate_rx(H, grid, x, 5.0, 8);
    for (const auto& it : uamp_detect(bccb_spectrum(H, grid), rx.r, nullptr, kQpsk)) {
        for (double v : it.post.var) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0 + 1e-12);
        }
        for (std::size_t j = 0; j < 128; ++j) {
            double s = 0.0;
            for (int a = 0; a < 4; ++a) s += it.post.prob(static_cast<int>(j), a);
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(Uamp, SingularChannelFlaggedButFinite) {
    SpectralChannel spec{4, 2, CVec(8, 1.0), RVec(8, 1.0)};
    spec.d[3] = 0.0;
    spec.lambda[3] = 0.0;
    Engine eng(9);
    const CVec x = random_symbols(eng, 8, kQpsk);
    GridFft fft(4, 2);
    CVec r = fft.forward2(x);
    r[3] = 0.0;
    UampDftDetector det(spec, r, kQpsk);
    EXPECT_TRUE(det.singular_channel());
    for (const auto& it : det.run()) EXPECT_TRUE(all_finite(it.obs.q));
}

TEST(Uamp, EarlyStopAndDamping) {
    SpectralChannel ones{4, 2, CVec(8, 1.0), RVec(8, 1.0)};
    Engine eng(10);
    const CVec x = random_symbols(eng, 8, kQpsk);
    GridFft fft(4, 2);
    DetectorOptions opt;
    opt.early_stop = true;
    UampDftDetector det(ones, fft.forward2(x), kQpsk, opt);
    EXPECT_LT(det.run().size(), 15u);
    opt.early_stop = false;
    opt.damping = 0.5;
    UampDftDetector damped(ones, fft.forward2(x), kQpsk, opt);
    damped.run();
    EXPECT_LE(max_abs_diff(damped.state().x_hat, x), 1e-3);
}

// ---------------------------------------------------------------------------
// UAMP, rectangular waveform
// ---------------------------------------------------------------------------

TEST(UampRect, IdentityBlocksNoiseFree) {
    DdChannel ch{{8, 4}, {{1.0, 0, 0, 0.0}}};
    const RectBlocks rb = build_rect_blocks(ch);
    const RectSvdChannel svd = rect_block_svd(rb);
    Engine eng(11);
    const CVec x = random_symbols(eng, 32, kQam);
    const RxSignal rx = simulate_rx(rb, &svd, x, std::numeric_limits<double>::infinity(), 0);
    const auto trace = uamp_rect_detect(svd, rx.r, nullptr, kQam);
    EXPECT_LE(max_abs_diff(trace.back().post.mean, x), 1e-9);
}

TEST(UampRect, MatchesDenseReference) {
    const int M = 16, N = 8;
    const DdChannel ch = sample_channel({M, N}, {4, 0.1, 3, 10, true}, 12);
    const RectBlocks rb = build_rect_blocks(ch);
    const RectSvdChannel svd = rect_block_svd(rb);
    Engine eng(12);
    const CVec x = random_symbols(eng, M * N, kQpsk);
    const RxSignal rx = simulate_rx(rb, &svd, x, std::pow(10.0, 2.5), 12);

    Eigen::MatrixXcd V = Eigen::MatrixXcd::Zero(M * N, M * N);
    for (int n = 0; n < N; ++n) V.block(n * M, n * M, M, M) = svd.V[static_cast<std::size_t>(n)];
    const Eigen::MatrixXcd Phi = V * kron(dft_matrix(N).adjoint(), Eigen::MatrixXcd::Identity(M, M));
    const CVec d(svd.d.begin(), svd.d.end());
    const auto ref = dense_uamp(Phi, d, rx.r, kQpsk, 15);

    UampRectDetector det(svd, rx.r, kQpsk);
    for (int t = 0; t < 15; ++t) {
        const DetectorIterate it = det.step();
        const auto& r = ref[static_cast<std::size_t>(t)];
        EXPECT_LE(rel_diff(it.p, r.p), 1e-9) << t;
        EXPECT_LE(rel_diff(it.obs.q, r.q), 1e-9) << t;
        EXPECT_LE(rel_diff(it.post.mean, r.x_hat), 1e-9) << t;
        EXPECT_NEAR(det.eps_hat(), r.eps_hat, 1e-9 * r.eps_hat) << t;
    }
}

TEST(UampRect, RxTransformIsModel) {
    // r = diag(d) Phi x without noise
    const int M = 8, N = 4;
    const DdChannel ch = sample_channel({M, N}, {3, 0.1, 1, 5, true}, 13);
    const RectBlocks rb = build_rect_blocks(ch);
    const RectSvdChannel svd = rect_block_svd(rb);
    Engine eng(13);
    const CVec x = random_symbols(eng, M * N, kQpsk);
    const RxSignal rx = simulate_rx(rb, &svd, x, std::numeric_limits<double>::infinity(), 0);
    RectTransform phi(svd);
    CVec model = phi.forward(x);
    for (std::size_t j = 0; j < model.size(); ++j) model[j] *= phi.d()[j];
    EXPECT_LE(rel_diff(rx.r, model), 1e-12);
}

TEST(UampRect, CostIndependentOfPathCount) {
    // per-iteration work depends on M and N only
    const OtfsGrid grid{64, 16};
    auto time_run = [&](int P) {
        const DdChannel ch = sample_channel(grid, {P, 0.1, 6, 14, true}, 14);
        const RectBlocks rb = build_rect_blocks(ch);
        const RectSvdChannel svd = rect_block_svd(rb);
        Engine eng(14);
        const CVec x = random_symbols(eng, 1024, kQpsk);
        const RxSignal rx = simulate_rx(rb, &svd, x, 10.0, 14);
        double best = 1e9;
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            uamp_rect_detect(svd, rx.r, nullptr, kQpsk);
            best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        return best;
    };
    const double t2 = time_run(2), t14 = time_run(14);
    EXPECT_LT(t14, 2.0 * t2);
    EXPECT_LT(t2, 2.0 * t14);
}
