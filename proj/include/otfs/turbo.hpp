#pragma once

#include <functional>
#include <memory>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "channel.hpp"
#include "coding.hpp"
#include "detectors.hpp"
#include "modem.hpp"

namespace otfs {

enum class DetectorKind { AMP, UAMP, UAMP_RECT };

inline std::string to_string(DetectorKind k) {
    switch (k) {
        case DetectorKind::AMP: return "AMP";
        case DetectorKind::UAMP: return "UAMP";
        case DetectorKind::UAMP_RECT: return "UAMP_RECT";
    }
    return "?";
}

struct TurboConfig {
    int outer_iterations = 15;
    DetectorKind detector_kind = DetectorKind::UAMP;
    /// Detector iterations per decoder activation. 1 is the single-loop
    /// schedule; larger values give the nested schedule.
    int inner_iterations = 1;
    /// Keep the detector priors uniform (decoder output is still computed).
    bool freeze_priors = false;
};

/// Transmit-side frame: info bits -> code -> interleaver -> mapper.
struct CodedFrame {
    Bits info;
    Bits coded;
    Bits interleaved;
    CVec symbols;
};

inline CodedFrame make_coded_frame(Bits info, const CodeSpec& code, const Interleaver& pi,
                                   const Constellation& c) {
    CodedFrame f;
    f.info = std::move(info);
    f.coded = conv_encode(f.info, code);
    f.interleaved = pi.interleave(f.coded);
    f.symbols = map_bits(f.interleaved, c);
    return f;
}

struct TurboIteration {
    int iteration = 0;
    Bits info_decisions;
    Bits coded_decisions;  // hard decisions on the decoder's a-posteriori coded LLRs
    double eps_hat = 0.0;
};

struct TurboResult {
    Bits decoded;
    std::vector<TurboIteration> iterations;
};

using TurboHook = std::function<void(const TurboIteration&)>;

/// Joint detection and decoding. Per outer iteration: detector observation
/// step -> Gaussian extrinsic messages -> bit demapping (with the decoder's
/// previous extrinsic LLRs as a-priori for the other bits) -> deinterleave ->
/// BCJR -> interleaved decoder extrinsic LLRs -> symbol priors, which the
/// detector's posterior step uses right away. Detector state persists.
inline TurboResult turbo_receive(IterativeDetector& det, const CodeSpec& code,
                                 const Interleaver& pi, const TurboConfig& cfg,
                                 const TurboHook& hook = {}) {
    if (cfg.outer_iterations < 1) throw InvalidArgument("outer_iterations", "must be >= 1");
    if (cfg.inner_iterations < 1) throw InvalidArgument("inner_iterations", "must be >= 1");
    const Constellation& c = det.constellation();
    const std::size_t coded_len = static_cast<std::size_t>(det.dim()) * c.bits_per_symbol();
    if (pi.size() != coded_len) throw InvalidArgument("interleaver", "length must be MN * bits/symbol");

    RVec apriori;  // decoder extrinsic, interleaved order; empty = zero
    SymbolPriors priors;
    bool have_priors = false;
    TurboResult res;
    for (int it = 0; it < cfg.outer_iterations; ++it) {
        PseudoObservation obs = det.observe();
        for (int inner = 1; inner < cfg.inner_iterations; ++inner) {
            det.absorb(obs, have_priors && !cfg.freeze_priors ? &priors : nullptr);
            obs = det.observe();
        }
        const ExtrinsicStats ext = extrinsic_stats(obs);
        const RVec det_llr = demap_llr(ext.mean, ext.var, apriori, c);
        const BcjrOutput dec = bcjr_decode(pi.deinterleave(det_llr), {}, code);

        apriori = pi.interleave(dec.extrinsic);
        priors = priors_from_llr(apriori, c);
        have_priors = true;
        det.absorb(obs, cfg.freeze_priors ? nullptr : &priors);

        TurboIteration rec{it + 1, hard_bits(dec.info_llr), hard_bits(dec.app), det.eps_hat()};
        if (hook) hook(rec);
        res.iterations.push_back(std::move(rec));
    }
    res.decoded = res.iterations.back().info_decisions;
    return res;
}

/// Builds the detector matching the channel representation: a sparse matrix
/// runs AMP on y with the known noise precision, a BCCB spectrum runs UAMP on
/// r = F y, block SVD factors run rectangular UAMP on r = U^H (F_N^H kron I) y.
inline std::unique_ptr<IterativeDetector> make_detector(const ChannelOperator& op,
                                                        const RxSignal& rx, double noise_precision,
                                                        const Constellation& c,
                                                        DetectorOptions opt = {}) {
    return std::visit(
        [&](const auto& ch) -> std::unique_ptr<IterativeDetector> {
            using T = std::decay_t<decltype(ch)>;
            if constexpr (std::is_same_v<T, SparseChannelMatrix>)
                return std::make_unique<AmpDetector>(ch, rx.y, noise_precision, c, opt);
            else if constexpr (std::is_same_v<T, SpectralChannel>)
                return std::make_unique<UampDftDetector>(ch, rx.r, c, opt);
            else
                return std::make_unique<UampRectDetector>(ch, rx.r, c, opt);
        },
        op);
}

inline TurboResult turbo_receive(const RxSignal& rx, const ChannelOperator& op,
                                 double noise_precision, const CodeSpec& code,
                                 const Interleaver& pi, const Constellation& c,
                                 const TurboConfig& cfg, const TurboHook& hook = {}) {
    auto det = make_detector(op, rx, noise_precision, c);
    return turbo_receive(*det, code, pi, cfg, hook);
}

}  // namespace otfs
