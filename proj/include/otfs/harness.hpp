#pragma once

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "channel.hpp"
#include "coding.hpp"
#include "detectors.hpp"
#include "modem.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "state_evolution.hpp"
#include "turbo.hpp"
#include "types.hpp"

namespace otfs {

inline std::string to_string(Waveform w) {
    return w == Waveform::Biorthogonal ? "biorthogonal" : "rectangular";
}

struct ExperimentConfig {
    OtfsGrid grid;
    Waveform waveform = Waveform::Biorthogonal;
    std::string constellation = "QPSK";
    ChannelDrawParams channel;
    int trunc_ni = -1;  // Doppler spreading truncation, -1 = floor(N/2)
    std::optional<double> speed_kmh;  // when set, k_max follows from the terminal speed
    std::vector<DetectorKind> detectors{DetectorKind::UAMP};
    bool coded = false;
    int outer_iterations = 15;  // turbo iterations (coded)
    int max_iter = 15;          // detector iterations (uncoded)
    double damping = 0.0;
    std::vector<double> snr_db;
    long trials = 100;
    long min_bit_errors = 0;  // <= 0 runs every trial
    std::uint64_t master_seed = 1;
    int threads = 0;  // 0 = hardware concurrency
    bool record_wall_time = true;
    std::optional<DdChannel> fixed_channel;

    Constellation modulation() const { return Constellation::from_name(constellation); }

    ChannelDrawParams draw_params() const {
        ChannelDrawParams p = channel;
        if (speed_kmh) p.k_max = max_doppler_index(grid, *speed_kmh);
        return p;
    }

    int bits_per_frame() const {
        const int coded_len = grid.size() * modulation().bits_per_symbol();
        return coded ? CodeSpec{}.info_length(coded_len) : coded_len;
    }

    void validate() const {
        grid.validate();
        (void)modulation();
        if (trials < 1) throw InvalidArgument("trials", "must be >= 1");
        if (!std::is_sorted(snr_db.begin(), snr_db.end()))
            throw InvalidArgument("snr_db", "must be sorted ascending");
        for (double s : snr_db)
            if (!std::isfinite(s)) throw InvalidArgument("snr_db", "must be finite");
        if (detectors.empty()) throw InvalidArgument("detectors", "need at least one detector");
        for (auto d : detectors) {
            if (d == DetectorKind::UAMP_RECT && waveform != Waveform::Rectangular)
                throw InvalidArgument("detectors", "UAMP_RECT needs the rectangular waveform");
        }
        if (outer_iterations < 1) throw InvalidArgument("outer_iterations", "must be >= 1");
        if (max_iter < 1) throw InvalidArgument("max_iter", "must be >= 1");
        if (!(damping >= 0.0 && damping < 1.0)) throw InvalidArgument("damping", "must be in [0, 1)");
        if (speed_kmh && !(*speed_kmh >= 0.0)) throw InvalidArgument("speed_kmh", "must be >= 0");
        if (coded && bits_per_frame() < 1) throw InvalidArgument("M", "frame too short for the code");
        if (fixed_channel) {
            fixed_channel->validate();
            if (fixed_channel->grid.M != grid.M || fixed_channel->grid.N != grid.N)
                throw InvalidArgument("channel", "fixed channel grid does not match M, N");
        } else {
            // surfaces draw-parameter errors before any trial runs
            (void)sample_channel(grid, draw_params(), 0);
        }
    }
};

/// UAMP on the rectangular waveform runs on the block-SVD model.
inline DetectorKind effective_detector(DetectorKind d, Waveform w) {
    if (d == DetectorKind::UAMP && w == Waveform::Rectangular) return DetectorKind::UAMP_RECT;
    return d;
}

inline double snr_to_precision(double snr_db) { return std::pow(10.0, snr_db / 10.0); }

namespace seeds {

inline std::uint64_t channel(std::uint64_t master, long trial) {
    return rng::derive(master, "channel", static_cast<std::uint64_t>(trial));
}
inline std::uint64_t bits(std::uint64_t master, long trial) {
    return rng::derive(master, "bits", static_cast<std::uint64_t>(trial));
}
inline std::uint64_t interleaver(std::uint64_t master, long trial) {
    return rng::derive(master, "interleaver", static_cast<std::uint64_t>(trial));
}
// keyed on trial and SNR value, shared by every detector
inline std::uint64_t noise(std::uint64_t master, long trial, double snr_db) {
    return rng::derive(master, "noise", static_cast<std::uint64_t>(trial),
                       std::bit_cast<std::uint64_t>(snr_db));
}

}  // namespace seeds

inline DdChannel build_trial_channel(const ExperimentConfig& cfg, long trial) {
    if (cfg.fixed_channel) return *cfg.fixed_channel;
    return sample_channel(cfg.grid, cfg.draw_params(), seeds::channel(cfg.master_seed, trial));
}

/// Everything one frame needs: transmitted data, channel operator, received
/// signal. The operator matches the detector kind.
struct TrialSetup {
    DdChannel channel;
    Bits info;  // bits the error count is taken over
    std::optional<CodedFrame> frame;
    std::optional<Interleaver> interleaver;
    CVec x;
    ChannelOperator op;
    RxSignal rx;
    double noise_precision = 1.0;
};

inline TrialSetup prepare_trial(const ExperimentConfig& cfg, DetectorKind det, long trial,
                                double snr_db) {
    const Constellation c = cfg.modulation();
    TrialSetup t;
    t.channel = build_trial_channel(cfg, trial);
    t.noise_precision = snr_to_precision(snr_db);

    Engine bit_eng(seeds::bits(cfg.master_seed, trial));
    if (cfg.coded) {
        const int coded_len = cfg.grid.size() * c.bits_per_symbol();
        t.interleaver.emplace(static_cast<std::size_t>(coded_len),
                              seeds::interleaver(cfg.master_seed, trial));
        t.frame = make_coded_frame(random_bits(bit_eng, static_cast<std::size_t>(cfg.bits_per_frame())),
                                   CodeSpec{}, *t.interleaver, c);
        t.info = t.frame->info;
        t.x = t.frame->symbols;
    } else {
        t.info = random_bits(bit_eng, static_cast<std::size_t>(cfg.bits_per_frame()));
        t.x = map_bits(t.info, c);
    }

    const std::uint64_t noise_seed = seeds::noise(cfg.master_seed, trial, snr_db);
    det = effective_detector(det, cfg.waveform);
    if (cfg.waveform == Waveform::Biorthogonal) {
        SparseChannelMatrix h = build_h_biorth(t.channel, cfg.trunc_ni);
        t.rx = simulate_rx(h, cfg.grid, t.x, t.noise_precision, noise_seed);
        if (det == DetectorKind::AMP)
            t.op = std::move(h);
        else
            t.op = bccb_spectrum(h, cfg.grid);
    } else {
        const RectBlocks rb = build_rect_blocks(t.channel);
        if (det == DetectorKind::AMP) {
            t.rx = simulate_rx(rb, nullptr, t.x, t.noise_precision, noise_seed);
            t.op = build_h_rect(t.channel);
        } else {
            RectSvdChannel svd = rect_block_svd(rb);
            t.rx = simulate_rx(rb, &svd, t.x, t.noise_precision, noise_seed);
            t.op = std::move(svd);
        }
    }
    return t;
}

inline DetectorOptions detector_options(const ExperimentConfig& cfg) {
    DetectorOptions opt;
    opt.max_iter = cfg.max_iter;
    opt.damping = cfg.damping;
    return opt;
}

struct TrialResult {
    long bit_errors = 0;
    bool frame_error = false;
    bool diverged = false;
    double eps_hat = 0.0;
    std::vector<long> iteration_bit_errors;  // after each detector / turbo iteration
};

inline long count_symbol_bit_errors(const CVec& x_hat, const Bits& truth, const Constellation& c) {
    return count_bit_errors(symbols_to_bits(hard_decision(x_hat, c), c), truth);
}

/// One frame. A diverging detector yields a frame error with half the bits
/// counted wrong.
inline TrialResult run_trial(const ExperimentConfig& cfg, DetectorKind det, long trial, double snr_db) {
    const Constellation c = cfg.modulation();
    const TrialSetup t = prepare_trial(cfg, det, trial, snr_db);
    TrialResult r;
    try {
        auto d = make_detector(t.op, t.rx, t.noise_precision, c, detector_options(cfg));
        if (cfg.coded) {
            TurboConfig tc;
            tc.outer_iterations = cfg.outer_iterations;
            tc.detector_kind = effective_detector(det, cfg.waveform);
            const TurboResult res = turbo_receive(*d, CodeSpec{}, *t.interleaver, tc,
                                                  [&](const TurboIteration& it) {
                                                      r.iteration_bit_errors.push_back(
                                                          count_bit_errors(it.info_decisions, t.info));
                                                  });
            r.bit_errors = count_bit_errors(res.decoded, t.info);
        } else {
            const auto trace = d->run();
            for (const auto& it : trace)
                r.iteration_bit_errors.push_back(count_symbol_bit_errors(it.post.mean, t.info, c));
            r.bit_errors = r.iteration_bit_errors.back();
        }
        r.eps_hat = d->eps_hat();
    } catch (const DetectorDivergence&) {
        r.diverged = true;
        r.bit_errors = static_cast<long>(t.info.size() / 2);
        r.iteration_bit_errors.clear();
    }
    r.frame_error = r.diverged || r.bit_errors > 0;
    return r;
}

struct BerRecord {
    double snr_db = 0.0;
    DetectorKind detector = DetectorKind::UAMP;
    long trials_run = 0;
    long bit_errors = 0;
    long frame_errors = 0;
    long bits_counted = 0;
    double ber = 0.0;
    double fer = 0.0;
    double mean_eps_hat = 0.0;  // linear, over non-diverged trials
    double wall_time = 0.0;     // seconds
    bool early_stopped = false;
    long diverged = 0;
    std::vector<long> iteration_bit_errors;  // summed over non-diverged trials
};

/// Monte-Carlo point. Trials run in fixed-size batches and are reduced in
/// trial order, so the record does not depend on the thread count.
inline BerRecord run_point(const ExperimentConfig& cfg, DetectorKind det, double snr_db) {
    const auto t0 = std::chrono::steady_clock::now();
    constexpr long kBatch = 32;
    const int iters = cfg.coded ? cfg.outer_iterations : cfg.max_iter;
    BerRecord rec;
    rec.snr_db = snr_db;
    rec.detector = effective_detector(det, cfg.waveform);
    rec.iteration_bit_errors.assign(static_cast<std::size_t>(iters), 0);
    double eps_sum = 0.0;
    long eps_count = 0;
    bool stop = false;
    for (long start = 0; start < cfg.trials && !stop; start += kBatch) {
        const long count = std::min(kBatch, cfg.trials - start);
        std::vector<TrialResult> batch(static_cast<std::size_t>(count));
        parallel_for(static_cast<std::size_t>(count), cfg.threads, [&](std::size_t i) {
            batch[i] = run_trial(cfg, det, start + static_cast<long>(i), snr_db);
        });
        for (const auto& r : batch) {
            ++rec.trials_run;
            rec.bit_errors += r.bit_errors;
            rec.frame_errors += r.frame_error ? 1 : 0;
            if (r.diverged) {
                ++rec.diverged;
            } else {
                eps_sum += r.eps_hat;
                ++eps_count;
                for (std::size_t k = 0; k < r.iteration_bit_errors.size() && k < rec.iteration_bit_errors.size(); ++k)
                    rec.iteration_bit_errors[k] += r.iteration_bit_errors[k];
            }
            if (cfg.min_bit_errors > 0 && rec.bit_errors >= cfg.min_bit_errors) {
                stop = true;
                rec.early_stopped = rec.trials_run < cfg.trials;
                break;
            }
        }
    }
    rec.bits_counted = rec.trials_run * cfg.bits_per_frame();
    rec.ber = static_cast<double>(rec.bit_errors) / static_cast<double>(rec.bits_counted);
    rec.fer = static_cast<double>(rec.frame_errors) / static_cast<double>(rec.trials_run);
    rec.mean_eps_hat = eps_count > 0 ? eps_sum / static_cast<double>(eps_count) : 0.0;
    if (cfg.record_wall_time)
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

inline constexpr const char* kResultsHeader =
    "snr_db,detector,waveform,coded,P,trials,bit_errors,frame_errors,ber,fer,mean_eps_hat_db,wall_s";

inline void write_result_row(std::ostream& os, const ExperimentConfig& cfg, const BerRecord& r) {
    const double eps_db = r.mean_eps_hat > 0.0 ? 10.0 * std::log10(r.mean_eps_hat) : 0.0;
    os << std::setprecision(17) << r.snr_db << ',' << to_string(r.detector) << ','
       << to_string(cfg.waveform) << ',' << (cfg.coded ? 1 : 0) << ','
       << (cfg.fixed_channel ? static_cast<int>(cfg.fixed_channel->paths.size()) : cfg.channel.paths)
       << ',' << r.trials_run << ',' << r.bit_errors << ',' << r.frame_errors << ',' << r.ber << ','
       << r.fer << ',' << eps_db << ',' << r.wall_time << '\n';
}

using PointHook = std::function<void(const BerRecord&)>;

/// Runs every (snr, detector) point in order. When `csv` is given, writes
/// the comment header (each line of `comment` prefixed with '#') and flushes
/// one row per finished point.
inline std::vector<BerRecord> run_sweep(const ExperimentConfig& cfg, std::ostream* csv = nullptr,
                                        const std::string& comment = {}, const PointHook& on_point = {}) {
    cfg.validate();
    if (csv) {
        *csv << "# schema=1\n";
        std::size_t pos = 0;
        while (pos < comment.size()) {
            const auto nl = comment.find('\n', pos);
            const auto end = nl == std::string::npos ? comment.size() : nl;
            *csv << "# " << comment.substr(pos, end - pos) << '\n';
            pos = end + 1;
        }
        *csv << kResultsHeader << '\n';
        csv->flush();
    }
    std::vector<BerRecord> out;
    for (double snr : cfg.snr_db) {
        for (auto det : cfg.detectors) {
            out.push_back(run_point(cfg, det, snr));
            if (csv) {
                write_result_row(*csv, cfg, out.back());
                csv->flush();
            }
            if (on_point) on_point(out.back());
        }
    }
    return out;
}

// Per-iteration traces of a single frame.

struct DetectorTraceRow {
    long trial = 0;
    int iter = 0;
    double eps_hat = 0.0;
    double mean_nu_x = 0.0;
    double ser = 0.0;  // symbol error rate of the hard decisions against truth
};

struct TurboTraceRow {
    int iter = 0;
    double ber_info = 0.0;
    double ber_coded = 0.0;
    double eps_hat = 0.0;
};

inline std::vector<DetectorTraceRow> trace_detector(const ExperimentConfig& cfg, DetectorKind det,
                                                    long trial, double snr_db) {
    const Constellation c = cfg.modulation();
    const TrialSetup t = prepare_trial(cfg, det, trial, snr_db);
    const std::vector<int> truth = hard_decision(t.x, c);
    auto d = make_detector(t.op, t.rx, t.noise_precision, c, detector_options(cfg));
    std::vector<DetectorTraceRow> rows;
    for (int i = 0; i < cfg.max_iter; ++i) {
        const DetectorIterate it = d->step();
        const std::vector<int> dec = hard_decision(it.post.mean, c);
        long wrong = 0;
        for (std::size_t j = 0; j < dec.size(); ++j) wrong += dec[j] != truth[j] ? 1 : 0;
        double nu = 0.0;
        for (double v : it.post.var) nu += v;
        rows.push_back({trial, i + 1, d->eps_hat(), nu / static_cast<double>(it.post.var.size()),
                        static_cast<double>(wrong) / static_cast<double>(dec.size())});
    }
    return rows;
}

inline std::vector<TurboTraceRow> trace_turbo(const ExperimentConfig& cfg, DetectorKind det, long trial,
                                              double snr_db) {
    if (!cfg.coded) throw InvalidArgument("coded", "turbo trace needs coded = true");
    const Constellation c = cfg.modulation();
    const TrialSetup t = prepare_trial(cfg, det, trial, snr_db);
    auto d = make_detector(t.op, t.rx, t.noise_precision, c, detector_options(cfg));
    TurboConfig tc;
    tc.outer_iterations = cfg.outer_iterations;
    tc.detector_kind = effective_detector(det, cfg.waveform);
    std::vector<TurboTraceRow> rows;
    turbo_receive(*d, CodeSpec{}, *t.interleaver, tc, [&](const TurboIteration& it) {
        rows.push_back({it.iteration,
                        static_cast<double>(count_bit_errors(it.info_decisions, t.info)) /
                            static_cast<double>(t.info.size()),
                        static_cast<double>(count_bit_errors(it.coded_decisions, t.frame->coded)) /
                            static_cast<double>(t.frame->coded.size()),
                        it.eps_hat});
    });
    return rows;
}

// State-evolution prediction over the experiment's channel draws.

/// Squared singular values of the trial's channel in the detector's
/// transformed domain: |d_j|^2 of the BCCB spectrum (bi-orthogonal) or of the
/// per-block SVD (rectangular).
inline RVec channel_lambda(const ExperimentConfig& cfg, long trial) {
    const DdChannel ch = build_trial_channel(cfg, trial);
    if (cfg.waveform == Waveform::Biorthogonal)
        return bccb_spectrum(build_h_biorth(ch, cfg.trunc_ni), cfg.grid).lambda;
    const RectSvdChannel svd = rect_block_svd(build_rect_blocks(ch));
    RVec lambda(svd.d.size());
    for (std::size_t j = 0; j < lambda.size(); ++j) lambda[j] = svd.d[j] * svd.d[j];
    return lambda;
}

struct SeAverageRow {
    int iteration = 0;
    double ber = 0.0;  // mean over channel draws
    double tau = 0.0;  // mean over channel draws
    double v_x = 0.0;
    long clamped = 0;  // draws whose lookup left the table range
};

/// SE trajectory averaged over the first `channels` channel draws of cfg
/// (or the fixed channel), at the true noise precision of snr_db.
inline std::vector<SeAverageRow> se_predict_average(const ExperimentConfig& cfg, const GTable& table,
                                                    double snr_db, int iters, long channels) {
    if (channels < 1) throw InvalidArgument("channels", "must be >= 1");
    if (iters < 1) throw InvalidArgument("iterations", "must be >= 1");
    const long draws = cfg.fixed_channel ? 1 : channels;
    std::vector<std::vector<SePoint>> per(static_cast<std::size_t>(draws));
    parallel_for(static_cast<std::size_t>(draws), cfg.threads, [&](std::size_t i) {
        per[i] = se_predict(channel_lambda(cfg, static_cast<long>(i)), snr_to_precision(snr_db), table, iters);
    });
    std::vector<SeAverageRow> out(static_cast<std::size_t>(iters));
    for (int t = 0; t < iters; ++t) {
        auto& row = out[static_cast<std::size_t>(t)];
        row.iteration = t + 1;
        for (const auto& traj : per) {
            const SePoint& p = traj[static_cast<std::size_t>(t)];
            row.ber += p.ber / static_cast<double>(draws);
            row.tau += p.tau / static_cast<double>(draws);
            row.v_x += p.v_x / static_cast<double>(draws);
            row.clamped += p.clamped ? 1 : 0;
        }
    }
    return out;
}

}  // namespace otfs
