#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "coding.hpp"
#include "detectors.hpp"
#include "modem.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "turbo.hpp"
#include "types.hpp"

namespace otfs {

/// Simulated map tau -> (info BER, post-decoder symbol variance) of the code
/// and mapper over q = x + CN(0, tau).
struct GTableRow {
    double tau = 0.0;
    double ber = 0.0;
    double v_x = 0.0;
    long trials = 0;  // frames
    long errors = 0;  // info bit errors
    long bits = 0;    // info bits counted

    /// Fewer than the target number of errors were seen.
    bool censored(long min_errors = 100) const { return errors < min_errors; }
};

struct GTable {
    std::vector<GTableRow> rows;  // sorted by tau
    std::string code = "[5,7]_8";
    std::string constellation = "QPSK";
    long trials_per_point = 0;  // frame cap per tau

    /// Pool-adjacent-violators pass making ber and v_x non-decreasing in
    /// tau; v_x is also clipped to [0, 1].
    void regularize();

    struct Lookup {
        double ber;
        double v_x;
        bool clamped;
    };
    /// BER interpolated log-log and v_x linearly against log tau; tau outside
    /// the table is clamped to the nearest endpoint.
    Lookup lookup(double tau) const;
};

namespace detail {

inline RVec isotonic_increasing(const RVec& y, const RVec& w) {
    struct Block {
        double value, weight;
        std::size_t count;
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < y.size(); ++i) {
        blocks.push_back({y[i], std::max(w[i], 1e-300), 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].value > blocks.back().value) {
            Block b = blocks.back();
            blocks.pop_back();
            Block& a = blocks.back();
            const double wt = a.weight + b.weight;
            a.value = (a.value * a.weight + b.value * b.weight) / wt;
            a.weight = wt;
            a.count += b.count;
        }
    }
    RVec out;
    out.reserve(y.size());
    for (const auto& b : blocks) out.insert(out.end(), b.count, b.value);
    return out;
}

}  // namespace detail

inline void GTable::regularize() {
    std::sort(rows.begin(), rows.end(),
              [](const GTableRow& a, const GTableRow& b) { return a.tau < b.tau; });
    RVec ber, vx, wb, wv;
    for (const auto& r : rows) {
        ber.push_back(r.ber);
        vx.push_back(std::clamp(r.v_x, 0.0, 1.0));
        wb.push_back(static_cast<double>(std::max<long>(r.bits, 1)));
        wv.push_back(static_cast<double>(std::max<long>(r.trials, 1)));
    }
    ber = detail::isotonic_increasing(ber, wb);
    vx = detail::isotonic_increasing(vx, wv);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].ber = ber[i];
        rows[i].v_x = vx[i];
    }
}

inline GTable::Lookup GTable::lookup(double tau) const {
    if (rows.empty()) throw InvalidArgument("gtable", "table is empty");
    if (tau <= rows.front().tau) return {rows.front().ber, rows.front().v_x, tau < rows.front().tau};
    if (tau >= rows.back().tau) return {rows.back().ber, rows.back().v_x, tau > rows.back().tau};
    const auto hi = std::upper_bound(rows.begin(), rows.end(), tau,
                                     [](double t, const GTableRow& r) { return t < r.tau; });
    const auto lo = hi - 1;
    const double w = (std::log(tau) - std::log(lo->tau)) / (std::log(hi->tau) - std::log(lo->tau));
    double ber;
    if (lo->ber > 0.0 && hi->ber > 0.0)
        ber = std::exp((1.0 - w) * std::log(lo->ber) + w * std::log(hi->ber));
    else
        ber = (1.0 - w) * lo->ber + w * hi->ber;
    const double vx = (1.0 - w) * lo->v_x + w * hi->v_x;
    return {ber, vx, false};
}

/// Geometric grid of `points` values over [lo, hi].
inline RVec geometric_grid(double lo, double hi, int points) {
    if (points < 2 || !(lo > 0.0) || !(hi > lo)) throw InvalidArgument("tau_grid", "invalid range");
    RVec g(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i)
        g[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1));
    return g;
}

inline RVec default_tau_grid() { return geometric_grid(1e-3, 10.0, 25); }

struct GTableParams {
    RVec tau_grid = default_tau_grid();
    int frame_symbols = 1024;  // symbols per coded frame (MN)
    long max_frames = 10000;   // cap per tau point
    long min_frames = 20;
    long min_errors = 100;     // stop a point once this many info-bit errors are seen
    std::uint64_t seed = 1;
    int threads = 0;  // tau points run in parallel
};

/// One AWGN frame: the decoder output statistics that feed the table.
struct GTableFrameResult {
    long errors = 0;
    long bits = 0;
    double vx_sum = 0.0;  // sum over symbols of the posterior variance
};

inline GTableFrameResult g_table_frame(const CodeSpec& code, const Constellation& c, double tau,
                                       int frame_symbols, std::uint64_t seed) {
    const int Q = c.bits_per_symbol();
    const int coded_len = frame_symbols * Q;
    const int info_len = code.info_length(coded_len);
    Engine eng(seed);
    const Interleaver pi(static_cast<std::size_t>(coded_len), eng());
    const CodedFrame f = make_coded_frame(random_bits(eng, static_cast<std::size_t>(info_len)),
                                          code, pi, c);
    CVec q = f.symbols;
    for (auto& v : q) v += complex_gaussian(eng, tau);

    const RVec llr = demap_llr(q, RVec{tau}, {}, c);
    const BcjrOutput dec = bcjr_decode(pi.deinterleave(llr), {}, code);

    // a-posteriori coded LLRs -> symbol probabilities -> posterior variance
    const SymbolPriors post = priors_from_llr(pi.interleave(dec.app), c);
    GTableFrameResult r;
    for (int j = 0; j < frame_symbols; ++j) {
        Complex m = 0.0;
        for (int a = 0; a < c.size(); ++a) m += post(j, a) * c.point(a);
        double v = 0.0;
        for (int a = 0; a < c.size(); ++a) v += post(j, a) * std::norm(c.point(a) - m);
        r.vx_sum += v;
    }
    r.errors = count_bit_errors(hard_bits(dec.info_llr), f.info);
    r.bits = info_len;
    return r;
}

inline GTableRow g_table_point(const CodeSpec& code, const Constellation& c, double tau,
                               const GTableParams& prm, std::uint64_t point_seed) {
    GTableRow row;
    row.tau = tau;
    double vx_sum = 0.0;
    for (long f = 0; f < prm.max_frames; ++f) {
        const auto r = g_table_frame(code, c, tau, prm.frame_symbols,
                                     rng::derive(point_seed, "gtable-frame", static_cast<std::uint64_t>(f)));
        row.errors += r.errors;
        row.bits += r.bits;
        vx_sum += r.vx_sum;
        ++row.trials;
        if (row.trials >= prm.min_frames && row.errors >= prm.min_errors) break;
    }
    row.ber = static_cast<double>(row.errors) / static_cast<double>(row.bits);
    row.v_x = vx_sum / (static_cast<double>(row.trials) * prm.frame_symbols);
    return row;
}

/// Monte-Carlo g-table over the tau grid, regularized. Rows are independent
/// (each tau has its own seed substream).
inline GTable build_g_table(const CodeSpec& code, const Constellation& c, const GTableParams& prm) {
    if (prm.tau_grid.empty()) throw InvalidArgument("tau_grid", "must not be empty");
    for (std::size_t i = 0; i < prm.tau_grid.size(); ++i) {
        if (!(prm.tau_grid[i] > 0.0)) throw InvalidArgument("tau_grid", "values must be > 0");
        if (i > 0 && !(prm.tau_grid[i] > prm.tau_grid[i - 1]))
            throw InvalidArgument("tau_grid", "must be strictly increasing");
    }
    GTable t;
    t.constellation = c.name();
    t.trials_per_point = prm.max_frames;
    t.rows.resize(prm.tau_grid.size());
    parallel_for(prm.tau_grid.size(), prm.threads, [&](std::size_t i) {
        t.rows[i] = g_table_point(code, c, prm.tau_grid[i], prm, rng::derive(prm.seed, "gtable-point", i));
    });
    t.regularize();
    return t;
}

// CSV: comment lines start with '#', header tau,ber,v_x,trials,errors.
inline void write_g_table(std::ostream& os, const GTable& t) {
    os << "# schema=1\n# code=" << t.code << "\n# constellation=" << t.constellation
       << "\n# trials_per_point=" << t.trials_per_point << "\n";
    os << "tau,ber,v_x,trials,errors\n";
    os << std::setprecision(17);
    for (const auto& r : t.rows)
        os << r.tau << ',' << r.ber << ',' << r.v_x << ',' << r.trials << ',' << r.errors << '\n';
}

inline GTable read_g_table(std::istream& is) {
    GTable t;
    std::string line;
    bool header = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos) {
                const std::string key = line.substr(2, eq - 2);
                const std::string val = line.substr(eq + 1);
                if (key == "code") t.code = val;
                if (key == "constellation") t.constellation = val;
                if (key == "trials_per_point") t.trials_per_point = std::stol(val);
            }
            continue;
        }
        if (!header) {
            if (line.rfind("tau,ber,v_x", 0) != 0)
                throw InvalidArgument("gtable", "missing header 'tau,ber,v_x,trials,errors'");
            header = true;
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 5) throw InvalidArgument("gtable", "row with fewer than 5 columns");
        GTableRow r;
        r.tau = std::stod(cells[0]);
        r.ber = std::stod(cells[1]);
        r.v_x = std::stod(cells[2]);
        r.trials = std::stol(cells[3]);
        r.errors = std::stol(cells[4]);
        t.rows.push_back(r);
    }
    if (!header) throw InvalidArgument("gtable", "missing header 'tau,ber,v_x,trials,errors'");
    std::sort(t.rows.begin(), t.rows.end(),
              [](const GTableRow& a, const GTableRow& b) { return a.tau < b.tau; });
    return t;
}

struct SePoint {
    int iteration = 0;  // 1-based; BER after this many detector/decoder rounds
    double tau = 0.0;   // pseudo-channel noise variance that produced it
    double ber = 0.0;
    double v_x = 0.0;
    bool clamped = false;
};

/// Effective pseudo-AWGN variance for symbol variance v_x:
/// tau = J / sum_j lambda_j / (v_x lambda_j + 1/eps).
inline double se_tau(const RVec& lambda, double eps, double v_x) {
    double acc = 0.0;
    for (double l : lambda) acc += l / (v_x * l + 1.0 / eps);
    return static_cast<double>(lambda.size()) / acc;
}

/// State-evolution BER trajectory starting from v_x = 1.
inline std::vector<SePoint> se_predict(const RVec& lambda, double eps, const GTable& table,
                                       int iters) {
    if (lambda.empty()) throw InvalidArgument("lambda", "must not be empty");
    if (!(eps > 0.0)) throw InvalidArgument("eps", "must be > 0");
    std::vector<SePoint> out;
    double v_x = 1.0;
    for (int t = 0; t < iters; ++t) {
        const double tau = se_tau(lambda, eps, v_x);
        const auto g = table.lookup(tau);
        out.push_back({t + 1, tau, g.ber, g.v_x, g.clamped});
        v_x = g.v_x;
    }
    return out;
}

}  // namespace otfs
