// otfs_cli: simulate | gtable | se-predict | channel-dump | trace
// Exit status: 0 success, 1 configuration error, 2 runtime failure.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "otfs/otfs.hpp"

using namespace otfs;

namespace {

/// Output target: the named file, or stdout when the name is empty.
class Sink {
public:
    explicit Sink(const std::string& path) {
        if (path.empty()) return;
        file_ = std::make_unique<std::ofstream>(path);
        if (!*file_) throw std::runtime_error(path + ": cannot write file");
    }
    std::ostream& get() { return file_ ? static_cast<std::ostream&>(*file_) : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

std::string comment_block(const Json& doc, const std::string& kind) {
    return "kind=" + kind + "\n" + doc.dump(2);
}

void write_comment(std::ostream& os, const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) os << "# " << line << '\n';
}

double db(double x) { return x > 0.0 ? 10.0 * std::log10(x) : -std::numeric_limits<double>::infinity(); }

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::string out;
};

void add_config_options(CLI::App* sub, Common& c, bool required) {
    auto* opt = sub->add_option("--config,-c", c.config, "experiment config (JSON)");
    if (required) opt->required();
    sub->add_option("--set", c.overrides, "override a config key, key=value (repeatable)");
    sub->add_option("--out,-o", c.out, "output file (default stdout)");
}

ExperimentConfig resolve(const Common& c) {
    ExperimentConfig cfg = load_config(c.config, c.overrides);
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Common& c, const std::string& iterations_out) {
    const ExperimentConfig cfg = resolve(c);
    Sink sink(c.out);
    std::optional<Sink> iter_sink;
    if (!iterations_out.empty()) {
        iter_sink.emplace(iterations_out);
        iter_sink->get() << "# schema=1\n";
        write_comment(iter_sink->get(), comment_block(config_to_json(cfg), "iterations"));
        iter_sink->get() << "snr_db,detector,iter,bit_errors,bits,ber\n";
    }
    run_sweep(cfg, &sink.get(), comment_block(config_to_json(cfg), "ber"), [&](const BerRecord& r) {
        std::cerr << "snr " << r.snr_db << " dB  " << to_string(r.detector) << "  ber " << r.ber << "  fer "
                  << r.fer << "  trials " << r.trials_run << (r.early_stopped ? " (stopped)" : "")
                  << (r.diverged ? "  diverged " + std::to_string(r.diverged) : "") << "  " << std::fixed
                  << std::setprecision(1) << r.wall_time << " s" << std::defaultfloat << std::setprecision(6)
                  << '\n';
        if (iter_sink) {
            const long bits = (r.trials_run - r.diverged) * cfg.bits_per_frame();
            auto& os = iter_sink->get();
            os << std::setprecision(17);
            for (std::size_t t = 0; t < r.iteration_bit_errors.size(); ++t)
                os << r.snr_db << ',' << to_string(r.detector) << ',' << t + 1 << ',' << r.iteration_bit_errors[t]
                   << ',' << bits << ',' << (bits > 0 ? static_cast<double>(r.iteration_bit_errors[t]) / bits : 0.0)
                   << '\n';
            os.flush();
        }
    });
    return 0;
}

struct GTableOpts {
    std::string constellation;
    int frame_symbols = 0;
    int points = 25;
    double tau_min = 1e-3, tau_max = 10.0;
    long max_frames = 10000, min_frames = 20, min_errors = 100;
    std::uint64_t seed = 1;
    int threads = 0;
};

int cmd_gtable(const Common& c, GTableOpts g) {
    if (!c.config.empty()) {
        const ExperimentConfig cfg = resolve(c);
        if (g.constellation.empty()) g.constellation = cfg.constellation;
        if (g.frame_symbols == 0) g.frame_symbols = cfg.grid.size();
    }
    if (g.constellation.empty()) g.constellation = "QPSK";
    if (g.frame_symbols == 0) g.frame_symbols = 1024;
    if (g.frame_symbols < 4) throw InvalidArgument("frame_symbols", "must be >= 4");
    GTableParams prm;
    prm.tau_grid = geometric_grid(g.tau_min, g.tau_max, g.points);
    prm.frame_symbols = g.frame_symbols;
    prm.max_frames = g.max_frames;
    prm.min_frames = g.min_frames;
    prm.min_errors = g.min_errors;
    prm.seed = g.seed;
    prm.threads = g.threads;
    const Constellation mod = Constellation::from_name(g.constellation);
    const GTable t = build_g_table(CodeSpec{}, mod, prm);
    for (const auto& r : t.rows)
        if (r.censored(prm.min_errors))
            std::cerr << "note: tau " << r.tau << " censored (" << r.errors << " errors in " << r.trials
                      << " frames)\n";
    Sink sink(c.out);
    write_g_table(sink.get(), t);
    return 0;
}

struct SeOpts {
    std::string gtable;
    std::string channel;
    std::vector<double> snr;
    int iterations = 0;
    long channels = 20;
};

int cmd_se_predict(const Common& c, const SeOpts& s) {
    ExperimentConfig cfg;
    if (!c.config.empty()) cfg = resolve(c);
    if (!s.channel.empty()) {
        cfg.fixed_channel = load_channel(s.channel);
        cfg.grid = cfg.fixed_channel->grid;
    }
    if (c.config.empty() && s.channel.empty())
        throw InvalidArgument("config", "se-predict needs --config or --channel");
    const std::vector<double> snrs = s.snr.empty() ? cfg.snr_db : s.snr;
    if (snrs.empty()) throw InvalidArgument("snr_db", "no SNR given");
    const int iters = s.iterations > 0 ? s.iterations : cfg.outer_iterations;

    std::ifstream in(s.gtable);
    if (!in) throw FileError(s.gtable, "cannot open file");
    const GTable table = read_g_table(in);
    if (table.rows.empty()) throw InvalidArgument("gtable", "table has no rows");
    if (table.constellation != cfg.constellation)
        throw InvalidArgument("constellation", "g-table is for " + table.constellation + ", config uses " +
                                                   cfg.constellation);

    Sink sink(c.out);
    auto& os = sink.get();
    os << "# schema=1\n";
    Json doc = config_to_json(cfg);
    doc["gtable"] = s.gtable;
    doc["channels"] = cfg.fixed_channel ? 1 : s.channels;
    write_comment(os, comment_block(doc, "se"));
    os << "snr_db,iter,tau,ber,v_x,clamped\n" << std::setprecision(17);
    for (double snr : snrs) {
        for (const auto& r : se_predict_average(cfg, table, snr, iters, s.channels)) {
            if (r.clamped > 0)
                std::cerr << "warning: snr " << snr << " dB iteration " << r.iteration << ": tau " << r.tau
                          << " outside the g-table range [" << table.rows.front().tau << ", "
                          << table.rows.back().tau << "] for " << r.clamped << " channel(s), clamped\n";
            os << snr << ',' << r.iteration << ',' << r.tau << ',' << r.ber << ',' << r.v_x << ',' << r.clamped
               << '\n';
        }
    }
    return 0;
}

int cmd_channel_dump(const Common& c, const std::string& in_path, long trial) {
    DdChannel ch;
    if (!in_path.empty()) {
        ch = load_channel(in_path);
    } else {
        if (c.config.empty()) throw InvalidArgument("config", "channel-dump needs --config or --in");
        ch = build_trial_channel(resolve(c), trial);
    }
    Sink sink(c.out);
    sink.get() << channel_to_json(ch).dump(2) << '\n';
    return 0;
}

int cmd_trace(const Common& c, double snr, long trial, const std::string& detector) {
    const ExperimentConfig cfg = resolve(c);
    const DetectorKind det = detector.empty() ? cfg.detectors.front() : detector_from_name(detector);
    Sink sink(c.out);
    auto& os = sink.get();
    os << "# schema=1\n";
    Json doc = config_to_json(cfg);
    doc["trace_snr_db"] = snr;
    doc["trace_trial"] = trial;
    doc["trace_detector"] = to_string(effective_detector(det, cfg.waveform));
    os << std::setprecision(17);
    if (cfg.coded) {
        write_comment(os, comment_block(doc, "turbo_trace"));
        os << "iter,ber_info,ber_coded,eps_hat_db\n";
        for (const auto& r : trace_turbo(cfg, det, trial, snr))
            os << r.iter << ',' << r.ber_info << ',' << r.ber_coded << ',' << db(r.eps_hat) << '\n';
    } else {
        write_comment(os, comment_block(doc, "detector_trace"));
        os << "trial,iter,eps_hat_db,mean_nu_x,ser\n";
        for (const auto& r : trace_detector(cfg, det, trial, snr))
            os << r.trial << ',' << r.iter << ',' << db(r.eps_hat) << ',' << r.mean_nu_x << ',' << r.ser << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OTFS link-level simulator"};
    app.require_subcommand(1);

    Common sim, gt, se, dump, tr;
    std::string iterations_out;
    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo BER/FER sweep, results CSV");
    add_config_options(simulate, sim, true);
    simulate->add_option("--iterations-out", iterations_out, "per-iteration BER CSV");

    GTableOpts gopt;
    auto* gtable = app.add_subcommand("gtable", "build the AWGN decoder table tau -> (BER, v_x)");
    add_config_options(gtable, gt, false);
    gtable->add_option("--constellation", gopt.constellation, "QPSK or 16QAM (default: config, else QPSK)");
    gtable->add_option("--frame-symbols", gopt.frame_symbols, "symbols per frame (default: config M*N, else 1024)");
    gtable->add_option("--points", gopt.points, "tau grid points")->check(CLI::Range(2, 1000));
    gtable->add_option("--tau-min", gopt.tau_min)->check(CLI::PositiveNumber);
    gtable->add_option("--tau-max", gopt.tau_max)->check(CLI::PositiveNumber);
    gtable->add_option("--max-frames", gopt.max_frames)->check(CLI::PositiveNumber);
    gtable->add_option("--min-frames", gopt.min_frames)->check(CLI::NonNegativeNumber);
    gtable->add_option("--min-errors", gopt.min_errors)->check(CLI::NonNegativeNumber);
    gtable->add_option("--seed", gopt.seed);
    gtable->add_option("--threads", gopt.threads)->check(CLI::NonNegativeNumber);

    SeOpts sopt;
    auto* sepred = app.add_subcommand("se-predict", "state-evolution BER trajectory from a g-table");
    add_config_options(sepred, se, false);
    sepred->add_option("--gtable,-g", sopt.gtable, "g-table CSV")->required();
    sepred->add_option("--channel", sopt.channel, "channel JSON (fixed channel)");
    sepred->add_option("--snr", sopt.snr, "SNR values in dB (default: config snr_db)");
    sepred->add_option("--iterations", sopt.iterations, "iterations (default: config outer_iterations)");
    sepred->add_option("--channels", sopt.channels, "channel draws averaged over")->check(CLI::PositiveNumber);

    std::string in_path;
    long dump_trial = 0;
    auto* chdump = app.add_subcommand("channel-dump", "emit a drawn channel as JSON, or load and re-emit one");
    add_config_options(chdump, dump, false);
    chdump->add_option("--in", in_path, "channel JSON to load");
    chdump->add_option("--trial", dump_trial, "trial index of the draw")->check(CLI::NonNegativeNumber);

    double trace_snr = 0.0;
    long trace_trial = 0;
    std::string trace_det;
    auto* trace = app.add_subcommand("trace", "per-iteration trace of one seeded frame");
    add_config_options(trace, tr, true);
    trace->add_option("--snr", trace_snr, "SNR in dB")->required();
    trace->add_option("--trial", trace_trial)->check(CLI::NonNegativeNumber);
    trace->add_option("--detector", trace_det, "AMP or UAMP (default: first in config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*simulate) return cmd_simulate(sim, iterations_out);
        if (*gtable) return cmd_gtable(gt, gopt);
        if (*sepred) return cmd_se_predict(se, sopt);
        if (*chdump) return cmd_channel_dump(dump, in_path, dump_trial);
        if (*trace) return cmd_trace(tr, trace_snr, trace_trial, trace_det);
    } catch (const InvalidArgument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const FileError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
