#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "channel.hpp"
#include "harness.hpp"
#include "types.hpp"

namespace otfs {

using Json = nlohmann::json;

/// Malformed or unreadable input file; `path()` names it.
class FileError : public std::runtime_error {
public:
    FileError(std::string path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError(path, "cannot open file");
    try {
        return Json::parse(in, nullptr, true, true);
    } catch (const Json::parse_error& e) {
        throw FileError(path, std::string("invalid JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Channel documents
// ---------------------------------------------------------------------------

inline Json channel_to_json(const DdChannel& ch) {
    Json paths = Json::array();
    for (const auto& p : ch.paths)
        paths.push_back({{"gain_re", p.gain.real()},
                         {"gain_im", p.gain.imag()},
                         {"l", p.delay},
                         {"k", p.doppler},
                         {"kappa", p.frac_doppler}});
    return {{"schema", 1},
            {"grid",
             {{"M", ch.grid.M},
              {"N", ch.grid.N},
              {"subcarrier_spacing", ch.grid.subcarrier_spacing},
              {"carrier_freq", ch.grid.carrier_freq}}},
            {"paths", paths}};
}

namespace detail {

inline void check_keys(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw InvalidArgument(where, "must be a JSON object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) throw InvalidArgument(key, "unknown key in " + where);
}

template <class T>
T get_field(const Json& obj, const std::string& key) {
    if (!obj.contains(key)) throw InvalidArgument(key, "missing");
    try {
        return obj.at(key).get<T>();
    } catch (const Json::exception&) {
        throw InvalidArgument(key, "has the wrong type");
    }
}

inline void check_schema(const Json& doc) {
    if (doc.contains("schema") && doc.at("schema") != 1)
        throw InvalidArgument("schema", "only schema 1 is supported");
}

}  // namespace detail

inline DdChannel channel_from_json(const Json& doc) {
    using detail::get_field;
    detail::check_keys(doc, {"schema", "grid", "paths"}, "channel");
    detail::check_schema(doc);
    const Json& g = doc.at("grid");
    detail::check_keys(g, {"M", "N", "subcarrier_spacing", "carrier_freq"}, "grid");
    DdChannel ch;
    ch.grid.M = get_field<int>(g, "M");
    ch.grid.N = get_field<int>(g, "N");
    if (g.contains("subcarrier_spacing")) ch.grid.subcarrier_spacing = get_field<double>(g, "subcarrier_spacing");
    if (g.contains("carrier_freq")) ch.grid.carrier_freq = get_field<double>(g, "carrier_freq");
    if (!doc.contains("paths") || !doc.at("paths").is_array()) throw InvalidArgument("paths", "must be an array");
    for (const Json& p : doc.at("paths")) {
        detail::check_keys(p, {"gain_re", "gain_im", "l", "k", "kappa"}, "path");
        ChannelPath path;
        path.gain = {get_field<double>(p, "gain_re"), get_field<double>(p, "gain_im")};
        path.delay = get_field<int>(p, "l");
        path.doppler = get_field<int>(p, "k");
        path.frac_doppler = p.contains("kappa") ? get_field<double>(p, "kappa") : 0.0;
        ch.paths.push_back(path);
    }
    ch.validate();
    return ch;
}

inline DdChannel load_channel(const std::string& path) { return channel_from_json(read_json_file(path)); }

inline void save_channel(const std::string& path, const DdChannel& ch) {
    std::ofstream out(path);
    if (!out) throw FileError(path, "cannot write file");
    out << channel_to_json(ch).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Experiment configs
// ---------------------------------------------------------------------------

inline const std::set<std::string>& config_keys() {
    static const std::set<std::string> keys{
        "schema",     "M",          "N",          "subcarrier_spacing", "carrier_freq",
        "waveform",   "constellation", "P",       "pdp_alpha",          "k_max",
        "l_max",      "fractional", "distinct_delays", "trunc_ni",      "speed_kmh",
        "detectors",  "coded",      "outer_iterations", "max_iter",     "damping",
        "snr_db",     "trials",     "min_bit_errors",   "master_seed",  "threads",
        "record_wall_time", "channel_file", "channel", "description"};
    return keys;
}

inline DetectorKind detector_from_name(const std::string& s) {
    std::string u;
    for (char ch : s) u += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (u == "AMP") return DetectorKind::AMP;
    if (u == "UAMP") return DetectorKind::UAMP;
    if (u == "UAMP_RECT") return DetectorKind::UAMP_RECT;
    throw InvalidArgument("detectors", "unknown detector '" + s + "'");
}

inline Waveform waveform_from_name(const std::string& s) {
    if (s == "biorthogonal") return Waveform::Biorthogonal;
    if (s == "rectangular") return Waveform::Rectangular;
    throw InvalidArgument("waveform", "must be 'biorthogonal' or 'rectangular'");
}

/// Parses a config document. Relative `channel_file` paths resolve against
/// `base_dir`.
inline ExperimentConfig config_from_json(const Json& doc, const std::string& base_dir = ".") {
    using detail::get_field;
    detail::check_keys(doc, config_keys(), "config");
    detail::check_schema(doc);
    ExperimentConfig c;
    auto opt = [&](const char* key, auto& dst) {
        if (doc.contains(key)) dst = get_field<std::decay_t<decltype(dst)>>(doc, key);
    };
    opt("M", c.grid.M);
    opt("N", c.grid.N);
    opt("subcarrier_spacing", c.grid.subcarrier_spacing);
    opt("carrier_freq", c.grid.carrier_freq);
    if (doc.contains("waveform")) c.waveform = waveform_from_name(get_field<std::string>(doc, "waveform"));
    opt("constellation", c.constellation);
    opt("P", c.channel.paths);
    opt("pdp_alpha", c.channel.pdp_alpha);
    opt("k_max", c.channel.k_max);
    opt("l_max", c.channel.l_max);
    opt("fractional", c.channel.fractional);
    opt("distinct_delays", c.channel.distinct_delays);
    opt("trunc_ni", c.trunc_ni);
    if (doc.contains("speed_kmh") && !doc.at("speed_kmh").is_null())
        c.speed_kmh = get_field<double>(doc, "speed_kmh");
    if (doc.contains("detectors")) {
        const Json& d = doc.at("detectors");
        c.detectors.clear();
        if (d.is_string()) {
            std::stringstream ss(d.get<std::string>());
            std::string item;
            while (std::getline(ss, item, ','))
                if (!item.empty()) c.detectors.push_back(detector_from_name(item));
        } else if (d.is_array()) {
            for (const Json& item : d) {
                if (!item.is_string()) throw InvalidArgument("detectors", "entries must be strings");
                c.detectors.push_back(detector_from_name(item.get<std::string>()));
            }
        } else {
            throw InvalidArgument("detectors", "must be a string or an array of strings");
        }
    }
    opt("coded", c.coded);
    opt("outer_iterations", c.outer_iterations);
    opt("max_iter", c.max_iter);
    opt("damping", c.damping);
    if (doc.contains("snr_db")) {
        const Json& s = doc.at("snr_db");
        if (s.is_number())
            c.snr_db = {s.get<double>()};
        else
            c.snr_db = get_field<std::vector<double>>(doc, "snr_db");
    }
    opt("trials", c.trials);
    opt("min_bit_errors", c.min_bit_errors);
    opt("master_seed", c.master_seed);
    opt("threads", c.threads);
    opt("record_wall_time", c.record_wall_time);
    if (doc.contains("channel") && !doc.at("channel").is_null()) c.fixed_channel = channel_from_json(doc.at("channel"));
    if (doc.contains("channel_file") && !doc.at("channel_file").is_null()) {
        std::filesystem::path p = get_field<std::string>(doc, "channel_file");
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        c.fixed_channel = load_channel(p.string());
    }
    return c;
}

/// Resolved configuration as written into results headers. A fixed channel
/// is embedded inline under "channel".
inline Json config_to_json(const ExperimentConfig& c) {
    Json dets = Json::array();
    for (auto d : c.detectors) dets.push_back(to_string(d));
    Json j{{"schema", 1},
           {"M", c.grid.M},
           {"N", c.grid.N},
           {"subcarrier_spacing", c.grid.subcarrier_spacing},
           {"carrier_freq", c.grid.carrier_freq},
           {"waveform", to_string(c.waveform)},
           {"constellation", c.constellation},
           {"P", c.channel.paths},
           {"pdp_alpha", c.channel.pdp_alpha},
           {"k_max", c.draw_params().k_max},
           {"l_max", c.channel.l_max},
           {"fractional", c.channel.fractional},
           {"distinct_delays", c.channel.distinct_delays},
           {"trunc_ni", c.trunc_ni},
           {"speed_kmh", c.speed_kmh ? Json(*c.speed_kmh) : Json(nullptr)},
           {"detectors", dets},
           {"coded", c.coded},
           {"outer_iterations", c.outer_iterations},
           {"max_iter", c.max_iter},
           {"damping", c.damping},
           {"snr_db", c.snr_db},
           {"trials", c.trials},
           {"min_bit_errors", c.min_bit_errors},
           {"master_seed", c.master_seed},
           {"threads", c.threads},
           {"record_wall_time", c.record_wall_time}};
    if (c.fixed_channel) j["channel"] = channel_to_json(*c.fixed_channel);
    return j;
}

/// Applies `key=value`; the value is read as JSON when it parses, otherwise
/// as a string.
inline void apply_override(Json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw InvalidArgument(assignment, "override must look like key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    if (!config_keys().count(key)) throw InvalidArgument(key, "unknown key in override");
    Json value = Json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    doc[key] = value;
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    Json doc = read_json_file(path);
    for (const auto& o : overrides) apply_override(doc, o);
    const auto dir = std::filesystem::path(path).parent_path();
    return config_from_json(doc, dir.empty() ? "." : dir.string());
}

}  // namespace otfs
