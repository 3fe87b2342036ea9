#include "mrisvm/config.hpp"

#include "mrisvm/errors.hpp"
#include "mrisvm/table_io.hpp"
#include "mrisvm/time_utils.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mrisvm {

using nlohmann::json;

namespace {

using Keys = std::set<std::string>;

void check_keys(const json& obj, const Keys& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

Duration read_duration(const json& obj, const char* key, Duration fallback, double unit_seconds,
                       const std::string& where) {
    double value = static_cast<double>(fallback.count()) / unit_seconds;
    read(obj, key, value, where);
    if (!std::isfinite(value)) throw ConfigError(where + "." + key + ": not finite");
    return Duration{std::llround(value * unit_seconds)};
}

const char* engine_name(PricingEngine e) { return e == PricingEngine::MonteCarlo ? "monte_carlo" : "expansion"; }
const char* gain_name(GainKind g) { return g == GainKind::Euclidean ? "euclidean" : "gaussian_likelihood"; }
const char* inversion_name(InversionKind k) { return k == InversionKind::Simplified ? "simplified" : "leading_order"; }

PricingEngine parse_engine(const std::string& s) {
    if (s == "expansion") return PricingEngine::Expansion;
    if (s == "monte_carlo") return PricingEngine::MonteCarlo;
    throw ConfigError("synthetic.engine: expected 'expansion' or 'monte_carlo', got '" + s + "'");
}

GainKind parse_gain(const std::string& s) {
    if (s == "euclidean") return GainKind::Euclidean;
    if (s == "gaussian_likelihood") return GainKind::GaussianLikelihood;
    throw ConfigError("clustering.gain: expected 'euclidean' or 'gaussian_likelihood', got '" + s + "'");
}

InversionKind parse_inversion(const std::string& s) {
    if (s == "leading_order") return InversionKind::LeadingOrder;
    if (s == "simplified") return InversionKind::Simplified;
    throw ConfigError("isvm.inversion: expected 'leading_order' or 'simplified', got '" + s + "'");
}

RegimeModelConfig parse_regime(const json& j, const std::string& where) {
    check_keys(j, {"name", "rho", "nu", "kappa", "theta", "jump_intensity", "jump_mean", "jump_sd"}, where);
    RegimeModelConfig r;
    read(j, "name", r.name, where);
    read(j, "rho", r.params.rho, where);
    read(j, "nu", r.params.nu, where);
    read(j, "kappa", r.params.kappa, where);
    read(j, "theta", r.params.theta, where);
    read(j, "jump_intensity", r.jump_intensity, where);
    read(j, "jump_mean", r.jump_mean, where);
    read(j, "jump_sd", r.jump_sd, where);
    return r;
}

void parse_synthetic(const json& j, SyntheticMarketConfig& s) {
    const std::string w = "synthetic";
    check_keys(j, {"start", "horizon_days", "s0", "v0", "substeps", "moneyness", "expiry_days", "iv_noise_sd",
                   "engine", "mc_paths", "mc_steps_per_day", "regimes", "min_segment", "max_segment", "underlying"},
               w);
    read(j, "start", s.start, w);
    read(j, "horizon_days", s.horizon_days, w);
    read(j, "s0", s.s0, w);
    read(j, "v0", s.v0, w);
    read(j, "substeps", s.substeps, w);
    read(j, "moneyness", s.moneyness, w);
    read(j, "expiry_days", s.expiry_days, w);
    read(j, "iv_noise_sd", s.iv_noise_sd, w);
    if (j.contains("engine")) s.engine = parse_engine(j.at("engine").get<std::string>());
    read(j, "mc_paths", s.mc.n_paths, w);
    read(j, "mc_steps_per_day", s.mc.steps_per_day, w);
    read(j, "min_segment", s.min_segment, w);
    read(j, "max_segment", s.max_segment, w);
    read(j, "underlying", s.underlying, w);
    if (j.contains("regimes")) {
        const json& arr = j.at("regimes");
        if (!arr.is_array()) throw ConfigError("synthetic.regimes: expected an array");
        s.regimes.clear();
        for (std::size_t i = 0; i < arr.size(); ++i)
            s.regimes.push_back(parse_regime(arr[i], "synthetic.regimes[" + std::to_string(i) + "]"));
    }
}

constexpr double kMinute = 60.0;
constexpr double kDay = 86400.0;

} // namespace

SyntheticMarketConfig default_two_regime_market() {
    SyntheticMarketConfig s;
    s.regimes = {
        {"calm", SabrDriftParams{-0.5, 1.2, 12.0, 0.55}, 0.0, 0.0, 0.0},
        {"stressed", SabrDriftParams{0.4, 2.4, 4.0, 0.9}, 0.0, 0.0, 0.0},
    };
    return s;
}

void PipelineConfig::validate() const {
    if (threads < 1) throw ConfigError("threads must be at least 1");
    window.validate();
    if (window_count(window) < 2) throw ConfigError("window must contain at least two sampling intervals");
    if (clustering.icc.k < 1) throw ConfigError("clustering.k must be at least 1");
    if (clustering.icc.k >= 2) clustering.icc.validate();
    if (!(clustering.moneyness_band.low > 0.0 && clustering.moneyness_band.low < clustering.moneyness_band.high))
        throw ConfigError("clustering moneyness band must satisfy 0 < low < high");
    if (!(clustering.max_tau_days > 0.0)) throw ConfigError("clustering.max_tau_days must be positive");
    if (!(clustering.missing_threshold >= 0.0 && clustering.missing_threshold <= 1.0))
        throw ConfigError("clustering.missing_threshold must lie in [0, 1]");
    isvm.validate();
    if (source == SourceKind::File) {
        if (input_path.empty()) throw ConfigError("source.path is required for a file source");
        if (!std::filesystem::exists(input_path))
            throw ConfigError("input file does not exist: " + input_path.string());
    } else {
        const auto& s = synthetic;
        if (s.regimes.empty()) throw ConfigError("synthetic.regimes must not be empty");
        if (!(s.horizon_days > 0.0)) throw ConfigError("synthetic.horizon_days must be positive");
        if (!(s.s0 > 0.0) || !(s.v0 > 0.0)) throw ConfigError("synthetic.s0 and synthetic.v0 must be positive");
        if (s.substeps < 1) throw ConfigError("synthetic.substeps must be at least 1");
        if (s.moneyness.empty() || s.expiry_days.empty()) throw ConfigError("synthetic grids must not be empty");
        for (double m : s.moneyness)
            if (!(m > 0.0)) throw ConfigError("synthetic.moneyness values must be positive");
        for (double e : s.expiry_days)
            if (!(e > 0.0)) throw ConfigError("synthetic.expiry_days values must be positive");
        if (!(s.iv_noise_sd >= 0.0)) throw ConfigError("synthetic.iv_noise_sd must be non-negative");
        if (s.min_segment == 0 || s.max_segment < s.min_segment)
            throw ConfigError("synthetic segments need 0 < min_segment <= max_segment");
        if (s.engine == PricingEngine::MonteCarlo && (s.mc.n_paths < 2 || s.mc.steps_per_day < 1))
            throw ConfigError("synthetic Monte Carlo settings are invalid");
        parse_iso8601(s.start);
        for (const auto& r : s.regimes) {
            if (!(r.params.rho > -1.0 && r.params.rho < 1.0))
                throw ConfigError("regime '" + r.name + "': rho must lie in (-1, 1)");
            if (!(r.params.nu >= 0.0)) throw ConfigError("regime '" + r.name + "': nu must be non-negative");
            if (!(r.jump_intensity >= 0.0) || !(r.jump_sd >= 0.0))
                throw ConfigError("regime '" + r.name + "': jump parameters must be non-negative");
        }
    }
}

PipelineConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(root, {"seed", "threads", "source", "rates", "synthetic", "window", "clustering", "isvm", "output_dir"},
               "config");
    PipelineConfig c;
    c.synthetic = default_two_regime_market();
    read(root, "seed", c.seed, "config");
    read(root, "threads", c.threads, "config");
    if (root.contains("output_dir")) c.output_dir = root.at("output_dir").get<std::string>();

    if (root.contains("source")) {
        const json& s = root.at("source");
        check_keys(s, {"kind", "path"}, "source");
        std::string kind = "synthetic";
        read(s, "kind", kind, "source");
        if (kind == "synthetic") c.source = SourceKind::Synthetic;
        else if (kind == "file") c.source = SourceKind::File;
        else throw ConfigError("source.kind: expected 'synthetic' or 'file', got '" + kind + "'");
        if (s.contains("path")) {
            std::filesystem::path p = s.at("path").get<std::string>();
            c.input_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
        }
    }
    if (root.contains("rates")) {
        const json& r = root.at("rates");
        check_keys(r, {"r", "d"}, "rates");
        read(r, "r", c.r, "rates");
        read(r, "d", c.d, "rates");
    }
    if (root.contains("synthetic")) parse_synthetic(root.at("synthetic"), c.synthetic);
    if (root.contains("window")) {
        const json& w = root.at("window");
        check_keys(w, {"length_days", "step_days", "sampling_minutes"}, "window");
        c.window.window_length = read_duration(w, "length_days", c.window.window_length, kDay, "window");
        c.window.step = read_duration(w, "step_days", c.window.step, kDay, "window");
        c.window.sampling_interval = read_duration(w, "sampling_minutes", c.window.sampling_interval, kMinute, "window");
    }
    if (root.contains("clustering")) {
        const json& j = root.at("clustering");
        const std::string w = "clustering";
        check_keys(j, {"k", "lambda", "gain", "factor_n_gain", "max_iterations", "n_restarts", "min_cluster_size", "lambda_decay",
                       "lambda_floor", "max_switch_ratio", "moneyness_low", "moneyness_high", "max_tau_days",
                       "missing_threshold"},
                   w);
        auto& icc = c.clustering.icc;
        read(j, "k", icc.k, w);
        read(j, "lambda", icc.lambda, w);
        if (j.contains("gain")) icc.gain_kind = parse_gain(j.at("gain").get<std::string>());
        read(j, "factor_n_gain", icc.factor_n_gain, w);
        read(j, "max_iterations", icc.max_iterations, w);
        read(j, "n_restarts", icc.n_restarts, w);
        read(j, "min_cluster_size", icc.min_cluster_size, w);
        read(j, "lambda_decay", icc.lambda_decay, w);
        read(j, "lambda_floor", icc.lambda_floor, w);
        read(j, "max_switch_ratio", icc.max_switch_ratio, w);
        read(j, "moneyness_low", c.clustering.moneyness_band.low, w);
        read(j, "moneyness_high", c.clustering.moneyness_band.high, w);
        read(j, "max_tau_days", c.clustering.max_tau_days, w);
        read(j, "missing_threshold", c.clustering.missing_threshold, w);
    }
    if (root.contains("isvm")) {
        const json& j = root.at("isvm");
        const std::string w = "isvm";
        check_keys(j, {"min_tau_days", "max_tau_days", "min_observations", "bootstrap_samples", "band_sd", "grid_points",
                       "grid_quantile_low", "grid_quantile_high", "bandwidth_floor_fraction", "inversion", "max_redraws"},
                   w);
        auto& s = c.isvm;
        read(j, "min_tau_days", s.tau_range.min_days, w);
        read(j, "max_tau_days", s.tau_range.max_days, w);
        read(j, "min_observations", s.min_observations, w);
        read(j, "bootstrap_samples", s.bootstrap_samples, w);
        read(j, "band_sd", s.band_sd, w);
        read(j, "grid_points", s.grid_points, w);
        read(j, "grid_quantile_low", s.grid_q_lo, w);
        read(j, "grid_quantile_high", s.grid_q_hi, w);
        read(j, "bandwidth_floor_fraction", s.bandwidth_floor_fraction, w);
        if (j.contains("inversion")) s.inversion = parse_inversion(j.at("inversion").get<std::string>());
        read(j, "max_redraws", s.max_redraws, w);
    }
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), path.parent_path());
}

std::string canonical_config_json(const PipelineConfig& c) {
    // output_dir and threads do not change results and are left out
    json j;
    j["seed"] = c.seed;
    j["source"] = {{"kind", c.source == SourceKind::File ? "file" : "synthetic"},
                   {"path", c.source == SourceKind::File ? c.input_path.generic_string() : ""}};
    j["rates"] = {{"r", c.r}, {"d", c.d}};
    if (c.source == SourceKind::Synthetic) {
        const auto& s = c.synthetic;
        json regimes = json::array();
        for (const auto& r : s.regimes) {
            regimes.push_back({{"name", r.name},
                               {"rho", r.params.rho},
                               {"nu", r.params.nu},
                               {"kappa", r.params.kappa},
                               {"theta", r.params.theta},
                               {"jump_intensity", r.jump_intensity},
                               {"jump_mean", r.jump_mean},
                               {"jump_sd", r.jump_sd}});
        }
        j["synthetic"] = {{"start", s.start},
                          {"horizon_days", s.horizon_days},
                          {"s0", s.s0},
                          {"v0", s.v0},
                          {"substeps", s.substeps},
                          {"moneyness", s.moneyness},
                          {"expiry_days", s.expiry_days},
                          {"iv_noise_sd", s.iv_noise_sd},
                          {"engine", engine_name(s.engine)},
                          {"mc_paths", s.mc.n_paths},
                          {"mc_steps_per_day", s.mc.steps_per_day},
                          {"min_segment", s.min_segment},
                          {"max_segment", s.max_segment},
                          {"underlying", s.underlying},
                          {"regimes", regimes}};
    }
    j["window"] = {{"length_days", static_cast<double>(c.window.window_length.count()) / kDay},
                   {"step_days", static_cast<double>(c.window.step.count()) / kDay},
                   {"sampling_minutes", static_cast<double>(c.window.sampling_interval.count()) / kMinute}};
    const auto& icc = c.clustering.icc;
    j["clustering"] = {{"k", icc.k},
                       {"lambda", icc.lambda},
                       {"gain", gain_name(icc.gain_kind)},
                       {"factor_n_gain", icc.factor_n_gain},
                       {"max_iterations", icc.max_iterations},
                       {"n_restarts", icc.n_restarts},
                       {"min_cluster_size", icc.min_cluster_size},
                       {"lambda_decay", icc.lambda_decay},
                       {"lambda_floor", icc.lambda_floor},
                       {"max_switch_ratio", icc.max_switch_ratio},
                       {"moneyness_low", c.clustering.moneyness_band.low},
                       {"moneyness_high", c.clustering.moneyness_band.high},
                       {"max_tau_days", c.clustering.max_tau_days},
                       {"missing_threshold", c.clustering.missing_threshold}};
    const auto& s = c.isvm;
    j["isvm"] = {{"min_tau_days", s.tau_range.min_days},
                 {"max_tau_days", s.tau_range.max_days},
                 {"min_observations", s.min_observations},
                 {"bootstrap_samples", s.bootstrap_samples},
                 {"band_sd", s.band_sd},
                 {"grid_points", s.grid_points},
                 {"grid_quantile_low", s.grid_q_lo},
                 {"grid_quantile_high", s.grid_q_hi},
                 {"bandwidth_floor_fraction", s.bandwidth_floor_fraction},
                 {"inversion", inversion_name(s.inversion)},
                 {"max_redraws", s.max_redraws}};
    return j.dump();
}

std::string manifest_hash(const PipelineConfig& config) { return fnv1a_hex(canonical_config_json(config)); }

} // namespace mrisvm
