#include "mrisvm/pipeline.hpp"

#include "mrisvm/errors.hpp"
#include "mrisvm/eval.hpp"
#include "mrisvm/quote_io.hpp"
#include "mrisvm/table_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

namespace mrisvm {

namespace fs = std::filesystem;
using nlohmann::json;

StageError::StageError(std::string stage, Kind kind, const std::string& what)
    : std::runtime_error(stage + ": " + what), stage_(std::move(stage)), kind_(kind) {}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    std::uint64_t z = seed ^ h ^ (index * 0xD1B54A32D192ED03ULL);
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

SyntheticMarket simulate_market(const SyntheticMarketConfig& config, double r, double d, std::uint64_t seed,
                                Duration quote_interval) {
    if (config.regimes.empty()) throw ConfigError("synthetic market has no regimes");
    if (quote_interval.count() <= 0) throw ConfigError("quote interval must be positive");
    std::vector<SvModelSpec> models;
    for (const auto& rc : config.regimes) {
        SvModelSpec m = make_sabr_model(rc.params, config.v0, config.s0, r, d);
        m.jump_intensity = rc.jump_intensity;
        m.jump_mean = rc.jump_mean;
        m.jump_sd = rc.jump_sd;
        m.name = rc.name;
        models.push_back(std::move(m));
    }
    const auto substeps = static_cast<std::size_t>(config.substeps);
    const auto n_quotes = static_cast<std::size_t>(
        std::llround(config.horizon_days * 86400.0 / static_cast<double>(quote_interval.count())));
    if (n_quotes == 0) throw ConfigError("synthetic horizon is shorter than one quote interval");
    const std::size_t total_steps = n_quotes * substeps;
    const double dt = static_cast<double>(quote_interval.count()) / kSecondsPerYear / static_cast<double>(substeps);

    SyntheticMarket out;
    out.schedule = alternating_schedule(models, total_steps, config.min_segment * substeps,
                                        config.max_segment * substeps, derive_seed(seed, "schedule"));
    out.path = simulate_paths(out.schedule, dt, dt * static_cast<double>(total_steps), derive_seed(seed, "path"));

    QuoteGridSpec grid;
    grid.moneyness = config.moneyness;
    grid.expiry_days = config.expiry_days;
    grid.steps_per_quote = substeps;
    grid.start = parse_iso8601(config.start);
    grid.quote_interval = quote_interval;
    grid.underlying = config.underlying;
    EmitOptions emit;
    emit.engine = config.engine;
    emit.iv_noise_sd = config.iv_noise_sd;
    emit.mc = config.mc;
    emit.seed = derive_seed(seed, "quotes");
    out.market = emit_quotes(out.path, out.schedule, grid, emit);
    return out;
}

namespace {

std::vector<OptionQuote> read_quote_file(const fs::path& path) {
    QuoteReadResult r = read_quotes(path);
    if (!r.bad_lines.empty())
        std::cerr << "warning: skipped " << r.bad_lines.size() << " malformed quote lines in " << path.string() << " (first at line "
                  << r.bad_lines.front().first << ": " << r.bad_lines.front().second << ")\n";
    if (r.quotes.empty()) throw DataError("no quotes in " + path.string());
    return std::move(r.quotes);
}

} // namespace

std::vector<OptionQuote> load_source_quotes(const PipelineConfig& config) {
    if (config.source == SourceKind::File) return read_quote_file(config.input_path);
    return simulate_market(config.synthetic, config.r, config.d, config.seed, config.window.sampling_interval).market.quotes;
}

ClusterStageResult cluster_window(std::span<const IvObservation> window_obs, const PipelineConfig& config) {
    const auto filtered =
        filter_for_clustering(window_obs, config.clustering.moneyness_band, config.clustering.max_tau_days);
    ClusterStageResult out;
    out.panel = build_panel(filtered, config.window, config.clustering.missing_threshold);
    if (config.clustering.icc.k < 2) {
        for (const auto& ts : out.panel.timestamps) out.labels[ts] = 0;
        return out;
    }
    RegimeAssignment a = fit_with_annealing(out.panel, config.clustering.icc);
    canonicalize_labels(a);
    for (std::size_t t = 0; t < out.panel.timestamps.size(); ++t) out.labels[out.panel.timestamps[t]] = a.labels[t];
    out.assignment = std::move(a);
    return out;
}

FitStageResult fit_window(std::span<const IvObservation> window_obs, const std::map<Timestamp, int>& labels,
                          const PipelineConfig& config) {
    FitStageResult out;
    out.inst_vol = instantaneous_vol_by_timestamp(window_obs);
    const auto usable = filter_for_isvm(window_obs, config.isvm.tau_range, out.inst_vol);

    std::map<Timestamp, std::vector<IvObservation>> by_time;
    for (const auto& o : usable) by_time[o.timestamp].push_back(o);

    std::vector<SurfaceSample> all;
    for (auto& [ts, obs] : by_time) {
        try {
            SurfaceCoefficients c = fit_surface(obs);
            c.timestamp = ts;
            out.surfaces.push_back(c);
        } catch (const DataError&) {
            ++out.degenerate_surfaces;
            continue;
        }
        all.push_back({ts, out.inst_vol.at(ts), 0, std::move(obs)});
    }
    if (all.empty()) throw DataError("no usable IV surface in window");
    out.unclustered = fit_isvm(all, config.isvm);
    if (config.clustering.icc.k >= 2) {
        std::vector<SurfaceSample> labelled;
        for (const auto& s : all) {
            auto it = labels.find(s.timestamp);
            if (it == labels.end()) continue;
            SurfaceSample c = s;
            c.cluster = it->second;
            labelled.push_back(std::move(c));
        }
        if (labelled.empty()) throw DataError("no labelled surfaces in window");
        out.clustered = fit_isvm(labelled, config.isvm);
    }
    return out;
}

namespace {

std::string group_name(IsvmFunction f, std::optional<int> cluster) {
    std::string name = to_string(f);
    if (cluster) name += "_" + std::to_string(*cluster + 1);
    return name;
}

struct ResidualRow {
    bool clustered = false;
    int cluster = 0;
    std::array<double, 3> target{};
    std::array<double, 3> fitted{};
};

WindowErrors errors_from_rows(const std::vector<ResidualRow>& rows, int k, bool complete) {
    std::map<std::string, std::vector<double>> residuals;
    for (const auto& r : rows) {
        for (IsvmFunction f : kIsvmFunctions) {
            const auto i = static_cast<std::size_t>(f);
            residuals[group_name(f, r.clustered ? std::optional<int>(r.cluster) : std::nullopt)].push_back(
                r.fitted[i] - r.target[i]);
        }
    }
    WindowErrors e;
    e.complete = complete;
    for (const auto& [name, res] : residuals) {
        e.rmse[name] = rmse(res);
        e.mae[name] = mae(res);
    }
    (void)k;
    return e;
}

std::vector<ResidualRow> rows_of(const IsvmFit& fit, bool clustered) {
    std::vector<ResidualRow> rows;
    for (const auto& c : fit.clusters) {
        for (std::size_t t = 0; t < c.targets.size(); ++t) {
            ResidualRow r;
            r.clustered = clustered;
            r.cluster = c.cluster;
            for (IsvmFunction f : kIsvmFunctions) {
                const auto i = static_cast<std::size_t>(f);
                r.target[i] = c.targets[t].targets[f];
                r.fitted[i] = c.fitted[i][t];
            }
            rows.push_back(r);
        }
    }
    return rows;
}

bool fit_complete(const FitStageResult& fit, int k) {
    if (k < 2) return true;
    return fit.clustered && fit.clustered->skipped.empty() && static_cast<int>(fit.clustered->clusters.size()) == k;
}

} // namespace

WindowErrors window_errors(const FitStageResult& fit, int k) {
    auto rows = rows_of(fit.unclustered, false);
    if (fit.clustered) {
        auto more = rows_of(*fit.clustered, true);
        rows.insert(rows.end(), more.begin(), more.end());
    }
    return errors_from_rows(rows, k, fit_complete(fit, k));
}

namespace {

PipelineConfig window_config(const PipelineConfig& config, std::size_t window) {
    PipelineConfig c = config;
    c.clustering.icc.seed = derive_seed(config.seed, "icc", window);
    c.isvm.seed = derive_seed(config.seed, "isvm", window);
    c.isvm.threads = config.threads;
    return c;
}

std::vector<IvObservation> normalized(const std::vector<OptionQuote>& quotes, const PipelineConfig& config) {
    NormalizeResult n = normalize(quotes, config.r, config.d);
    if (!n.rejected.empty())
        std::cerr << "warning: rejected " << n.rejected.size() << " quotes (first: "
                  << to_string(n.rejected.front().reason) << ")\n";
    if (n.observations.empty()) throw DataError("no valid quotes after normalization");
    std::stable_sort(n.observations.begin(), n.observations.end(),
                     [](const IvObservation& a, const IvObservation& b) { return a.timestamp < b.timestamp; });
    return std::move(n.observations);
}

std::vector<Timestamp> windows_of(const std::vector<IvObservation>& obs, const PipelineConfig& config) {
    auto starts = window_starts(obs.front().timestamp, obs.back().timestamp, config.window);
    if (starts.empty()) throw DataError("data span is shorter than one rolling window");
    return starts;
}

} // namespace

std::vector<WindowRun> run_in_memory(const PipelineConfig& config) {
    config.validate();
    const auto obs = normalized(load_source_quotes(config), config);
    std::vector<WindowRun> out;
    const auto starts = windows_of(obs, config);
    for (std::size_t w = 0; w < starts.size(); ++w) {
        const PipelineConfig wc = window_config(config, w);
        WindowRun run;
        run.start = starts[w];
        const auto window_obs = slice_window(obs, starts[w], config.window);
        try {
            run.cluster = cluster_window(window_obs, wc);
        } catch (const DataError& e) {
            run.status = std::string("cluster_failed: ") + e.what();
            out.push_back(std::move(run));
            continue;
        }
        try {
            run.fit = fit_window(window_obs, run.cluster.labels, wc);
            run.errors = window_errors(run.fit, config.clustering.icc.k);
        } catch (const DataError& e) {
            run.status = std::string("fit_failed: ") + e.what();
        }
        out.push_back(std::move(run));
    }
    return out;
}

// ---------------------------------------------------------------------------
// File stages

namespace {

std::string num(double x) { return format_number(x); }

double round12(double x) {
    if (!std::isfinite(x)) return x;
    return std::stod(format_number(x));
}

std::string window_name(std::size_t w) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "window_%03zu", w);
    return buf;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("missing stage input " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("cannot parse " + path.string() + ": " + e.what());
    }
}

std::string hash_comment(const std::string& hash) { return "manifest_hash=" + hash; }

void write_manifest(const PipelineConfig& config, const std::string& stage) {
    const fs::path path = config.output_dir / "manifest.json";
    json m;
    if (fs::exists(path)) {
        try {
            m = read_json(path);
        } catch (const DataError&) {
            m = json::object();
        }
        if (!m.is_object() || m.value("manifest_hash", "") != manifest_hash(config)) m = json::object();
    }
    m["manifest_hash"] = manifest_hash(config);
    m["config"] = json::parse(canonical_config_json(config));
    m["output_digits"] = kOutputDigits;
    if (!m.contains("stages")) m["stages"] = json::array();
    auto& stages = m["stages"];
    if (std::find(stages.begin(), stages.end(), stage) == stages.end()) stages.push_back(stage);
    write_json(path, m);
}

template <class Fn>
void guarded(const PipelineConfig& config, const std::string& stage, Fn&& body) {
    try {
        fs::create_directories(config.output_dir);
        fs::remove(config.output_dir / "FAILED");
        body();
        write_manifest(config, stage);
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        StageError::Kind kind = StageError::Kind::Data;
        if (dynamic_cast<const ConfigError*>(&e)) kind = StageError::Kind::Config;
        else if (dynamic_cast<const NumericalError*>(&e)) kind = StageError::Kind::Numerical;
        std::error_code ec;
        if (fs::is_directory(config.output_dir, ec)) {
            std::ofstream marker(config.output_dir / "FAILED");
            marker << "stage=" << stage << '\n' << "error=" << e.what() << '\n';
        }
        throw StageError(stage, kind, e.what());
    }
}

std::vector<OptionQuote> stage_input_quotes(const PipelineConfig& config) {
    if (config.source == SourceKind::File) return read_quote_file(config.input_path);
    const fs::path path = config.output_dir / "quotes.csv";
    if (!fs::exists(path)) throw DataError("quotes.csv not found in " + config.output_dir.string() + "; run simulate first");
    return read_quote_file(path);
}

struct WindowRow {
    std::size_t index = 0;
    Timestamp start{};
    std::string status;
};

std::vector<WindowRow> read_windows(const PipelineConfig& config) {
    const Table t = read_table(config.output_dir / "windows.csv");
    if (t.comment != hash_comment(manifest_hash(config)))
        throw DataError("windows.csv was produced by a different configuration; rerun cluster");
    std::vector<WindowRow> rows;
    const auto ci = t.column("window"), cs = t.column("start"), cst = t.column("status");
    for (const auto& r : t.rows) rows.push_back({std::stoul(r[ci]), parse_iso8601(r[cs]), r[cst]});
    return rows;
}

std::map<Timestamp, int> read_truth(const PipelineConfig& config) {
    std::map<Timestamp, int> truth;
    const fs::path path = config.output_dir / "truth.csv";
    if (config.source != SourceKind::Synthetic || !fs::exists(path)) return truth;
    const Table t = read_table(path);
    const auto ct = t.column("timestamp"), cl = t.column("label");
    for (const auto& r : t.rows) truth[parse_iso8601(r[ct])] = std::stoi(r[cl]);
    return truth;
}

json regime_summary(const ClusterStageResult& c, const std::map<Timestamp, int>& truth, int k,
                    const std::string& hash) {
    json j;
    j["manifest_hash"] = hash;
    j["n_assets"] = c.panel.n_assets();
    j["n_timestamps"] = c.panel.n_times();
    if (!c.assignment) return j;
    const RegimeAssignment& a = *c.assignment;
    j["n_switches"] = a.n_switches;
    j["converged"] = a.converged;
    j["iterations_used"] = a.iterations_used;
    j["repairs"] = a.repairs;
    j["lambda_used"] = round12(a.lambda_used);
    json attempts = json::array();
    for (double l : a.lambda_attempts) attempts.push_back(round12(l));
    j["lambda_attempts"] = attempts;
    json clusters = json::array();
    for (std::size_t i = 0; i < a.stats.size(); ++i) {
        json m = json::array();
        for (Eigen::Index r = 0; r < a.stats[i].mean.size(); ++r) m.push_back(round12(a.stats[i].mean(r)));
        clusters.push_back({{"cluster", i},
                            {"size", a.cluster_sizes[i]},
                            {"log_det", round12(a.stats[i].log_det)},
                            {"mean", m}});
    }
    j["clusters"] = clusters;
    std::vector<int> pred, tru;
    for (std::size_t t = 0; t < c.panel.timestamps.size(); ++t) {
        auto it = truth.find(c.panel.timestamps[t]);
        if (it == truth.end()) continue;
        pred.push_back(a.labels[t]);
        tru.push_back(it->second);
    }
    if (!pred.empty() && !tru.empty()) {
        const int kk = std::max(k, *std::max_element(tru.begin(), tru.end()) + 1);
        if (kk <= 8) j["label_accuracy"] = round12(label_accuracy(pred, tru, kk));
    }
    return j;
}

json fit_summary(const IsvmFit& fit) {
    json clusters = json::array();
    for (const auto& c : fit.clusters) {
        clusters.push_back({{"cluster", c.cluster},
                            {"n_targets", c.targets.size()},
                            {"bandwidth", round12(c.curves[0].bandwidth)},
                            {"replicates_used", c.replicates_used},
                            {"replicates_skipped", c.replicates_skipped},
                            {"degenerate_surfaces", c.degenerate_surfaces}});
    }
    json skipped = json::array();
    for (const auto& s : fit.skipped) skipped.push_back({{"cluster", s.cluster}, {"n_points", s.n_points}});
    return {{"clusters", clusters}, {"skipped", skipped}};
}

void append_fit_rows(const IsvmFit& fit, const std::string& group, Table& targets, Table& curves) {
    for (const auto& c : fit.clusters) {
        for (std::size_t t = 0; t < c.targets.size(); ++t) {
            const TargetPoint& p = c.targets[t];
            targets.rows.push_back({group, std::to_string(c.cluster), format_iso8601(p.timestamp), num(p.v),
                                    num(p.targets.mu), num(p.targets.gamma), num(p.targets.eta2), num(c.fitted[0][t]),
                                    num(c.fitted[1][t]), num(c.fitted[2][t])});
        }
        for (const auto& band : c.curves) {
            for (std::size_t g = 0; g < band.grid.size(); ++g) {
                curves.rows.push_back({group, std::to_string(c.cluster), to_string(band.function), num(band.grid[g]),
                                       num(band.mean[g]), num(band.lower[g]), num(band.upper[g]), num(band.sd[g])});
            }
        }
    }
}

} // namespace

void stage_simulate(const PipelineConfig& config) {
    guarded(config, "simulate", [&] {
        if (config.source != SourceKind::Synthetic) throw ConfigError("simulate requires a synthetic source");
        const std::string hash = manifest_hash(config);
        const SyntheticMarket m =
            simulate_market(config.synthetic, config.r, config.d, config.seed, config.window.sampling_interval);
        write_quotes(config.output_dir / "quotes.csv", m.market.quotes, hash_comment(hash));

        Table truth;
        truth.comment = hash_comment(hash);
        truth.header = {"timestamp", "label", "regime", "spot", "v"};
        for (const auto& row : m.market.truth) {
            truth.rows.push_back({format_iso8601(row.timestamp), std::to_string(row.label),
                                  config.synthetic.regimes[static_cast<std::size_t>(row.label)].name,
                                  num(row.spot), num(row.v)});
        }
        write_table(config.output_dir / "truth.csv", truth);

        json regimes = json::array();
        for (std::size_t i = 0; i < config.synthetic.regimes.size(); ++i) {
            const auto& rc = config.synthetic.regimes[i];
            const SvModelSpec model = make_sabr_model(rc.params, config.synthetic.v0, config.synthetic.s0);
            json v = json::array(), mu = json::array(), gamma = json::array(), eta2 = json::array();
            for (int g = 0; g <= 40; ++g) {
                const double x = 0.05 * (g + 1);
                v.push_back(round12(x));
                mu.push_back(round12(model.mu_fn(x)));
                gamma.push_back(round12(model.gamma_fn(x)));
                eta2.push_back(round12(model.eta_fn(x) * model.eta_fn(x)));
            }
            regimes.push_back({{"label", i},
                               {"name", rc.name},
                               {"rho", rc.params.rho},
                               {"nu", rc.params.nu},
                               {"kappa", rc.params.kappa},
                               {"theta", rc.params.theta},
                               {"jump_intensity", rc.jump_intensity},
                               {"v", v},
                               {"mu", mu},
                               {"gamma", gamma},
                               {"eta2", eta2}});
        }
        std::vector<int> path_labels(m.path.label.begin(), m.path.label.end());
        write_json(config.output_dir / "truth.json", {{"manifest_hash", hash},
                                                      {"regimes", regimes},
                                                      {"n_quotes", m.market.quotes.size()},
                                                      {"dropped_quotes", m.market.dropped},
                                                      {"reflections", m.path.reflections},
                                                      {"jumps", m.path.jumps},
                                                      {"n_switches", count_switches(path_labels)}});
    });
}

void stage_cluster(const PipelineConfig& config) {
    guarded(config, "cluster", [&] {
        const std::string hash = manifest_hash(config);
        const auto obs = normalized(stage_input_quotes(config), config);
        const auto starts = windows_of(obs, config);
        const auto truth = read_truth(config);
        Table windows;
        windows.comment = hash_comment(hash);
        windows.header = {"window", "start", "end", "n_obs", "status"};
        std::size_t ok = 0;
        for (std::size_t w = 0; w < starts.size(); ++w) {
            const PipelineConfig wc = window_config(config, w);
            const fs::path dir = config.output_dir / window_name(w);
            fs::create_directories(dir);
            const auto window_obs = slice_window(obs, starts[w], config.window);
            std::string status = "ok";
            try {
                const ClusterStageResult c = cluster_window(window_obs, wc);
                write_panel(dir / "panel.csv", dir / "panel.json", c.panel, hash);
                if (config.clustering.icc.k >= 2) {
                    Table labels;
                    labels.comment = hash_comment(hash);
                    labels.header = {"timestamp", "label"};
                    for (const auto& [ts, l] : c.labels) labels.rows.push_back({format_iso8601(ts), std::to_string(l)});
                    write_table(dir / "labels.csv", labels);
                    write_json(dir / "regimes.json", regime_summary(c, truth, config.clustering.icc.k, hash));
                }
                ++ok;
            } catch (const DataError& e) {
                status = std::string("cluster_failed: ") + e.what();
                std::cerr << window_name(w) << ": " << status << '\n';
            }
            std::replace(status.begin(), status.end(), ',', ';');
            windows.rows.push_back({std::to_string(w), format_iso8601(starts[w]),
                                    format_iso8601(starts[w] + config.window.window_length),
                                    std::to_string(window_obs.size()), status});
        }
        write_table(config.output_dir / "windows.csv", windows);
        if (ok == 0) throw DataError("clustering failed in every window");
    });
}

void stage_fit(const PipelineConfig& config) {
    guarded(config, "fit", [&] {
        const std::string hash = manifest_hash(config);
        const auto obs = normalized(stage_input_quotes(config), config);
        const auto windows = read_windows(config);
        std::size_t ok = 0;
        for (const auto& win : windows) {
            const fs::path dir = config.output_dir / window_name(win.index);
            if (win.status != "ok") continue;
            const PipelineConfig wc = window_config(config, win.index);
            std::map<Timestamp, int> labels;
            if (config.clustering.icc.k >= 2) {
                const Table t = read_table(dir / "labels.csv");
                if (t.comment != hash_comment(hash)) throw DataError("labels.csv hash mismatch in " + dir.string());
                const auto ct = t.column("timestamp"), cl = t.column("label");
                for (const auto& r : t.rows) labels[parse_iso8601(r[ct])] = std::stoi(r[cl]);
            }
            const auto window_obs = slice_window(obs, win.start, config.window);
            json summary;
            summary["manifest_hash"] = hash;
            try {
                const FitStageResult fit = fit_window(window_obs, labels, wc);
                Table surfaces;
                surfaces.comment = hash_comment(hash);
                surfaces.header = {"timestamp", "v", "cluster", "b10", "b00", "b20", "b01", "b11", "b21", "b02",
                                   "n_obs", "residual_rmse"};
                for (const auto& s : fit.surfaces) {
                    auto it = labels.find(s.timestamp);
                    std::vector<std::string> row{format_iso8601(s.timestamp), num(fit.inst_vol.at(s.timestamp)),
                                                 it == labels.end() ? (config.clustering.icc.k >= 2 ? "-1" : "0")
                                                                    : std::to_string(it->second)};
                    for (double b : s.as_array()) row.push_back(num(b));
                    row.push_back(std::to_string(s.n_obs));
                    row.push_back(num(s.residual_rmse));
                    surfaces.rows.push_back(std::move(row));
                }
                write_table(dir / "surfaces.csv", surfaces);

                Table targets, curves;
                targets.comment = curves.comment = hash_comment(hash);
                targets.header = {"group", "cluster", "timestamp", "v", "mu", "gamma", "eta2",
                                  "mu_fit", "gamma_fit", "eta2_fit"};
                curves.header = {"group", "cluster", "function", "v", "mean", "lower", "upper", "sd"};
                append_fit_rows(fit.unclustered, "unclustered", targets, curves);
                if (fit.clustered) append_fit_rows(*fit.clustered, "clustered", targets, curves);
                write_table(dir / "targets.csv", targets);
                write_table(dir / "curves.csv", curves);

                summary["status"] = "ok";
                summary["degenerate_surfaces"] = fit.degenerate_surfaces;
                summary["unclustered"] = fit_summary(fit.unclustered);
                if (fit.clustered) summary["clustered"] = fit_summary(*fit.clustered);
                summary["complete"] = fit_complete(fit, config.clustering.icc.k);
                ++ok;
            } catch (const DataError& e) {
                summary["status"] = std::string("fit_failed: ") + e.what();
                summary["complete"] = false;
                std::cerr << window_name(win.index) << ": fit_failed: " << e.what() << '\n';
            }
            write_json(dir / "isvm.json", summary);
        }
        if (ok == 0) throw DataError("ISVM fit failed in every window");
    });
}

void stage_evaluate(const PipelineConfig& config) {
    guarded(config, "evaluate", [&] {
        const std::string hash = manifest_hash(config);
        const int k = config.clustering.icc.k;
        const auto windows = read_windows(config);
        Table errors;
        errors.comment = hash_comment(hash);
        errors.header = {"window", "function", "rmse", "mae"};
        std::map<std::string, std::vector<double>> rmse_groups, mae_groups;
        json excluded = json::array();
        std::vector<std::size_t> evaluated;
        for (const auto& win : windows) {
            const fs::path dir = config.output_dir / window_name(win.index);
            if (win.status != "ok") {
                excluded.push_back({{"window", win.index}, {"reason", win.status}});
                continue;
            }
            const json summary = read_json(dir / "isvm.json");
            if (summary.value("manifest_hash", "") != hash) throw DataError("isvm.json hash mismatch in " + dir.string());
            if (summary.value("status", "") != "ok" || !summary.value("complete", false)) {
                excluded.push_back({{"window", win.index},
                                    {"reason", summary.value("status", "") != "ok" ? summary.value("status", "")
                                                                                   : "cluster below 25 observations"}});
                continue;
            }
            const Table t = read_table(dir / "targets.csv");
            if (t.comment != hash_comment(hash)) throw DataError("targets.csv hash mismatch in " + dir.string());
            const auto cg = t.column("group"), cc = t.column("cluster");
            const std::array<std::size_t, 3> ct{t.column("mu"), t.column("gamma"), t.column("eta2")};
            const std::array<std::size_t, 3> cf{t.column("mu_fit"), t.column("gamma_fit"), t.column("eta2_fit")};
            std::vector<ResidualRow> rows;
            for (const auto& r : t.rows) {
                ResidualRow row;
                row.clustered = r[cg] == "clustered";
                row.cluster = std::stoi(r[cc]);
                for (std::size_t i = 0; i < 3; ++i) {
                    row.target[i] = std::stod(r[ct[i]]);
                    row.fitted[i] = std::stod(r[cf[i]]);
                }
                rows.push_back(row);
            }
            const WindowErrors e = errors_from_rows(rows, k, true);
            for (const auto& [name, value] : e.rmse) {
                errors.rows.push_back({std::to_string(win.index), name, num(value), num(e.mae.at(name))});
                rmse_groups[name].push_back(value);
                mae_groups[name].push_back(e.mae.at(name));
            }
            evaluated.push_back(win.index);
        }
        write_table(config.output_dir / "errors.csv", errors);
        if (evaluated.empty()) throw DataError("no window could be evaluated");

        auto summaries = [](const std::map<std::string, std::vector<double>>& groups, bool clustered) {
            std::vector<ErrorGroup> g;
            for (IsvmFunction f : kIsvmFunctions) {
                for (const auto& [name, values] : groups) {
                    const bool has_suffix = name.find('_') != std::string::npos;
                    if (has_suffix != clustered) continue;
                    if (name.substr(0, name.find('_')) != to_string(f)) continue;
                    g.push_back({name, values});
                }
            }
            return summarize(g);
        };
        for (const auto& [metric, groups] : {std::pair{std::string("rmse"), &rmse_groups}, std::pair{std::string("mae"), &mae_groups}}) {
            auto rows = summaries(*groups, false);
            auto clustered_rows = summaries(*groups, true);
            std::vector<ErrorSummary> all = rows;
            all.insert(all.end(), clustered_rows.begin(), clustered_rows.end());
            Table table;
            table.comment = hash_comment(hash);
            table.header = {"func", "Mean", "Pctile[5]", "Pctile[95]", "Diff Pctile[95]-[5]", "n"};
            for (const auto& s : all)
                table.rows.push_back({s.function, num(s.mean), num(s.pctile5), num(s.pctile95), num(s.spread), std::to_string(s.n)});
            write_table(config.output_dir / ("summary_" + metric + ".csv"), table);
            std::ofstream txt(config.output_dir / ("table_" + metric + ".txt"));
            txt << "# " << hash_comment(hash) << '\n' << format_summary_table(all, 2);

            if (metric == "rmse" && k >= 2) {
                const ComparisonReport report = compare_clustered(rows, clustered_rows);
                json entries = json::array();
                for (const auto& e : report.entries) {
                    entries.push_back({{"function", e.function},
                                       {"cluster", e.cluster_id},
                                       {"unclustered_mean", round12(e.unclustered_mean)},
                                       {"clustered_mean", round12(e.clustered_mean)},
                                       {"unclustered_spread", round12(e.unclustered_spread)},
                                       {"clustered_spread", round12(e.clustered_spread)},
                                       {"mean_not_worse", e.mean_not_worse},
                                       {"mean_improved", e.mean_improved},
                                       {"mean_regressed", e.mean_regressed},
                                       {"spread_reduced", e.spread_reduced}});
                }
                write_json(config.output_dir / "comparison.json",
                           {{"manifest_hash", hash},
                            {"metric", "rmse"},
                            {"windows_evaluated", evaluated},
                            {"windows_excluded", excluded},
                            {"entries", entries},
                            {"improvements", report.improvements},
                            {"regressions", report.regressions},
                            {"improvement_fraction", round12(report.improvement_fraction)},
                            {"any_spread_reduced", report.any_spread_reduced}});
            }
        }
    });
}

void run_pipeline(const PipelineConfig& config) {
    if (config.source == SourceKind::Synthetic) stage_simulate(config);
    stage_cluster(config);
    stage_fit(config);
    stage_evaluate(config);
}

} // namespace mrisvm
