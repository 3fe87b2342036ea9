#include "mrisvm/config.hpp"
#include "mrisvm/errors.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <fstream>

using namespace mrisvm;

namespace {

bool rejects_with(const std::string& text, const std::string& fragment) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return std::string(e.what()).find(fragment) != std::string::npos;
    }
    return false;
}

} // namespace

TEST_CASE("empty config keeps the published defaults") {
    const PipelineConfig c = parse_config("{}");
    CHECK(c.seed == 1);
    CHECK(c.source == SourceKind::Synthetic);
    CHECK(c.threads == 1);
    CHECK(c.window.window_length == std::chrono::days{5});
    CHECK(c.window.sampling_interval == std::chrono::minutes{20});
    CHECK(c.clustering.icc.k == 2);
    CHECK(c.clustering.icc.lambda == 0.5);
    CHECK(c.clustering.icc.lambda_decay == 0.75);
    CHECK(c.clustering.moneyness_band.low == 0.8);
    CHECK(c.clustering.moneyness_band.high == 1.2);
    CHECK(c.clustering.max_tau_days == 7.0);
    CHECK(c.clustering.missing_threshold == 0.66);
    CHECK(c.isvm.tau_range.min_days == 5.0);
    CHECK(c.isvm.tau_range.max_days == 60.0);
    CHECK(c.isvm.min_observations == 25);
    CHECK(c.isvm.bootstrap_samples == 500);
    CHECK(c.synthetic.regimes.size() == 2);
}

TEST_CASE("values are read") {
    const PipelineConfig c = parse_config(R"({
        "seed": 42, "threads": 3,
        "rates": {"r": 0.01, "d": 0.02},
        "window": {"length_days": 2, "step_days": 1, "sampling_minutes": 30},
        "clustering": {"k": 3, "lambda": 1.5, "gain": "euclidean", "moneyness_low": 0.9},
        "isvm": {"bootstrap_samples": 50, "inversion": "simplified"},
        "synthetic": {"engine": "monte_carlo", "mc_paths": 200,
                      "regimes": [{"name": "a", "rho": 0.1, "nu": 0.5}]}
    })");
    CHECK(c.seed == 42);
    CHECK(c.threads == 3);
    CHECK(c.r == 0.01);
    CHECK(c.d == 0.02);
    CHECK(c.window.window_length == std::chrono::days{2});
    CHECK(c.window.step == std::chrono::days{1});
    CHECK(c.window.sampling_interval == std::chrono::minutes{30});
    CHECK(c.clustering.icc.k == 3);
    CHECK(c.clustering.icc.lambda == 1.5);
    CHECK(c.clustering.icc.gain_kind == GainKind::Euclidean);
    CHECK(c.clustering.moneyness_band.low == 0.9);
    CHECK(c.isvm.bootstrap_samples == 50);
    CHECK(c.isvm.inversion == InversionKind::Simplified);
    CHECK(c.synthetic.engine == PricingEngine::MonteCarlo);
    CHECK(c.synthetic.mc.n_paths == 200);
    REQUIRE(c.synthetic.regimes.size() == 1);
    CHECK(c.synthetic.regimes[0].params.nu == 0.5);
}

TEST_CASE("bad configs are rejected") {
    CHECK(rejects_with(R"({"sed": 1})", "unknown key 'sed'"));
    CHECK(rejects_with(R"({"clustering": {"lamda": 1}})", "clustering: unknown key 'lamda'"));
    CHECK(rejects_with(R"({"synthetic": {"regimes": [{"rh": 0}]}})", "regimes[0]"));
    CHECK(rejects_with("{not json", "not valid JSON"));
    CHECK(rejects_with(R"({"seed": "x"})", "config.seed"));
    CHECK(rejects_with(R"({"threads": 0})", "threads"));
    CHECK(rejects_with(R"({"clustering": {"k": 0}})", "clustering.k"));
    CHECK(rejects_with(R"({"clustering": {"missing_threshold": 1.5}})", "missing_threshold"));
    CHECK(rejects_with(R"({"clustering": {"moneyness_low": 1.3}})", "moneyness band"));
    CHECK(rejects_with(R"({"clustering": {"gain": "cosine"}})", "clustering.gain"));
    CHECK(rejects_with(R"({"synthetic": {"engine": "pde"}})", "synthetic.engine"));
    CHECK(rejects_with(R"({"synthetic": {"regimes": []}})", "regimes must not be empty"));
    CHECK(rejects_with(R"({"synthetic": {"regimes": [{"rho": 1.0}]}})", "rho"));
    CHECK(rejects_with(R"({"source": {"kind": "ftp"}})", "source.kind"));
    CHECK(rejects_with(R"({"source": {"kind": "file"}})", "source.path"));
    CHECK(rejects_with(R"({"source": {"kind": "file", "path": "/nonexistent/q.csv"}})", "does not exist"));
    CHECK(rejects_with(R"({"window": {"length_days": 5, "sampling_minutes": 7}})", ""));
}

TEST_CASE("manifest hash") {
    const PipelineConfig base = parse_config("{}");
    const std::string h = manifest_hash(base);
    CHECK(h.size() == 16);
    CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(manifest_hash(parse_config("{}")) == h);

    // output location and thread count do not enter the hash
    CHECK(manifest_hash(parse_config(R"({"output_dir": "elsewhere", "threads": 8})")) == h);
    CHECK(manifest_hash(parse_config(R"({"seed": 2})")) != h);
    CHECK(manifest_hash(parse_config(R"({"clustering": {"lambda": 0.6}})")) != h);
    CHECK(manifest_hash(parse_config(R"({"isvm": {"bootstrap_samples": 499}})")) != h);

    // key order in the file is irrelevant; the canonical form parses back to itself
    CHECK(manifest_hash(parse_config(R"({"rates": {"d": 0.0, "r": 0.01}})")) ==
          manifest_hash(parse_config(R"({"rates": {"r": 0.01, "d": 0.0}})")));
    const PipelineConfig again = parse_config(canonical_config_json(base));
    CHECK(canonical_config_json(again) == canonical_config_json(base));
}

TEST_CASE("relative input paths resolve against the config directory") {
    testing::TempDir dir("config");
    std::filesystem::create_directories(dir.path() / "data");
    std::ofstream(dir.path() / "data" / "quotes.csv") << "x\n";
    const auto cfg = dir.path() / "run.json";
    std::ofstream(cfg) << R"({"source": {"kind": "file", "path": "data/quotes.csv"}, "output_dir": "o"})";
    const PipelineConfig c = load_config(cfg);
    CHECK(c.source == SourceKind::File);
    CHECK(c.input_path == dir.path() / "data" / "quotes.csv");
    CHECK(c.output_dir == "o");

    CHECK_THROWS_AS(load_config(dir.path() / "missing.json"), ConfigError);
}

TEST_CASE("bundled config") {
    const PipelineConfig c = load_config(std::filesystem::path(MRISVM_SOURCE_DIR) / "configs" / "two_regime.json");
    CHECK(c.seed == 7);
    CHECK(c.clustering.icc.k == 2);
    CHECK(c.clustering.moneyness_band.low == 0.88);
    CHECK(c.clustering.moneyness_band.high == 1.04);
    CHECK(c.synthetic.regimes.size() == 2);
    CHECK(c.synthetic.regimes[1].name == "stressed");
    CHECK(c.isvm.bootstrap_samples == 500);
}
