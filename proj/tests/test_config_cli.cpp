#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "umi/config.hpp"
#include "umi/errors.hpp"
#include "umi/pipeline.hpp"

using namespace umi;
namespace fs = std::filesystem;

namespace {

const fs::path kCli = UMI_CLI;
const fs::path kSource = UMI_SOURCE_DIR;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Result {
    int code;
    std::string out;
};

// Runs the CLI with stdout and stderr captured together.
Result cli(const std::string& args) {
    const fs::path log = fs::current_path() / "cli_test_output.txt";
    const std::string cmd = kCli.string() + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return {status, slurp(log)};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::current_path() / "cli_scratch" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "run.cfg";
    std::ofstream(p) << text;
    return p;
}

const char* kTiny =
    "seed = 3\n"
    "synth.stocks = 8\n"
    "synth.periods = 90\n"
    "synth.event_probability = 0.4\n"
    "synth.precursor_strength = 1\n"
    "synth.auto_plants = 2\n"
    "split.train_end = 0.7\n"
    "stock.steps = 50\n"
    "market.window = 5\n"
    "market.epochs = 2\n"
    "market.batch = 8\n"
    "forecast.window = 5\n"
    "forecast.width = 4\n"
    "forecast.heads = 1\n"
    "forecast.blocks = 1\n"
    "forecast.max_epochs = 2\n";

}  // namespace

TEST_CASE("config file syntax") {
    std::istringstream ok("# comment\n\n a = 1 \nb=two words\n");
    const auto e = config::parse_entries(ok);
    CHECK(e.at("a") == "1");
    CHECK(e.at("b") == "two words");

    std::istringstream no_eq("a = 1\njust text\n");
    CHECK_THROWS_AS(config::parse_entries(no_eq), ConfigError);
    std::istringstream dup("a = 1\na = 2\n");
    CHECK_THROWS_AS(config::parse_entries(dup), ConfigError);
}

TEST_CASE("unknown keys name themselves") {
    try {
        config::RunConfig::from_entries({{"market.widnow", "3"}});
        FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("market.widnow") != std::string::npos);
    }
}

TEST_CASE("configs round trip and hash stably") {
    std::istringstream in(kTiny);
    const auto cfg = config::RunConfig::from_entries(config::parse_entries(in));
    const auto back = config::RunConfig::from_entries(cfg.to_entries());
    CHECK(back.canonical() == cfg.canonical());
    CHECK(back.hash_hex() == cfg.hash_hex());
    auto moved = cfg;
    moved.out_dir = "elsewhere";
    CHECK(moved.hash() == cfg.hash());
    auto reseeded = cfg;
    reseeded.seed = 4;
    CHECK(reseeded.hash() != cfg.hash());
}

TEST_CASE("config invariants") {
    auto with = [](const std::string& k, const std::string& v) {
        return config::RunConfig::from_entries({{k, v}});
    };
    for (const char* l : {"0", "0.25", "0.5", "0.75", "1"}) CHECK_NOTHROW(with("stock.lambda1", l).validate());
    for (const char* l : {"0", "0.5", "1", "1.5", "2"}) CHECK_NOTHROW(with("market.lambda2", l).validate());
    CHECK_THROWS_AS(with("stock.lambda1", "-1").validate(), ConfigError);
    CHECK_THROWS_AS(with("market.lambda2", "-0.5").validate(), ConfigError);
    CHECK_THROWS_AS(with("forecast.lambda3", "-0.1").validate(), ConfigError);
    CHECK_THROWS_AS(with("synth.stocks", "many"), ConfigError);
    CHECK_THROWS_AS(config::RunConfig::from_entries({{"data.source", "synthetic"}, {"data.csv", "x.csv"}}),
                    ConfigError);
}

TEST_CASE("split bounds") {
    data::SyntheticSpec spec;
    spec.stocks = 4;
    spec.periods = 100;
    const auto panel = data::generate_synthetic(spec);
    config::RunConfig cfg;
    cfg.train_end = "0.8";
    CHECK(pipeline::resolve_split(cfg, panel).train_end == 80);
    cfg.train_end = "60";
    cfg.test_start = "70";
    cfg.test_end = "90";
    const auto s = pipeline::resolve_split(cfg, panel);
    CHECK(s.test_start == 70);
    CHECK(s.test_end == 90);
    cfg.train_end = panel.periods[50];
    cfg.test_start = "";
    cfg.test_end = "";
    CHECK(pipeline::resolve_split(cfg, panel).train_end == 50);
    cfg.test_start = "40";
    CHECK_THROWS_AS(pipeline::resolve_split(cfg, panel), ConfigError);
}

TEST_CASE("metric formatting") {
    CHECK(pipeline::format_metric(2.0071) == "2.0071");
    CHECK(pipeline::format_metric(-0.00001) == "0.0000");
    CHECK(pipeline::format_metric(-1.23456) == "-1.2346");
}

TEST_CASE("cli: synth writes a reproducible panel") {
    const fs::path dir = scratch("synth");
    const auto a = cli("synth --seed 5 --out " + (dir / "a").string());
    const auto b = cli("synth --seed 5 --out " + (dir / "b").string());
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    const std::string text = slurp(dir / "a" / "panel.csv");
    CHECK(text == slurp(dir / "b" / "panel.csv"));
    const auto lines = std::count(text.begin(), text.end(), '\n');
    const config::RunConfig defaults;
    CHECK(static_cast<std::size_t>(lines) == defaults.synth.stocks * defaults.synth.periods + 1);
}

TEST_CASE("cli: malformed key is a config error naming the key") {
    const fs::path dir = scratch("badkey");
    const auto cfg = write_config(dir, "seed = 1\nsynth.stokcs = 5\n");
    const auto r = cli("synth --config " + cfg.string() + " --out " + dir.string());
    CHECK(r.code != 0);
    CHECK(r.out.find("[config]") != std::string::npos);
    CHECK(r.out.find("synth.stokcs") != std::string::npos);
}

TEST_CASE("cli: test split before the training split") {
    const fs::path dir = scratch("order");
    const auto cfg = write_config(dir, std::string(kTiny) + "split.test_start = 10\n");
    const auto r = cli("pipeline --config " + cfg.string() + " --out " + dir.string());
    CHECK(r.code != 0);
    CHECK(r.out.find("[split] ConfigError") != std::string::npos);
}

TEST_CASE("cli: report needs predictions") {
    const fs::path dir = scratch("empty");
    const auto r = cli("report " + dir.string());
    CHECK(r.code != 0);
    CHECK(r.out.find("MissingArtifact") != std::string::npos);
}

TEST_CASE("cli: pipeline, report, reruns and resume") {
    const fs::path dir = scratch("pipeline");
    const auto cfg = write_config(dir, kTiny);
    const fs::path a = dir / "a", b = dir / "b";
    REQUIRE(cli("pipeline --config " + cfg.string() + " --out " + a.string()).code == 0);
    REQUIRE(cli("pipeline --config " + cfg.string() + " --out " + b.string()).code == 0);
    for (const char* f : {"report.txt", "predictions.csv", "series.csv", "factors.csv", "market_repr.csv"}) {
        CHECK(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
        CHECK(slurp(a / f).rfind("# config_hash=", 0) == 0);
    }

    const auto rep = cli("report " + a.string());
    CHECK(rep.code == 0);
    for (const char* m : {"RMSE", "MAE", "IC", "ICIR", "RankIC", "RankICIR", "AR", "AV", "SR", "MDD", "CR"})
        CHECK(rep.out.find(m) != std::string::npos);
    // The report recomputed from predictions.csv agrees with the pipeline's own numbers.
    const std::string report_txt = slurp(a / "report.txt");
    const auto from_dir = pipeline::report_from_directory(a);
    CHECK(report_txt.find("rank_ic: " + pipeline::format_metric(from_dir.forecast.rank_ic)) != std::string::npos);
    CHECK(report_txt.find("sr: " + pipeline::format_metric(from_dir.risk.sr)) != std::string::npos);

    // Stage isolation: drop the downstream artifacts and rebuild them from checkpoints.
    const std::string predictions = slurp(a / "predictions.csv"), factors = slurp(a / "factors.csv");
    fs::remove(a / "predictions.csv");
    fs::remove(a / "factors.csv");
    fs::remove(a / "report.txt");
    const auto resumed = cli("pipeline --config " + cfg.string() + " --out " + a.string() + " --resume");
    CHECK(resumed.code == 0);
    CHECK(resumed.out.find("resumed forecaster") != std::string::npos);
    CHECK(slurp(a / "predictions.csv") == predictions);
    CHECK(slurp(a / "factors.csv") == factors);
    CHECK(slurp(a / "report.txt") == report_txt);

    // A different seed must not reuse those checkpoints.
    const auto clash = cli("pipeline --config " + cfg.string() + " --seed 99 --out " + a.string() + " --resume");
    CHECK(clash.code != 0);
    CHECK(clash.out.find("different configuration") != std::string::npos);
}

TEST_CASE("cli: ablation flag") {
    const fs::path dir = scratch("ablation");
    const auto cfg = write_config(dir, kTiny);
    const auto ok = cli("pipeline --config " + cfg.string() + " --ablation NS --out " + dir.string());
    CHECK(ok.code == 0);
    CHECK(slurp(dir / "report.txt").find("ablation: NS") != std::string::npos);
    const auto bad = cli("pipeline --config " + cfg.string() + " --ablation QQ --out " + dir.string());
    CHECK(bad.code != 0);
}
