// umi: synthesize a market, run the full train/backtest pipeline, or print
// the metric block of a finished run.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "umi/config.hpp"
#include "umi/errors.hpp"
#include "umi/pipeline.hpp"

namespace {

struct Overrides {
    std::string config_path;
    std::string seed;
    std::string out;
    std::string ablation;
};

// Command-line flags win over the file. They go through the same key table so
// a bad value is reported exactly like one in the file.
umi::config::RunConfig resolve(const Overrides& o) {
    umi::config::Entries entries;
    if (!o.config_path.empty()) entries = umi::config::load_entries(o.config_path);
    if (!o.seed.empty()) entries["seed"] = o.seed;
    if (!o.out.empty()) entries["out"] = o.out;
    if (!o.ablation.empty()) entries["forecast.ablation"] = o.ablation;
    return umi::config::RunConfig::from_entries(entries);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"umi: irrationality-factor stock forecasting pipeline"};
    app.require_subcommand(1);

    Overrides o;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", o.config_path, "key = value configuration file");
        cmd->add_option("--seed", o.seed, "root seed (overrides the file)");
        cmd->add_option("--out", o.out, "output directory (overrides the file)");
    };

    auto* synth = app.add_subcommand("synth", "write a synthetic panel to <out>/panel.csv");
    add_common(synth);

    bool resume = false;
    auto* pipe = app.add_subcommand("pipeline", "train all stages, backtest, write the run directory");
    add_common(pipe);
    pipe->add_option("--ablation", o.ablation, "NS, NM, NR or ND");
    pipe->add_flag("--resume", resume, "reuse checkpoints written by an identical config");

    std::string run_dir;
    auto* report = app.add_subcommand("report", "print the metric block of a run directory");
    report->add_option("dir", run_dir, "run directory")->required();

    CLI11_PARSE(app, argc, argv);

    std::string stage = "config";
    try {
        if (*synth) {
            const auto cfg = resolve(o);
            stage = "synth";
            const auto path = umi::pipeline::write_synthetic(cfg, cfg.out_dir);
            std::cout << "wrote " << path.string() << '\n';
        } else if (*pipe) {
            const auto cfg = resolve(o);
            stage = "pipeline";
            const auto run = umi::pipeline::run_to_directory(cfg, cfg.out_dir, resume);
            for (const auto& s : run.resumed) std::cout << "resumed " << s << " from checkpoint\n";
            std::cout << umi::pipeline::format_metric_table(run.report);
            std::cout << "wrote " << cfg.out_dir << '\n';
        } else if (*report) {
            stage = "report";
            std::cout << umi::pipeline::format_metric_table(
                umi::pipeline::report_from_directory(run_dir));
        }
    } catch (const umi::pipeline::StageFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const umi::Error& e) {
        std::cerr << "error: [" << stage << "] " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: [" << stage << "] " << e.what() << '\n';
        return 1;
    }
    return 0;
}
