#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "infomatch/infomatch.hpp"

namespace {

using namespace infomatch;

std::string run_directory(const RunConfig& cfg, const std::string& explicit_out) {
    if (!explicit_out.empty()) return explicit_out;
    const char* root = std::getenv("INFOMATCH_RUN_ROOT");
    const std::filesystem::path base = root && *root ? root : "runs";
    return (base / cfg.run_name).string();
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_dir, const std::string& resume_path) {
    const RunConfig cfg = load_run_config(config_path, overrides);
    Trainer trainer(cfg);
    TrainState state;
    if (!resume_path.empty()) {
        state = load_checkpoint(resume_path);
        trainer.check_state(state);
    } else {
        state = trainer.init_state();
    }
    const std::string dir = run_directory(cfg, out_dir);
    std::cout << "run directory: " << dir << "\n";
    const RunSummary summary = trainer.run(state, dir);
    std::cout << "steps: " << state.step << "\n";
    std::cout << "top-1 error (EMA): " << summary.final_ema.top1_err << "\n";
    std::cout << "top-1 error (raw): " << summary.final_raw.top1_err << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& config_path,
             const std::vector<std::string>& overrides, const std::string& out_csv) {
    const RunConfig cfg = load_run_config(config_path, overrides);
    Trainer trainer(cfg);
    const TrainState state = load_checkpoint(checkpoint_path);
    trainer.check_state(state);

    const EvalResult raw = trainer.evaluate(state.params);
    const EvalResult ema = trainer.evaluate(state.ema_shadow);
    std::cout << "model,top1_err";
    if (raw.has_top5) std::cout << ",top5_err";
    std::cout << "\n";
    std::cout << "raw," << raw.top1_err;
    if (raw.has_top5) std::cout << ',' << raw.top5_err;
    std::cout << "\nema," << ema.top1_err;
    if (ema.has_top5) std::cout << ',' << ema.top5_err;
    std::cout << "\n";

    if (!out_csv.empty()) {
        std::ofstream out(out_csv);
        if (!out) throw IoError(cat("cannot write ", out_csv));
        out << "model,top1_err" << (raw.has_top5 ? ",top5_err" : "") << "\n";
        out << "raw," << raw.top1_err;
        if (raw.has_top5) out << ',' << raw.top5_err;
        out << "\nema," << ema.top1_err;
        if (ema.has_top5) out << ',' << ema.top5_err;
        out << "\n";
    }
    return 0;
}

int cmd_bounds(const std::string& spec_path, const std::string& report_path) {
    const BoundsLabSpec spec = spec_path.empty() ? BoundsLabSpec{} : load_bounds_spec(spec_path);
    const BoundsReport report = run_bounds_lab(spec);
    report.print(std::cout);
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) throw IoError(cat("cannot write ", report_path));
        report.print(out);
    }
    return report.all_pass() ? 0 : 1;
}

int cmd_plot(const std::string& csv_path, const std::string& out_dir) {
    for (const auto& p : emit_plots(csv_path, out_dir)) std::cout << "wrote " << p << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semi-supervised image classification trainer with entropy-bound verification"};
    app.require_subcommand(1);

    std::string config_path, out_dir, resume_path, checkpoint_path, out_csv;
    std::string bounds_spec, bounds_report, plot_csv, plot_dir;
    std::vector<std::string> overrides;

    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config_path, "JSON config file")->required();
    train->add_option("--set", overrides, "override a config key, e.g. objective.lambda=0");
    train->add_option("--out", out_dir, "run directory (default: $INFOMATCH_RUN_ROOT/<run.name>)");
    train->add_option("--resume", resume_path, "checkpoint to resume from");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (raw and EMA weights)");
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--config", config_path, "JSON config file (provides the dataset)")->required();
    eval->add_option("--set", overrides, "override a config key");
    eval->add_option("--out", out_csv, "also write results to this CSV");

    auto* bounds = app.add_subcommand("bounds", "verify the entropy-bound claims numerically");
    bounds->add_option("--spec", bounds_spec, "distribution spec JSON (default: built-in spec)");
    bounds->add_option("--report", bounds_report, "also write the report to this file");

    auto* plot = app.add_subcommand("plot", "render accuracy/utilization charts from a metrics CSV");
    plot->add_option("--csv", plot_csv, "metrics CSV produced by train")->required();
    plot->add_option("--out", plot_dir, "output directory for SVG files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, overrides, out_dir, resume_path);
        if (eval->parsed()) return cmd_eval(checkpoint_path, config_path, overrides, out_csv);
        if (bounds->parsed()) return cmd_bounds(bounds_spec, bounds_report);
        if (plot->parsed()) return cmd_plot(plot_csv, plot_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
