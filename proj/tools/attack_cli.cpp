// attack: command-line front end for the experiment harness.
#include <cstdio>
#include <exception>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "symbiotic/harness.hpp"
#include "symbiotic/synthetic.hpp"

using namespace symbiotic;
namespace fs = std::filesystem;

namespace {

std::vector<double> parse_values(const std::string& list) {
    std::vector<double> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (used != item.size()) throw std::invalid_argument("bad sweep value '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("--values is empty");
    return out;
}

void write_report(const AttackReport& report, const fs::path& dir) {
    emit_report(report, ReportFormat::csv, dir / "report.csv");
    emit_report(report, ReportFormat::json, dir / "report.json");
}

void print_summary(const AttackReport& r) {
    std::printf("%s %s %s %s budget=%.4f  clean %.4f +- %.4f  perturbed %.4f +- %.4f  (%zu seeds)\n",
                to_string(r.config.arch).c_str(), r.dataset_name.c_str(), to_string(r.config.mode).c_str(),
                to_string(r.config.attack).c_str(), r.config.budget_fraction, r.clean_mean, r.clean_se, r.mean_acc,
                r.se_acc, r.rows.size());
    if (r.failed) std::fprintf(stderr, "FAILED: %s\n", r.failure.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gradient-based structure attacks on graph neural networks"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    auto* run = app.add_subcommand("run", "Run one experiment configuration");
    run->add_option("--config", config_path, "Experiment JSON file")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "Output directory (overrides output_dir)");

    std::string param, values;
    auto* sweep = app.add_subcommand("sweep", "Repeat an experiment over one parameter");
    sweep->add_option("--config", config_path, "Experiment JSON file")->required()->check(CLI::ExistingFile);
    sweep->add_option("--param", param, "budget_fraction | block_size | test_fraction | inner_iterations")->required();
    sweep->add_option("--values", values, "Comma-separated values")->required();
    sweep->add_option("--out", out_dir, "Output directory (overrides output_dir)");

    CsbmConfig csbm;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    auto* gen = app.add_subcommand("generate", "Write a synthetic dataset in the canonical directory format");
    gen->add_option("--out", gen_out, "Dataset directory")->required();
    gen->add_option("--nodes", csbm.num_nodes, "Node count")->capture_default_str();
    gen->add_option("--classes", csbm.num_classes, "Class count")->capture_default_str();
    gen->add_option("--features", csbm.feature_dim, "Binary feature count")->capture_default_str();
    gen->add_option("--p-in", csbm.p_in, "Edge probability within a class")->capture_default_str();
    gen->add_option("--p-out", csbm.p_out, "Edge probability across classes")->capture_default_str();
    gen->add_option("--q-in", csbm.q_in, "Feature probability, own block")->capture_default_str();
    gen->add_option("--q-out", csbm.q_out, "Feature probability, other blocks")->capture_default_str();
    gen->add_option("--seed", gen_seed, "Random seed")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const Graph g = make_csbm(csbm, gen_seed);
            save_dataset(g, gen_out);
            std::printf("wrote %s: %zu nodes, %zu edges, %zu classes\n", gen_out.c_str(), g.num_nodes, g.num_edges(),
                        g.num_classes);
            return 0;
        }
        ExperimentConfig cfg = load_config(config_path);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (cfg.output_dir.empty()) cfg.output_dir = "out";

        if (run->parsed()) {
            const AttackReport report = run_experiment(cfg);
            write_report(report, cfg.output_dir);
            print_summary(report);
            return report.failed ? 1 : 0;
        }
        const SweepResult result = run_sweep(cfg, sweep_param_from_string(param), parse_values(values));
        bool failed = false;
        for (std::size_t i = 0; i < result.reports.size(); ++i) {
            const AttackReport& r = result.reports[i];
            write_report(r, r.config.output_dir);
            std::printf("%s=%g  ", to_string(result.param).c_str(), result.values[i]);
            print_summary(r);
            failed = failed || r.failed;
        }
        write_file_atomic(cfg.output_dir / "sweep.csv", sweep_csv(result));
        return failed ? 1 : 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
