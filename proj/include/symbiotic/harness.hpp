#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "symbiotic/attack.hpp"
#include "symbiotic/graph.hpp"
#include "symbiotic/models.hpp"
#include "symbiotic/training.hpp"

namespace symbiotic {

enum class Defense { none, jaccard };
enum class AttackKind { clean, evasion, poisoning, sequential, joint };
enum class LabelSource { true_labels, self_train };

std::string to_string(Defense d);
std::string to_string(AttackKind a);
std::string to_string(LabelSource s);
Defense defense_from_string(const std::string& s);
AttackKind attack_kind_from_string(const std::string& s);
LabelSource label_source_from_string(const std::string& s);

struct ExperimentConfig {
    std::filesystem::path dataset;
    Arch arch = Arch::gcn;
    Defense defense = Defense::none;
    double jaccard_threshold = 0.0;
    bool purify_before_attack = false;  // also purify the graph the attacker sees
    SplitMode mode = SplitMode::transductive;
    AttackKind attack = AttackKind::evasion;
    double budget_fraction = 0.05;
    std::size_t labeled_per_class = 20;
    double test_fraction = 0.1;
    std::vector<std::uint64_t> seeds;
    LabelSource label_source = LabelSource::true_labels;
    bool white_box = false;
    bool record_runtime = true;
    std::filesystem::path output_dir;

    // Model hyperparameters left at 0 take the architecture default.
    std::size_t hidden = 0;
    std::size_t heads = 0;
    std::size_t hops = 0;
    double teleport = -1.0;
    double dropout = -1.0;

    AttackConfig attack_cfg;
    TrainConfig victim = TrainConfig::victim();

    void validate() const;
    ModelSpec model_spec(const Graph& g) const;
};

/// Parses a config object. Unknown keys are rejected. Relative dataset and
/// output paths are resolved against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

struct SeedResult {
    std::uint64_t seed = 0;
    std::size_t budget = 0;  // absolute flip budget
    double clean_acc = 0.0;
    double perturbed_acc = 0.0;
    std::size_t poison_flips = 0;
    std::size_t evasion_flips = 0;
    double runtime_s = 0.0;
    std::string flips_file;  // relative to the output directory, empty if none
};

struct AttackReport {
    ExperimentConfig config;
    std::string dataset_name;
    std::vector<SeedResult> rows;
    double mean_acc = 0.0;
    double se_acc = 0.0;
    double clean_mean = 0.0;
    double clean_se = 0.0;
    double runtime_s = 0.0;
    bool failed = false;
    std::string failure;
};

/// Mean and standard error (sample stddev / sqrt(k); 0 for k < 2).
std::pair<double, double> mean_and_se(const std::vector<double>& xs);

/// Runs every seed of `cfg`. Worker threads come from SYMBIOTIC_WORKERS.
/// A failing seed marks the report failed and keeps the finished rows.
/// When cfg.output_dir is set, flip files are written there.
AttackReport run_experiment(const ExperimentConfig& cfg);

/// One seed of the pipeline on an already loaded graph.
SeedResult run_seed(const ExperimentConfig& cfg, const Graph& g, std::uint64_t seed, std::vector<FlipRecord>* flips);

enum class SweepParam { budget_fraction, block_size, test_fraction, inner_iterations };
std::string to_string(SweepParam p);
SweepParam sweep_param_from_string(const std::string& s);

struct SweepResult {
    SweepParam param;
    std::vector<double> values;
    std::vector<AttackReport> reports;
};

SweepResult run_sweep(const ExperimentConfig& cfg, SweepParam param, const std::vector<double>& values);

enum class ReportFormat { csv, json };

/// Column order: model, dataset, defense, mode, attack, budget, mean_acc,
/// se_acc, seeds, runtime_s, row, seed, clean_acc, clean_se, num_flips.
/// One summary row, then one row per seed.
std::string report_csv(const AttackReport& report);
nlohmann::json report_json(const AttackReport& report);
AttackReport report_from_json(const nlohmann::json& j);
void emit_report(const AttackReport& report, ReportFormat format, const std::filesystem::path& path);

/// Long-format sweep table: parameter, value, then the report columns.
std::string sweep_csv(const SweepResult& sweep);

/// Writes via a temporary sibling file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace symbiotic
