#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "symbiotic/harness.hpp"
#include "symbiotic/synthetic.hpp"

using namespace symbiotic;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("symbiotic_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Shared tiny dataset on disk.
const fs::path& dataset_dir() {
    static const fs::path dir = [] {
        const fs::path d = scratch("dataset");
        CsbmConfig c;
        c.num_nodes = 60;
        c.feature_dim = 12;
        c.p_in = 0.15;
        c.p_out = 0.02;
        save_dataset(make_csbm(c, 5), d);
        return d;
    }();
    return dir;
}

json base_config(const std::string& attack) {
    return json{{"dataset", dataset_dir().string()},
                {"model", "gcn"},
                {"attack", attack},
                {"budget_fraction", 0.1},
                {"seeds", {1, 2, 3}},
                {"iterations", 3},
                {"labeled_per_class", 5},
                {"test_fraction", 0.2},
                {"record_runtime", false},
                {"model_options", {{"hidden", 8}}},
                {"attack_options", {{"final_samples", 3}}},
                {"victim", {{"epochs", 40}, {"patience", 20}}},
                {"surrogate", {{"epochs", 40}, {"patience", 20}}},
                {"unrolled", {{"epochs", 5}}}};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Config, ParsesAndResolvesRelativePaths) {
    json j = base_config("joint");
    j["dataset"] = "data/cora";
    j["output_dir"] = "out";
    j["alpha"] = 0.25;
    j["inner_iterations"] = 4;
    j["defense"] = "jaccard";
    j["label_source"] = "self_train";
    j["attack_options"]["evasion_loss"] = "ce";
    const ExperimentConfig c = parse_config(j, "/configs");
    EXPECT_EQ(c.dataset, fs::path("/configs/data/cora"));
    EXPECT_EQ(c.output_dir, fs::path("/configs/out"));
    EXPECT_EQ(c.attack, AttackKind::joint);
    EXPECT_EQ(c.defense, Defense::jaccard);
    EXPECT_EQ(c.label_source, LabelSource::self_train);
    EXPECT_DOUBLE_EQ(c.attack_cfg.alpha, 0.25);
    EXPECT_EQ(c.attack_cfg.inner_iterations, 4u);
    EXPECT_EQ(c.attack_cfg.evasion_loss, LossKind::cross_entropy);
    EXPECT_EQ(c.attack_cfg.unrolled.epochs, 5u);
    EXPECT_EQ(c.attack_cfg.unrolled.optimizer, Optimizer::sgd_momentum);
    EXPECT_EQ(c.model_spec(make_csbm(CsbmConfig{}, 1)).hidden, 8u);

    const ExperimentConfig again = parse_config(to_json(c));
    EXPECT_EQ(to_json(again), to_json(c));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    json j = base_config("evasion");
    j["budget"] = 0.1;
    EXPECT_THROW(parse_config(j), std::invalid_argument);
    j = base_config("evasion");
    j["model_options"]["width"] = 3;
    EXPECT_THROW(parse_config(j), std::invalid_argument);
    j = base_config("evasion");
    j["victim"]["lr"] = -1.0;
    EXPECT_THROW(parse_config(j), std::invalid_argument);
    j = base_config("blackhole");
    EXPECT_THROW(parse_config(j), std::invalid_argument);
    j = base_config("evasion");
    j.erase("dataset");
    EXPECT_THROW(parse_config(j), std::invalid_argument);
    j = base_config("evasion");
    j["alpha"] = 2.0;
    EXPECT_THROW(parse_config(j), std::invalid_argument);
}

TEST(Experiment, CleanPipelineLeavesAccuracyUnchanged) {
    const AttackReport r = run_experiment(parse_config(base_config("clean")));
    ASSERT_FALSE(r.failed) << r.failure;
    ASSERT_EQ(r.rows.size(), 3u);
    for (const auto& row : r.rows) {
        EXPECT_EQ(row.perturbed_acc, row.clean_acc);
        EXPECT_EQ(row.poison_flips + row.evasion_flips, 0u);
    }
    EXPECT_EQ(r.mean_acc, r.clean_mean);
}

TEST(Experiment, ReportHasSummaryPlusOneRowPerSeed) {
    const fs::path out = scratch("rows");
    json j = base_config("sequential");
    j["output_dir"] = out.string();
    const AttackReport r = run_experiment(parse_config(j));
    ASSERT_FALSE(r.failed) << r.failure;
    const std::string csv = report_csv(r);
    EXPECT_EQ(count_lines(csv), 1u + 1u + 3u);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "model,dataset,defense,mode,attack,budget,mean_acc,se_acc,seeds,runtime_s,row,seed,clean_acc,clean_se,num_flips");
    for (const auto& row : r.rows) {
        EXPECT_LE(row.poison_flips + row.evasion_flips, row.budget);
        ASSERT_FALSE(row.flips_file.empty());
        std::ifstream in(out / row.flips_file);
        const auto records = read_flips(in);
        ASSERT_EQ(records.size(), 2u);
        EXPECT_EQ(records[0].stage, "poison");
        EXPECT_EQ(records[1].stage, "evasion");
        EXPECT_EQ(records[0].flips.size(), row.poison_flips);
    }
}

TEST(Experiment, ByteIdenticalReportsAcrossRuns) {
    const ExperimentConfig c = parse_config(base_config("poisoning"));
    EXPECT_EQ(report_csv(run_experiment(c)), report_csv(run_experiment(c)));
}

TEST(Experiment, DefenseSelfTrainingAndWhiteBoxRun) {
    json j = base_config("evasion");
    j["defense"] = "jaccard";
    j["purify_before_attack"] = true;
    j["label_source"] = "self_train";
    j["seeds"] = {4};
    AttackReport r = run_experiment(parse_config(j));
    EXPECT_FALSE(r.failed) << r.failure;
    j = base_config("evasion");
    j["white_box"] = true;
    j["mode"] = "inductive";
    j["seeds"] = {4};
    r = run_experiment(parse_config(j));
    EXPECT_FALSE(r.failed) << r.failure;
}

TEST(Experiment, FailingSeedMarksReport) {
    json j = base_config("clean");
    j["labeled_per_class"] = 100;
    const AttackReport r = run_experiment(parse_config(j));
    EXPECT_TRUE(r.failed);
    EXPECT_TRUE(r.rows.empty());
    EXPECT_NE(r.failure.find("seed 1"), std::string::npos);
    EXPECT_NE(report_csv(r).find(",failed,"), std::string::npos);
}

TEST(Report, JsonRoundTrip) {
    const AttackReport r = run_experiment(parse_config(base_config("evasion")));
    const AttackReport back = report_from_json(report_json(r));
    EXPECT_EQ(report_json(back), report_json(r));
    EXPECT_EQ(report_csv(back), report_csv(r));
}

TEST(Report, MeanAndStandardError) {
    EXPECT_EQ(mean_and_se({}), (std::pair<double, double>{0.0, 0.0}));
    EXPECT_EQ(mean_and_se({0.5}), (std::pair<double, double>{0.5, 0.0}));
    const auto [m, se] = mean_and_se({0.6, 0.8});
    EXPECT_DOUBLE_EQ(m, 0.7);
    EXPECT_NEAR(se, 0.1, 1e-12);  // sample sd 0.1414 / sqrt 2
}

TEST(Sweep, RejectsInapplicableParameters) {
    ExperimentConfig clean = parse_config(base_config("clean"));
    EXPECT_THROW(run_sweep(clean, SweepParam::budget_fraction, {0.1}), std::invalid_argument);
    EXPECT_THROW(run_sweep(clean, SweepParam::block_size, {10}), std::invalid_argument);
    ExperimentConfig seq = parse_config(base_config("sequential"));
    EXPECT_THROW(run_sweep(seq, SweepParam::inner_iterations, {1}), std::invalid_argument);
    EXPECT_THROW(run_sweep(seq, SweepParam::block_size, {2.5}), std::invalid_argument);
    EXPECT_THROW(run_sweep(seq, SweepParam::test_fraction, {}), std::invalid_argument);
    EXPECT_THROW(sweep_param_from_string("epochs"), std::invalid_argument);
}

TEST(Sweep, OneReportPerValue) {
    json j = base_config("evasion");
    j["seeds"] = {1};
    j["output_dir"] = scratch("sweep").string();
    const SweepResult s = run_sweep(parse_config(j), SweepParam::budget_fraction, {0.0, 0.1});
    ASSERT_EQ(s.reports.size(), 2u);
    EXPECT_EQ(s.reports[0].rows[0].evasion_flips, 0u);
    EXPECT_EQ(s.reports[0].rows[0].perturbed_acc, s.reports[0].rows[0].clean_acc);
    const std::string csv = sweep_csv(s);
    EXPECT_EQ(csv.rfind("parameter,value,model", 0), 0u);
    EXPECT_EQ(count_lines(csv), 1u + 2u * 2u);
    EXPECT_TRUE(fs::exists(fs::path(j["output_dir"].get<std::string>()) / "budget_fraction=0.1000"));
}

TEST(Files, AtomicWriteLeavesNoTemporary) {
    const fs::path dir = scratch("atomic");
    write_file_atomic(dir / "sub" / "a.txt", "first");
    write_file_atomic(dir / "sub" / "a.txt", "second");
    EXPECT_EQ(slurp(dir / "sub" / "a.txt"), "second");
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "sub")) ++entries;
    EXPECT_EQ(entries, 1u);
}

TEST(Cli, RunWritesReports) {
    const fs::path dir = scratch("cli");
    json j = base_config("sequential");
    j["seeds"] = {7};
    std::ofstream(dir / "config.json") << j.dump(2);
    const std::string cmd = std::string(SYMBIOTIC_CLI) + " run --config " + (dir / "config.json").string() + " --out " +
                            (dir / "out").string() + " > " + (dir / "log.txt").string() + " 2>&1";
    ASSERT_EQ(std::system(cmd.c_str()), 0) << slurp(dir / "log.txt");
    EXPECT_TRUE(fs::exists(dir / "out" / "report.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "report.json"));
    EXPECT_TRUE(fs::exists(dir / "out" / "flips" / "7.csv"));
    EXPECT_EQ(count_lines(slurp(dir / "out" / "report.csv")), 3u);

    const std::string bad = std::string(SYMBIOTIC_CLI) + " run --config " + (dir / "missing.json").string() + " > /dev/null 2>&1";
    EXPECT_NE(std::system(bad.c_str()), 0);
}
