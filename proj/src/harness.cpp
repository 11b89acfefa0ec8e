#include "symbiotic/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "symbiotic/parallel.hpp"
#include "symbiotic/random.hpp"

namespace symbiotic {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Seed fan-out streams.
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kVictimStream = 2;
constexpr std::uint64_t kAttackStream = 3;
constexpr std::uint64_t kSurrogateStream = 4;

std::string fmt(double x, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
    for (const auto& [k, v] : j.items()) {
        if (!allowed.count(k)) throw std::invalid_argument(where + ": unknown key '" + k + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

TrainConfig parse_train(const json& j, TrainConfig c, const std::string& where) {
    check_keys(j,
               {"epochs", "optimizer", "lr", "weight_decay", "momentum", "early_stopping", "patience", "dropout",
                "max_unroll_steps", "memory_cap_mb"},
               where);
    read(j, "epochs", c.epochs);
    if (j.contains("optimizer")) c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
    read(j, "lr", c.learning_rate);
    read(j, "weight_decay", c.weight_decay);
    read(j, "momentum", c.momentum);
    read(j, "early_stopping", c.early_stopping);
    read(j, "patience", c.patience);
    read(j, "dropout", c.dropout);
    read(j, "max_unroll_steps", c.max_unroll_steps);
    if (j.contains("memory_cap_mb")) c.memory_cap_bytes = j.at("memory_cap_mb").get<std::size_t>() << 20;
    return c;
}

json train_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"optimizer", to_string(c.optimizer)},
                {"lr", c.learning_rate},
                {"weight_decay", c.weight_decay},
                {"momentum", c.momentum},
                {"early_stopping", c.early_stopping},
                {"patience", c.patience},
                {"dropout", c.dropout},
                {"max_unroll_steps", c.max_unroll_steps},
                {"memory_cap_mb", c.memory_cap_bytes >> 20}};
}

std::size_t worker_count() {
    if (const char* env = std::getenv("SYMBIOTIC_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return 1;
}

}  // namespace

std::string to_string(Defense d) { return d == Defense::none ? "none" : "jaccard"; }

std::string to_string(AttackKind a) {
    switch (a) {
        case AttackKind::clean: return "clean";
        case AttackKind::evasion: return "evasion";
        case AttackKind::poisoning: return "poisoning";
        case AttackKind::sequential: return "sequential";
        case AttackKind::joint: return "joint";
    }
    return "?";
}

std::string to_string(LabelSource s) { return s == LabelSource::true_labels ? "true" : "self_train"; }

Defense defense_from_string(const std::string& s) {
    if (s == "none") return Defense::none;
    if (s == "jaccard") return Defense::jaccard;
    throw std::invalid_argument("unknown defense: " + s);
}

AttackKind attack_kind_from_string(const std::string& s) {
    for (auto a : {AttackKind::clean, AttackKind::evasion, AttackKind::poisoning, AttackKind::sequential,
                   AttackKind::joint}) {
        if (to_string(a) == s) return a;
    }
    throw std::invalid_argument("unknown attack: " + s);
}

LabelSource label_source_from_string(const std::string& s) {
    if (s == "true") return LabelSource::true_labels;
    if (s == "self_train") return LabelSource::self_train;
    throw std::invalid_argument("unknown label source: " + s);
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw std::invalid_argument("config: seeds must not be empty");
    if (budget_fraction < 0.0) throw std::invalid_argument("config: budget fraction must be >= 0");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("config: test fraction must lie in (0, 1)");
    if (labeled_per_class == 0) throw std::invalid_argument("config: labeled_per_class must be positive");
    if (dataset.empty()) throw std::invalid_argument("config: dataset path missing");
    attack_cfg.validate();
    victim.validate();
}

ModelSpec ExperimentConfig::model_spec(const Graph& g) const {
    ModelSpec s = ModelSpec::defaults(arch, g.feature_dim(), g.num_classes);
    if (hidden) s.hidden = hidden;
    if (heads) s.heads = heads;
    if (hops) s.hops = hops;
    if (teleport >= 0.0) s.alpha = teleport;
    if (dropout >= 0.0) s.dropout = dropout;
    return s;
}

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
    check_keys(j,
               {"dataset", "model", "defense", "jaccard_threshold", "purify_before_attack", "mode", "attack",
                "budget_fraction", "alpha", "inner_iterations", "block_size", "iterations", "seeds", "label_source",
                "white_box", "record_runtime", "output_dir", "labeled_per_class", "test_fraction", "model_options",
                "attack_options", "victim", "surrogate", "unrolled"},
               "config");
    ExperimentConfig c;
    auto resolve = [&](const std::string& p) {
        fs::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    if (!j.contains("dataset")) throw std::invalid_argument("config: dataset path missing");
    c.dataset = resolve(j.at("dataset").get<std::string>());
    if (j.contains("model")) c.arch = arch_from_string(j.at("model").get<std::string>());
    if (j.contains("defense")) c.defense = defense_from_string(j.at("defense").get<std::string>());
    read(j, "jaccard_threshold", c.jaccard_threshold);
    read(j, "purify_before_attack", c.purify_before_attack);
    if (j.contains("mode")) c.mode = split_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("attack")) c.attack = attack_kind_from_string(j.at("attack").get<std::string>());
    read(j, "budget_fraction", c.budget_fraction);
    read(j, "alpha", c.attack_cfg.alpha);
    read(j, "inner_iterations", c.attack_cfg.inner_iterations);
    read(j, "block_size", c.attack_cfg.block_size);
    read(j, "iterations", c.attack_cfg.iterations);
    read(j, "seeds", c.seeds);
    if (j.contains("label_source")) c.label_source = label_source_from_string(j.at("label_source").get<std::string>());
    read(j, "white_box", c.white_box);
    read(j, "record_runtime", c.record_runtime);
    if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>());
    read(j, "labeled_per_class", c.labeled_per_class);
    read(j, "test_fraction", c.test_fraction);
    if (j.contains("model_options")) {
        const json& m = j.at("model_options");
        check_keys(m, {"hidden", "heads", "hops", "alpha", "dropout"}, "model_options");
        read(m, "hidden", c.hidden);
        read(m, "heads", c.heads);
        read(m, "hops", c.hops);
        read(m, "alpha", c.teleport);
        read(m, "dropout", c.dropout);
    }
    if (j.contains("attack_options")) {
        const json& a = j.at("attack_options");
        check_keys(a, {"base_lr", "final_samples", "keep_threshold", "projection_tol", "evasion_loss", "poisoning_loss"},
                   "attack_options");
        read(a, "base_lr", c.attack_cfg.base_lr);
        read(a, "final_samples", c.attack_cfg.final_samples);
        read(a, "keep_threshold", c.attack_cfg.keep_threshold);
        read(a, "projection_tol", c.attack_cfg.projection_tol);
        if (a.contains("evasion_loss")) c.attack_cfg.evasion_loss = loss_kind_from_string(a.at("evasion_loss").get<std::string>());
        if (a.contains("poisoning_loss")) {
            c.attack_cfg.poisoning_loss = loss_kind_from_string(a.at("poisoning_loss").get<std::string>());
        }
    }
    if (j.contains("victim")) c.victim = parse_train(j.at("victim"), c.victim, "victim");
    if (j.contains("surrogate")) c.attack_cfg.surrogate = parse_train(j.at("surrogate"), c.attack_cfg.surrogate, "surrogate");
    if (j.contains("unrolled")) c.attack_cfg.unrolled = parse_train(j.at("unrolled"), c.attack_cfg.unrolled, "unrolled");
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path.string() + ": " + e.what());
    }
    return parse_config(j, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
    return json{{"dataset", c.dataset.string()},
                {"model", to_string(c.arch)},
                {"defense", to_string(c.defense)},
                {"jaccard_threshold", c.jaccard_threshold},
                {"purify_before_attack", c.purify_before_attack},
                {"mode", to_string(c.mode)},
                {"attack", to_string(c.attack)},
                {"budget_fraction", c.budget_fraction},
                {"alpha", c.attack_cfg.alpha},
                {"inner_iterations", c.attack_cfg.inner_iterations},
                {"block_size", c.attack_cfg.block_size},
                {"iterations", c.attack_cfg.iterations},
                {"seeds", c.seeds},
                {"label_source", to_string(c.label_source)},
                {"white_box", c.white_box},
                {"record_runtime", c.record_runtime},
                {"output_dir", c.output_dir.string()},
                {"labeled_per_class", c.labeled_per_class},
                {"test_fraction", c.test_fraction},
                {"model_options",
                 {{"hidden", c.hidden}, {"heads", c.heads}, {"hops", c.hops}, {"alpha", c.teleport}, {"dropout", c.dropout}}},
                {"attack_options",
                 {{"base_lr", c.attack_cfg.base_lr},
                  {"final_samples", c.attack_cfg.final_samples},
                  {"keep_threshold", c.attack_cfg.keep_threshold},
                  {"projection_tol", c.attack_cfg.projection_tol},
                  {"evasion_loss", to_string(c.attack_cfg.evasion_loss)},
                  {"poisoning_loss", to_string(c.attack_cfg.poisoning_loss)}}},
                {"victim", train_json(c.victim)},
                {"surrogate", train_json(c.attack_cfg.surrogate)},
                {"unrolled", train_json(c.attack_cfg.unrolled)}};
}

// ---------------------------------------------------------------------------

std::pair<double, double> mean_and_se(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double k = static_cast<double>(xs.size());
    return {mean, std::sqrt(ss / (k - 1.0)) / std::sqrt(k)};
}

SeedResult run_seed(const ExperimentConfig& cfg, const Graph& dataset, std::uint64_t seed,
                    std::vector<FlipRecord>* flips) {
    const auto start = std::chrono::steady_clock::now();
    const bool purify = cfg.defense == Defense::jaccard;
    auto defend = [&](const Graph& h) { return purify ? jaccard_purify(h, cfg.jaccard_threshold) : h; };
    const Graph g = cfg.purify_before_attack && purify ? defend(dataset) : dataset;

    const std::uint64_t victim_seed = derive_seed(seed, kVictimStream);
    const std::uint64_t attack_seed = derive_seed(seed, kAttackStream);
    const std::uint64_t surrogate_seed = cfg.white_box ? victim_seed : derive_seed(seed, kSurrogateStream);
    const Splits splits = make_splits(g, cfg.labeled_per_class, cfg.test_fraction, cfg.mode, derive_seed(seed, kSplitStream));
    const ModelSpec spec = cfg.model_spec(g);

    SeedResult r;
    r.seed = seed;
    const Graph defended = defend(g);
    const ModelParams victim = train_victim(spec, defended, splits, cfg.victim, victim_seed);
    r.clean_acc = accuracy(victim, defended, splits.test);
    r.perturbed_acc = r.clean_acc;

    if (cfg.attack != AttackKind::clean) {
        r.budget = budget_from_fraction(g, cfg.budget_fraction);
        // The attacker's copy of the graph; with self-training its unlabeled
        // nodes carry surrogate predictions instead of ground truth.
        Graph attacker = g;
        std::optional<ModelParams> surrogate;
        auto clean_surrogate = [&]() -> const ModelParams& {
            if (!surrogate) surrogate = train_victim(spec, g, splits, cfg.attack_cfg.surrogate, surrogate_seed);
            return *surrogate;
        };
        if (cfg.label_source == LabelSource::self_train) {
            const Tensor logits = predict_logits(clean_surrogate(), g);
            std::vector<NodeId> all(g.num_nodes);
            for (NodeId v = 0; v < g.num_nodes; ++v) all[v] = v;
            const std::vector<int> pseudo = argmax_rows(logits, all);
            std::vector<bool> labeled(g.num_nodes, false);
            for (NodeId v : splits.labeled_train) labeled[v] = true;
            for (NodeId v = 0; v < g.num_nodes; ++v) {
                if (!labeled[v]) attacker.labels[v] = pseudo[v];
            }
        }

        Graph poisoned = g;
        EdgeFlipSet poison, evasion;
        switch (cfg.attack) {
            case AttackKind::evasion: {
                const ModelParams& target = cfg.white_box && !purify ? victim : clean_surrogate();
                evasion = evasion_attack(target, attacker, splits, r.budget, cfg.attack_cfg, attack_seed);
                break;
            }
            case AttackKind::poisoning:
                poison = poison_attack(spec, attacker, splits, r.budget, cfg.attack_cfg, attack_seed);
                break;
            case AttackKind::sequential:
            case AttackKind::joint: {
                const SymbioticFlips s =
                    cfg.attack == AttackKind::sequential
                        ? sequential_attack(spec, attacker, splits, r.budget, cfg.attack_cfg, attack_seed, surrogate_seed)
                        : joint_attack(spec, attacker, splits, r.budget, cfg.attack_cfg, attack_seed, surrogate_seed);
                poison = s.poison;
                evasion = s.evasion;
                break;
            }
            case AttackKind::clean: break;
        }
        r.poison_flips = poison.size();
        r.evasion_flips = evasion.size();

        ModelParams model = victim;
        if (!poison.empty()) {
            poisoned = apply_flips(g, poison);
            model = train_victim(spec, defend(poisoned), splits, cfg.victim, victim_seed);
        }
        const Graph received = defend(apply_flips(poisoned, evasion));
        r.perturbed_acc = accuracy(model, received, splits.test);

        if (flips) {
            std::size_t poison_budget = 0;
            if (cfg.attack == AttackKind::poisoning) poison_budget = r.budget;
            if (cfg.attack == AttackKind::sequential || cfg.attack == AttackKind::joint) {
                poison_budget = poison_share(r.budget, cfg.attack_cfg.alpha);
            }
            if (cfg.attack != AttackKind::evasion) flips->push_back({"poison", poison_budget, seed, poison});
            if (cfg.attack != AttackKind::poisoning) flips->push_back({"evasion", r.budget - poison_budget, seed, evasion});
        }
    }
    r.runtime_s = cfg.record_runtime
                      ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
                      : 0.0;
    return r;
}

AttackReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    AttackReport report;
    report.config = cfg;
    const Graph g = load_dataset(cfg.dataset);
    report.dataset_name = g.name.empty() ? cfg.dataset.filename().string() : g.name;

    const std::size_t k = cfg.seeds.size();
    std::vector<std::optional<SeedResult>> results(k);
    std::vector<std::string> errors(k);
    parallel_for(k, worker_count(), [&](std::size_t i) {
        try {
            std::vector<FlipRecord> flips;
            SeedResult r = run_seed(cfg, g, cfg.seeds[i], &flips);
            if (!cfg.output_dir.empty() && !flips.empty()) {
                r.flips_file = "flips/" + std::to_string(cfg.seeds[i]) + ".csv";
                std::ostringstream out;
                write_flips(out, flips);
                write_file_atomic(cfg.output_dir / r.flips_file, out.str());
            }
            results[i] = std::move(r);
        } catch (const std::exception& e) {
            errors[i] = "seed " + std::to_string(cfg.seeds[i]) + ": " + e.what();
        }
    });

    std::vector<double> perturbed, clean;
    for (std::size_t i = 0; i < k; ++i) {
        if (results[i]) {
            perturbed.push_back(results[i]->perturbed_acc);
            clean.push_back(results[i]->clean_acc);
            report.rows.push_back(*results[i]);
        } else if (!report.failed) {
            report.failed = true;
            report.failure = errors[i];
        }
    }
    std::tie(report.mean_acc, report.se_acc) = mean_and_se(perturbed);
    std::tie(report.clean_mean, report.clean_se) = mean_and_se(clean);
    report.runtime_s =
        cfg.record_runtime ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() : 0.0;
    return report;
}

std::string to_string(SweepParam p) {
    switch (p) {
        case SweepParam::budget_fraction: return "budget_fraction";
        case SweepParam::block_size: return "block_size";
        case SweepParam::test_fraction: return "test_fraction";
        case SweepParam::inner_iterations: return "inner_iterations";
    }
    return "?";
}

SweepParam sweep_param_from_string(const std::string& s) {
    for (auto p : {SweepParam::budget_fraction, SweepParam::block_size, SweepParam::test_fraction,
                   SweepParam::inner_iterations}) {
        if (to_string(p) == s) return p;
    }
    throw std::invalid_argument("unknown sweep parameter: " + s);
}

SweepResult run_sweep(const ExperimentConfig& cfg, SweepParam param, const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("run_sweep: no values");
    const bool attacks = cfg.attack != AttackKind::clean;
    if ((param == SweepParam::budget_fraction || param == SweepParam::block_size) && !attacks) {
        throw std::invalid_argument("run_sweep: " + to_string(param) + " does not apply to the clean pipeline");
    }
    if (param == SweepParam::inner_iterations && cfg.attack != AttackKind::joint) {
        throw std::invalid_argument("run_sweep: inner_iterations applies only to the joint attack");
    }
    SweepResult out{param, values, {}};
    for (double v : values) {
        ExperimentConfig c = cfg;
        auto as_count = [&](const char* what) {
            if (v < 0.0 || v != std::floor(v)) throw std::invalid_argument(std::string("run_sweep: ") + what + " must be a count");
            return static_cast<std::size_t>(v);
        };
        switch (param) {
            case SweepParam::budget_fraction: c.budget_fraction = v; break;
            case SweepParam::block_size: c.attack_cfg.block_size = as_count("block_size"); break;
            case SweepParam::test_fraction: c.test_fraction = v; break;
            case SweepParam::inner_iterations: c.attack_cfg.inner_iterations = as_count("inner_iterations"); break;
        }
        if (!cfg.output_dir.empty()) c.output_dir = cfg.output_dir / (to_string(param) + "=" + fmt(v, 4));
        out.reports.push_back(run_experiment(c));
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

const char* kHeader = "model,dataset,defense,mode,attack,budget,mean_acc,se_acc,seeds,runtime_s,row,seed,clean_acc,clean_se,num_flips";

std::vector<std::string> csv_rows(const AttackReport& r) {
    const ExperimentConfig& c = r.config;
    const std::string prefix = to_string(c.arch) + "," + r.dataset_name + "," + to_string(c.defense) + "," +
                               to_string(c.mode) + "," + to_string(c.attack) + "," + fmt(c.budget_fraction, 4) + ",";
    std::vector<std::string> rows;
    std::size_t flips = 0;
    for (const auto& s : r.rows) flips += s.poison_flips + s.evasion_flips;
    rows.push_back(prefix + fmt(r.mean_acc) + "," + fmt(r.se_acc) + "," + std::to_string(r.rows.size()) + "," +
                   fmt(r.runtime_s, 3) + "," + (r.failed ? "failed" : "summary") + ",," + fmt(r.clean_mean) + "," +
                   fmt(r.clean_se) + "," + std::to_string(flips));
    for (const auto& s : r.rows) {
        rows.push_back(prefix + fmt(s.perturbed_acc) + "," + fmt(0.0) + ",1," + fmt(s.runtime_s, 3) + ",seed," +
                       std::to_string(s.seed) + "," + fmt(s.clean_acc) + "," + fmt(0.0) + "," +
                       std::to_string(s.poison_flips + s.evasion_flips));
    }
    return rows;
}

}  // namespace

std::string report_csv(const AttackReport& report) {
    std::string out = std::string(kHeader) + "\n";
    for (const auto& row : csv_rows(report)) out += row + "\n";
    return out;
}

json report_json(const AttackReport& r) {
    json rows = json::array();
    for (const auto& s : r.rows) {
        rows.push_back({{"seed", s.seed},
                        {"budget", s.budget},
                        {"clean_acc", s.clean_acc},
                        {"perturbed_acc", s.perturbed_acc},
                        {"poison_flips", s.poison_flips},
                        {"evasion_flips", s.evasion_flips},
                        {"runtime_s", s.runtime_s},
                        {"flips_file", s.flips_file}});
    }
    return json{{"model", to_string(r.config.arch)},
                {"dataset", r.dataset_name},
                {"defense", to_string(r.config.defense)},
                {"mode", to_string(r.config.mode)},
                {"attack", to_string(r.config.attack)},
                {"budget", r.config.budget_fraction},
                {"mean_acc", r.mean_acc},
                {"se_acc", r.se_acc},
                {"seeds", r.rows.size()},
                {"runtime_s", r.runtime_s},
                {"clean_acc", r.clean_mean},
                {"clean_se", r.clean_se},
                {"failed", r.failed},
                {"failure", r.failure},
                {"rows", rows},
                {"config", to_json(r.config)}};
}

AttackReport report_from_json(const json& j) {
    AttackReport r;
    r.config = parse_config(j.at("config"));
    r.dataset_name = j.at("dataset").get<std::string>();
    r.mean_acc = j.at("mean_acc").get<double>();
    r.se_acc = j.at("se_acc").get<double>();
    r.runtime_s = j.at("runtime_s").get<double>();
    r.clean_mean = j.at("clean_acc").get<double>();
    r.clean_se = j.at("clean_se").get<double>();
    r.failed = j.at("failed").get<bool>();
    r.failure = j.at("failure").get<std::string>();
    for (const auto& row : j.at("rows")) {
        SeedResult s;
        s.seed = row.at("seed").get<std::uint64_t>();
        s.budget = row.at("budget").get<std::size_t>();
        s.clean_acc = row.at("clean_acc").get<double>();
        s.perturbed_acc = row.at("perturbed_acc").get<double>();
        s.poison_flips = row.at("poison_flips").get<std::size_t>();
        s.evasion_flips = row.at("evasion_flips").get<std::size_t>();
        s.runtime_s = row.at("runtime_s").get<double>();
        s.flips_file = row.at("flips_file").get<std::string>();
        r.rows.push_back(std::move(s));
    }
    return r;
}

void emit_report(const AttackReport& report, ReportFormat format, const fs::path& path) {
    write_file_atomic(path, format == ReportFormat::csv ? report_csv(report) : report_json(report).dump(2) + "\n");
}

std::string sweep_csv(const SweepResult& sweep) {
    std::string out = "parameter,value," + std::string(kHeader) + "\n";
    for (std::size_t i = 0; i < sweep.reports.size(); ++i) {
        const std::string lead = to_string(sweep.param) + "," + fmt(sweep.values[i], 4) + ",";
        for (const auto& row : csv_rows(sweep.reports[i])) out += lead + row + "\n";
    }
    return out;
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << contents;
        out.flush();
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

}  // namespace symbiotic
