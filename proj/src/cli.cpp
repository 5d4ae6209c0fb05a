#include "dtx/cli.hpp"

#include <spdlog/spdlog.h>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "dtx/digest.hpp"
#include "dtx/errors.hpp"
#include "dtx/pipeline.hpp"
#include "dtx/report.hpp"
#include "dtx/synth.hpp"

namespace dtx {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kManifestFile = "manifest.json";

std::vector<double> parse_thresholds(const std::string& text) {
    auto number = [&](const std::string& part) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(part, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != part.size() || part.empty() || !std::isfinite(v)) {
            throw ConfigError("invalid threshold '" + part + "' in --thresholds " + text);
        }
        return v;
    };
    std::vector<std::string> parts;
    const char sep = text.find(':') != std::string::npos ? ':' : ',';
    std::stringstream in(text);
    for (std::string part; std::getline(in, part, sep);) parts.push_back(part);
    if (sep == ':') {
        if (parts.size() != 3) throw ConfigError("--thresholds range must read start:stop:step");
        const double start = number(parts[0]);
        const double stop = number(parts[1]);
        const double step = number(parts[2]);
        if (!(step > 0.0) || stop < start) throw ConfigError("--thresholds range needs step > 0 and stop >= start");
        std::vector<double> out;
        for (std::size_t k = 0;; ++k) {
            const double v = start + static_cast<double>(k) * step;
            if (v > stop + step * 1e-9) break;
            out.push_back(v);
        }
        return out;
    }
    std::vector<double> out;
    for (const auto& p : parts) out.push_back(number(p));
    if (out.empty()) throw ConfigError("--thresholds is empty");
    return out;
}

int parse_mtry(const std::string& text) {
    if (text == "all") return kAllFeatures;
    if (text == "sqrt") return kSqrtFeatures;
    try {
        std::size_t used = 0;
        const int v = std::stoi(text, &used);
        if (used == text.size() && v >= 1) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("--mtry must be 'all', 'sqrt' or a positive integer, got " + text);
}

std::string read_text(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + file.string());
}

nlohmann::json parse_json(const fs::path& file) {
    try {
        return nlohmann::json::parse(read_text(file));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
}

/// Applies the keys of a SweepConfig JSON document (as written by to_json).
void apply_config(const nlohmann::json& doc, SweepConfig& config) {
    try {
        if (doc.contains("thresholds")) config.thresholds = doc["thresholds"].get<std::vector<double>>();
        if (doc.contains("n_seeds")) config.n_seeds = doc["n_seeds"].get<std::size_t>();
        if (doc.contains("master_seed")) config.master_seed = doc["master_seed"].get<std::uint64_t>();
        if (doc.contains("fold_candidates")) config.fold_candidates = doc["fold_candidates"].get<std::size_t>();
        if (doc.contains("features")) config.features = parse_feature_set(doc["features"].get<std::string>());
        if (doc.contains("agreement_set")) {
            const auto set = doc["agreement_set"].get<std::string>();
            if (set != "training" && set != "validation") throw ConfigError("unknown agreement_set " + set);
            config.agreement_set = set == "training" ? AgreementSet::training : AgreementSet::validation;
        }
        if (doc.contains("forest")) {
            const auto& f = doc["forest"];
            auto& t = config.forest.tree;
            config.forest.n_trees = f.value("n_trees", config.forest.n_trees);
            t.max_depth = f.value("max_depth", t.max_depth);
            t.min_leaf = f.value("min_leaf", t.min_leaf);
            t.mtry = f.value("mtry", t.mtry);
            config.forest.bootstrap = f.value("bootstrap", config.forest.bootstrap);
            if (f.contains("sd")) {
                t.sd_kind = f["sd"].get<std::string>() == "population" ? SdKind::population : SdKind::sample;
            }
        }
        if (doc.contains("plain_tree")) {
            const auto& p = doc["plain_tree"];
            config.plain_tree.max_depth = p.value("max_depth", config.plain_tree.max_depth);
            config.plain_tree.min_leaf = p.value("min_leaf", config.plain_tree.min_leaf);
            config.plain_tree.mtry = p.value("mtry", config.plain_tree.mtry);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

struct SweepOptions {
    std::string config_file;
    std::string cohort_dir;
    std::optional<std::uint64_t> synth_seed;
    bool persistent = false;
    std::string thresholds;
    std::size_t seeds = 0;
    int trees = 0;
    int max_depth = 0;
    int min_leaf = 0;
    std::string mtry;
    std::string features;
    std::string agreement;
    std::size_t fold_candidates = 0;
    unsigned jobs = 0;
    std::uint64_t seed = 0;
    std::string out;
};

void add_sweep_options(CLI::App* cmd, SweepOptions& o) {
    cmd->add_option("--config", o.config_file, "JSON sweep config or a previous manifest.json");
    auto* cohort = cmd->add_option("--cohort", o.cohort_dir, "Directory with the input CSVs");
    auto* synth = cmd->add_option("--synth-seed", o.synth_seed, "Generate the default synthetic cohort");
    cohort->excludes(synth);
    cmd->add_flag("--persistent", o.persistent, "With --synth-seed: persistent-effect cohort");
    cmd->add_option("--thresholds", o.thresholds, "start:stop:step or a comma list");
    cmd->add_option("--seeds", o.seeds, "Forest seeds per threshold");
    cmd->add_option("--trees", o.trees, "Trees per forest");
    cmd->add_option("--max-depth", o.max_depth, "Maximum tree depth");
    cmd->add_option("--min-leaf", o.min_leaf, "Minimum rows per leaf");
    cmd->add_option("--mtry", o.mtry, "Features per split: all, sqrt or N");
    cmd->add_option("--features", o.features, "talk, its or combined");
    cmd->add_option("--agreement", o.agreement, "Rows used for extraction: training or validation");
    cmd->add_option("--fold-candidates", o.fold_candidates, "Random fold partitions to search");
    cmd->add_option("--jobs", o.jobs, "Worker threads (0 = all cores)");
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("--out", o.out, "Output directory")->required();
}

SweepConfig build_config(const CLI::App* cmd, const SweepOptions& o) {
    SweepConfig config;
    if (!o.config_file.empty()) {
        const auto doc = parse_json(o.config_file);
        apply_config(doc.contains("config") ? doc["config"] : doc, config);
    }
    auto given = [&](const char* flag) { return cmd->count(flag) > 0; };
    if (given("--thresholds")) config.thresholds = parse_thresholds(o.thresholds);
    if (given("--seeds")) config.n_seeds = o.seeds;
    if (given("--trees")) config.forest.n_trees = o.trees;
    if (given("--max-depth")) config.forest.tree.max_depth = o.max_depth;
    if (given("--min-leaf")) config.forest.tree.min_leaf = o.min_leaf;
    if (given("--mtry")) config.forest.tree.mtry = parse_mtry(o.mtry);
    if (given("--features")) config.features = parse_feature_set(o.features);
    if (given("--agreement")) {
        if (o.agreement != "training" && o.agreement != "validation") {
            throw ConfigError("--agreement must be training or validation");
        }
        config.agreement_set = o.agreement == "training" ? AgreementSet::training : AgreementSet::validation;
    }
    if (given("--fold-candidates")) config.fold_candidates = o.fold_candidates;
    if (given("--seed")) config.master_seed = o.seed;
    config.jobs = o.jobs;
    validate(config);
    return config;
}

struct LoadedCohort {
    Cohort cohort;
    nlohmann::json provenance;
};

LoadedCohort load_cohort(const SweepOptions& o) {
    if (o.cohort_dir.empty() == !o.synth_seed.has_value()) {
        throw ConfigError("exactly one of --cohort or --synth-seed is required");
    }
    if (o.synth_seed) {
        const auto spec = o.persistent ? persistent_effect_spec(*o.synth_seed) : [&] {
            CohortSpec s;
            s.seed = *o.synth_seed;
            return s;
        }();
        return {generate_cohort(spec).cohort, {{"synth_seed", *o.synth_seed}, {"persistent", o.persistent}}};
    }
    const fs::path dir = o.cohort_dir;
    if (!fs::is_directory(dir)) throw ConfigError("cohort directory not found: " + dir.string());
    nlohmann::json files;
    for (auto name : {kSessionsFile, kItsFile, kAssessmentsFile, kRosterFile}) {
        const auto file = dir / name;
        if (!fs::exists(file)) throw ConfigError("missing input file: " + file.string());
        files[std::string(name)] = sha256_file(file);
    }
    return {assemble_evaluation_periods(load_input_dir(dir)), {{"cohort_dir", dir.string()}, {"files", files}}};
}

/// Writes `files` into `dir` and a manifest describing how they were produced.
void emit(const fs::path& dir, const std::string& command, const nlohmann::json& input,
          const nlohmann::json& config, const std::vector<std::pair<std::string, std::string>>& files) {
    fs::create_directories(dir);
    nlohmann::json digests = nlohmann::json::object();
    for (const auto& [name, text] : files) {
        write_file(dir / name, text);
        digests[name] = sha256_hex(text);
    }
    nlohmann::json manifest = {{"tool", "dtextract"},
                               {"command", command},
                               {"input", input},
                               {"config", config},
                               {"outputs", digests}};
    if (config.contains("master_seed")) {
        const auto master = config["master_seed"].get<std::uint64_t>();
        manifest["seeds"] = {{"master", master},
                             {"fold_search", derive_seed(master, streams::fold_search)},
                             {"nested_cv", derive_seed(master, streams::nested_cv)},
                             {"forest_stream", derive_seed(master, streams::forest)},
                             {"regressor_stream", derive_seed(master, streams::regressor)}};
    }
    write_file(dir / kManifestFile, manifest.dump(2) + "\n");
}

std::vector<std::pair<std::string, std::string>> report_files(const PipelineReport& report) {
    const auto names = feature_names();
    return {{"report.json", to_json(report).dump(2) + "\n"},
            {"table3.csv", table3_csv(report)},
            {"final_tree.dot", to_dot(report.final_model.tree, names)},
            {"final_tree.json", to_json(report.final_model.tree, names).dump(2) + "\n"}};
}

int cmd_sweep(const CLI::App* cmd, const SweepOptions& o, OutcomeKind kind) {
    const auto config = build_config(cmd, o);
    const auto loaded = load_cohort(o);
    const auto report = kind == OutcomeKind::score ? run_sweep(loaded.cohort, config)
                                                   : run_change_pipeline(loaded.cohort, config);
    emit(o.out, std::string(kind == OutcomeKind::score ? "run" : "change"), loaded.provenance,
         to_json(config), report_files(report));
    std::cout << fmt::format("mean test AUC {:.4f}, whole-dataset AUC {:.4f}\n", report.mean_test_auc,
                             report.whole_dataset_auc);
    return 0;
}

int cmd_baselines(const CLI::App* cmd, const SweepOptions& o, bool change) {
    const auto config = build_config(cmd, o);
    const auto loaded = load_cohort(o);
    const auto table = run_baselines(loaded.cohort, config, change ? OutcomeKind::change : OutcomeKind::score);
    emit(o.out, "baselines", loaded.provenance, to_json(config),
         {{"baselines.json", to_json(table).dump(2) + "\n"}, {"table3.csv", table3_csv(table)}});
    std::cout << table3_csv(table);
    return 0;
}

struct SynthOptions {
    std::uint64_t seed = 0;
    bool persistent = false;
    std::optional<double> noise_sd;
    std::optional<std::size_t> tutors;
    std::string out;
};

int cmd_synth(const SynthOptions& o) {
    CohortSpec spec = o.persistent ? persistent_effect_spec(o.seed) : CohortSpec{};
    spec.seed = o.seed;
    if (o.noise_sd) spec.noise_sd = *o.noise_sd;
    if (o.tutors) spec.n_tutors = *o.tutors;
    const auto synthetic = generate_cohort(spec);
    write_synthetic(synthetic, o.out);
    nlohmann::json digests = nlohmann::json::object();
    for (auto name : {kSessionsFile, kItsFile, kAssessmentsFile, kRosterFile, kPlantedRuleFile}) {
        digests[std::string(name)] = sha256_file(fs::path(o.out) / name);
    }
    const nlohmann::json manifest = {
        {"tool", "dtextract"},
        {"command", "synth"},
        {"config", {{"seed", o.seed}, {"persistent", o.persistent}, {"noise_sd", spec.noise_sd},
                    {"tutors", spec.n_tutors}}},
        {"outputs", digests}};
    write_file(fs::path(o.out) / kManifestFile, manifest.dump(2) + "\n");
    std::cout << fmt::format("{} students, {} tutors, {} evaluation periods\n", synthetic.cohort.students().size(),
                             synthetic.cohort.tutors().size(), synthetic.cohort.size());
    return 0;
}

struct ExportOptions {
    std::string model;
    std::string format = "dot";
    std::string out;
};

int cmd_export(const ExportOptions& o) {
    auto doc = parse_json(o.model);
    if (doc.contains("final_model")) doc = doc["final_model"]["tree"];
    if (o.format != "dot" && o.format != "json") throw ConfigError("--format must be dot or json");
    const auto names = feature_names();
    DecisionTree tree;
    try {
        tree = tree_from_json(doc, names);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(o.model + ": not a tree document (" + e.what() + ")");
    }
    const auto text = export_tree(tree, names, o.format == "dot" ? ExportFormat::dot : ExportFormat::json);
    if (o.out.empty()) {
        std::cout << text;
    } else {
        write_file(o.out, text);
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Extract interpretable decision trees from random-forest sweeps"};
    app.require_subcommand(1);
    app.fallthrough();
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log progress");

    SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic cohort with a planted rule");
    synth_cmd->add_option("--seed", synth.seed, "Generator seed");
    synth_cmd->add_flag("--persistent", synth.persistent, "Persistent student effects and growth");
    synth_cmd->add_option("--noise-sd", synth.noise_sd, "Score noise standard deviation");
    synth_cmd->add_option("--tutors", synth.tutors, "Number of tutors");
    synth_cmd->add_option("--out", synth.out, "Output directory")->required();

    SweepOptions run;
    auto* run_cmd = app.add_subcommand("run", "Threshold x seed sweep on scores");
    add_sweep_options(run_cmd, run);

    SweepOptions base;
    bool base_change = false;
    auto* base_cmd = app.add_subcommand("baselines", "Compare DT, RFC, RFR and the extracted tree");
    add_sweep_options(base_cmd, base);
    base_cmd->add_flag("--change", base_change, "Use score changes as the outcome");

    SweepOptions change;
    auto* change_cmd = app.add_subcommand("change", "Sweep on score changes between rounds");
    add_sweep_options(change_cmd, change);

    ExportOptions exp;
    auto* export_cmd = app.add_subcommand("export-tree", "Render a saved tree");
    export_cmd->add_option("--model", exp.model, "final_tree.json or report.json")->required();
    export_cmd->add_option("--format", exp.format, "dot or json");
    export_cmd->add_option("--out", exp.out, "Output file (default stdout)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

    try {
        if (*synth_cmd) return cmd_synth(synth);
        if (*run_cmd) return cmd_sweep(run_cmd, run, OutcomeKind::score);
        if (*base_cmd) return cmd_baselines(base_cmd, base, base_change);
        if (*change_cmd) return cmd_sweep(change_cmd, change, OutcomeKind::change);
        if (*export_cmd) return cmd_export(exp);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 1;
    } catch (const DegenerateDataError& e) {
        std::cerr << "degenerate data: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace dtx
