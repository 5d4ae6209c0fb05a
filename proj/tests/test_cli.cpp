#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "dtx/cli.hpp"
#include "dtx/digest.hpp"

using namespace dtx;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "dtx_cli";

std::string slurp(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::map<std::string, std::string> digests(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = sha256_file(e.path());
    return out;
}

// Small synthetic cohort shared by the tests below.
const fs::path& cohort_dir() {
    static const fs::path dir = [] {
        fs::remove_all(kRoot);
        const auto d = kRoot / "cohort";
        REQUIRE(run_cli({"synth", "--seed", "3", "--tutors", "12", "--out", d.string()}) == 0);
        return d;
    }();
    return dir;
}

int run_quick(const std::string& command, const fs::path& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{command, "--cohort", cohort_dir().string(), "--out", out.string()};
    if (std::find(extra.begin(), extra.end(), "--seeds") == extra.end()) extra.insert(extra.end(), {"--seeds", "2"});
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
}

}  // namespace

TEST_CASE("synth writes the input files and the planted rule") {
    for (const char* f : {"sessions.csv", "its.csv", "assessments.csv", "roster.csv", "planted_rule.json", "cohort.csv"}) {
        CHECK(fs::exists(cohort_dir() / f));
    }
}

TEST_CASE("run is deterministic and replays from its manifest") {
    const auto before = digests(cohort_dir());
    const auto a = kRoot / "run_a";
    const auto b = kRoot / "run_b";
    const auto replay = kRoot / "run_replay";
    REQUIRE(run_quick("run", a, {"--thresholds", "18,20"}) == 0);
    REQUIRE(run_quick("run", b, {"--thresholds", "18,20"}) == 0);
    for (const char* f : {"report.json", "table3.csv", "final_tree.dot", "final_tree.json", "manifest.json"}) {
        CHECK(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    REQUIRE(run_cli({"run", "--cohort", cohort_dir().string(), "--config", (a / "manifest.json").string(), "--out",
                     replay.string()}) == 0);
    for (const char* f : {"report.json", "table3.csv", "final_tree.dot", "final_tree.json"}) {
        CHECK(slurp(a / f) == slurp(replay / f));
    }
    CHECK(digests(cohort_dir()) == before);

    const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
    CHECK(manifest.at("command") == "run");
    CHECK(manifest.at("config").at("n_seeds") == 2);
    CHECK(manifest.at("input").at("files").at("sessions.csv") == sha256_file(cohort_dir() / "sessions.csv"));
}

TEST_CASE("flags override the config file") {
    const auto a = kRoot / "override_a";
    const auto b = kRoot / "override_b";
    REQUIRE(run_quick("run", a, {"--thresholds", "18,20"}) == 0);
    REQUIRE(run_cli({"run", "--cohort", cohort_dir().string(), "--config", (a / "manifest.json").string(), "--seeds", "1",
                     "--out", b.string()}) == 0);
    const auto report = nlohmann::json::parse(slurp(b / "report.json"));
    CHECK(report.at("n_seeds") == 1);
    CHECK(report.at("thresholds") == nlohmann::json::array({18.0, 20.0}));
}

TEST_CASE("thresholds accept ranges and lists") {
    const auto out = kRoot / "range";
    REQUIRE(run_quick("run", out, {"--thresholds", "17:20:1", "--seeds", "1"}) == 0);
    const auto report = nlohmann::json::parse(slurp(out / "report.json"));
    CHECK(report.at("thresholds") == nlohmann::json::array({17.0, 18.0, 19.0, 20.0}));
}

TEST_CASE("feature selection labels the report") {
    const auto out = kRoot / "talk";
    REQUIRE(run_quick("run", out, {"--thresholds", "18,20", "--features", "talk"}) == 0);
    const auto report = nlohmann::json::parse(slurp(out / "report.json"));
    CHECK(report.at("features") == "talk");
    CHECK(slurp(out / "table3.csv").find("score,Tutor Talk Moves,") != std::string::npos);
}

TEST_CASE("baselines write a three-row table with four method columns") {
    const auto out = kRoot / "baselines";
    REQUIRE(run_quick("baselines", out, {"--thresholds", "18,20", "--seeds", "1"}) == 0);
    const auto csv = slurp(out / "table3.csv");
    std::istringstream lines(csv);
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(lines, line)) rows.push_back(line);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "outcome,feature_set,decision_tree,random_forest_classifier,random_forest_regressor,extracted_decision_tree");
    for (const auto& r : rows) CHECK(std::count(r.begin(), r.end(), ',') == 5);
    CHECK(fs::exists(out / "manifest.json"));
}

TEST_CASE("change subcommand uses the change thresholds") {
    const auto out = kRoot / "change";
    REQUIRE(run_quick("change", out, {"--seeds", "1"}) == 0);
    const auto report = nlohmann::json::parse(slurp(out / "report.json"));
    CHECK(report.at("outcome") == "change");
    CHECK(report.at("thresholds") == nlohmann::json::array({2.0, 2.5, 3.0, 3.5}));
}

TEST_CASE("export-tree re-renders a saved model") {
    const auto run = kRoot / "export_src";
    REQUIRE(run_quick("run", run, {"--thresholds", "18,20", "--seeds", "1"}) == 0);
    const auto dot = kRoot / "export.dot";
    REQUIRE(run_cli({"export-tree", "--model", (run / "final_tree.json").string(), "--out", dot.string()}) == 0);
    CHECK(slurp(dot) == slurp(run / "final_tree.dot"));
    const auto from_report = kRoot / "export_report.dot";
    REQUIRE(run_cli({"export-tree", "--model", (run / "report.json").string(), "--out", from_report.string()}) == 0);
    CHECK(slurp(from_report) == slurp(run / "final_tree.dot"));
    const auto json = kRoot / "export.json";
    REQUIRE(run_cli({"export-tree", "--model", (run / "final_tree.json").string(), "--format", "json", "--out",
                     json.string()}) == 0);
    CHECK(nlohmann::json::parse(slurp(json)) == nlohmann::json::parse(slurp(run / "final_tree.json")));
}

TEST_CASE("exit codes") {
    const auto out = (kRoot / "errors").string();
    const auto cohort = cohort_dir().string();
    CHECK(run_cli({"run", "--seeds", "1", "--out", out}) == 2);
    CHECK(run_cli({"run", "--cohort", cohort, "--synth-seed", "1", "--out", out}) == 2);
    CHECK(run_cli({"run", "--cohort", cohort, "--bogus", "--out", out}) == 2);
    CHECK(run_cli({"run", "--cohort", cohort, "--features", "words", "--out", out}) == 2);
    CHECK(run_cli({"run", "--cohort", cohort, "--seeds", "0", "--out", out}) == 2);
    CHECK(run_cli({"run", "--cohort", (kRoot / "absent").string(), "--out", out}) == 2);
    CHECK(run_cli({"run", "--cohort", cohort, "--seeds", "1", "--thresholds", "40", "--out", out}) == 1);
    CHECK(run_cli({"export-tree", "--model", (kRoot / "absent.json").string()}) != 0);
    CHECK(run_cli({}) == 2);

    const auto broken = kRoot / "broken";
    fs::create_directories(broken);
    for (const auto& e : fs::directory_iterator(cohort_dir())) fs::copy_file(e.path(), broken / e.path().filename(), fs::copy_options::overwrite_existing);
    std::ofstream(broken / "assessments.csv", std::ios::app) << "s_x,1,2022-10-01,31\n";
    CHECK(run_cli({"run", "--cohort", broken.string(), "--seeds", "1", "--out", out}) == 1);
}
