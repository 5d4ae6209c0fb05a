#include "dtx/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "dtx/errors.hpp"
#include "dtx/random.hpp"

namespace dtx {

int PlantedRule::leaf(std::span<const double> x) const {
    if (x.size() < kFeatureCount) throw std::invalid_argument("planted rule needs the full feature vector");
    if (x[root_feature] <= root_threshold) return x[left.feature] <= left.threshold ? 0 : 1;
    return x[right.feature] <= right.threshold ? 2 : 3;
}

double PlantedRule::leaf_mean(int leaf) const {
    switch (leaf) {
        case 0: return left.low_mean;
        case 1: return left.high_mean;
        case 2: return right.low_mean;
        case 3: return right.high_mean;
        default: throw std::out_of_range("planted leaf index must be 0..3");
    }
}

DecisionTree planted_tree(const PlantedRule& rule) {
    auto leaf = [](double mean) {
        TreeNode n;
        n.value = mean;
        n.raw.mean = mean;
        return n;
    };
    auto split = [](int feature, double threshold, int left, int right) {
        TreeNode n;
        n.feature = feature;
        n.threshold = threshold;
        n.left = left;
        n.right = right;
        return n;
    };
    std::vector<TreeNode> nodes{
        split(rule.root_feature, rule.root_threshold, 1, 4),
        split(rule.left.feature, rule.left.threshold, 2, 3),
        leaf(rule.left.low_mean),
        leaf(rule.left.high_mean),
        split(rule.right.feature, rule.right.threshold, 5, 6),
        leaf(rule.right.low_mean),
        leaf(rule.right.high_mean),
    };
    return DecisionTree(Task::classification, std::move(nodes));
}

double structure_recovery_score(const DecisionTree& tree, const PlantedRule& rule, double tolerance) {
    if (tree.empty()) return 0.0;
    auto matches = [&](int index, int feature, double threshold) {
        if (index < 0) return false;
        const auto& n = tree.node(static_cast<std::size_t>(index));
        return !n.is_leaf() && n.feature == feature && std::abs(n.threshold - threshold) <= tolerance;
    };
    const auto& root = tree.root();
    double score = 0.0;
    if (matches(0, rule.root_feature, rule.root_threshold)) score += 1.0;
    if (!root.is_leaf()) {
        if (matches(root.left, rule.left.feature, rule.left.threshold)) score += 1.0;
        if (matches(root.right, rule.right.feature, rule.right.threshold)) score += 1.0;
    }
    return score / 3.0;
}

namespace {

nlohmann::json split_json(const PlantedSplit& s) {
    return {{"feature", std::string(kFeatureNames[static_cast<std::size_t>(s.feature)])},
            {"threshold", s.threshold},
            {"low_mean", s.low_mean},
            {"high_mean", s.high_mean}};
}

int feature_by_name(const std::string& name) {
    for (std::size_t i = 0; i < kFeatureNames.size(); ++i) {
        if (kFeatureNames[i] == name) return static_cast<int>(i);
    }
    throw std::invalid_argument("unknown feature in planted rule: " + name);
}

PlantedSplit split_from_json(const nlohmann::json& doc) {
    return {feature_by_name(doc.at("feature").get<std::string>()), doc.at("threshold").get<double>(),
            doc.at("low_mean").get<double>(), doc.at("high_mean").get<double>()};
}

}  // namespace

nlohmann::json to_json(const PlantedRule& rule) {
    return {{"root",
             {{"feature", std::string(kFeatureNames[static_cast<std::size_t>(rule.root_feature)])},
              {"threshold", rule.root_threshold}}},
            {"left", split_json(rule.left)},
            {"right", split_json(rule.right)}};
}

PlantedRule planted_rule_from_json(const nlohmann::json& doc) {
    PlantedRule rule;
    rule.root_feature = feature_by_name(doc.at("root").at("feature").get<std::string>());
    rule.root_threshold = doc.at("root").at("threshold").get<double>();
    rule.left = split_from_json(doc.at("left"));
    rule.right = split_from_json(doc.at("right"));
    return rule;
}

std::size_t CohortSpec::n_students() const {
    std::size_t n = 0;
    for (const auto& [_, count] : assessment_counts) n += count;
    return n;
}

CohortSpec persistent_effect_spec(std::uint64_t seed) {
    CohortSpec spec;
    spec.seed = seed;
    spec.noise_sd = 1.5;
    spec.student_effect_sd = 2.0;
    spec.growth_per_round = {0.3, 2.5, 0.2, 2.5};
    return spec;
}

namespace {

// Random streams of the generator.
enum : std::uint64_t {
    kStreamStructure = 1,
    kStreamStudents = 2,
    kStreamSessions = 3,
    kStreamIts = 4,
    kStreamScores = 5,
};

// Calendar offsets of the five assessment rounds from the year start, in days.
constexpr std::array<int, kRoundCount> kRoundOffsets{24, 80, 170, 227, 290};
constexpr int kRoundJitterDays = 7;
constexpr double kSessionProbability = 0.42;
constexpr double kGapToThreshold = 0.7;
constexpr double kSnapshotNoise = 0.3;

void check(const CohortSpec& spec) {
    if (spec.n_tutors == 0) throw ConfigError("synthetic cohort needs at least one tutor");
    if (spec.group_size_min < 1 || spec.group_size_max < spec.group_size_min) {
        throw ConfigError("group size range must satisfy 1 <= min <= max");
    }
    const auto span = static_cast<std::size_t>(spec.group_size_max - spec.group_size_min + 1);
    if (spec.group_size_weights.size() != span) {
        throw ConfigError(fmt::format("expected {} group size weights, got {}", span,
                                      spec.group_size_weights.size()));
    }
    double total = 0.0;
    for (double w : spec.group_size_weights) {
        if (!(w >= 0.0)) throw ConfigError("group size weights must be non-negative");
        total += w;
    }
    if (!(total > 0.0)) throw ConfigError("group size weights must not all be zero");
    for (const auto& [count, n] : spec.assessment_counts) {
        if (count < 1 || count > kRoundCount) {
            throw ConfigError(fmt::format("assessment count {} outside 1..{}", count, kRoundCount));
        }
    }
    const std::size_t students = spec.n_students();
    if (students < static_cast<std::size_t>(spec.group_size_min) * spec.n_tutors) {
        throw ConfigError(fmt::format("{} students cannot fill {} tutors with groups of at least {}",
                                      students, spec.n_tutors, spec.group_size_min));
    }
    for (double share : {spec.high_mastery_share, spec.reasoning_high_share, spec.revoicing_high_share}) {
        if (!(share >= 0.0 && share <= 1.0)) throw ConfigError("shares must lie in [0, 1]");
    }
    if (!(spec.noise_sd >= 0.0) || !(spec.student_effect_sd >= 0.0)) {
        throw ConfigError("noise standard deviations must be non-negative");
    }
    for (int leaf = 0; leaf < 4; ++leaf) {
        const double m = spec.planted.leaf_mean(leaf);
        if (m < kMinScore || m > kMaxScore) throw ConfigError("planted leaf means must lie in [0, 30]");
    }
}

/// Group sizes covering exactly n students, each within [min, max].
std::vector<int> draw_group_sizes(const CohortSpec& spec, std::size_t n, Rng& rng) {
    const double total = std::accumulate(spec.group_size_weights.begin(), spec.group_size_weights.end(), 0.0);
    std::vector<int> sizes;
    std::size_t covered = 0;
    while (covered < n) {
        double u = rng.uniform() * total;
        std::size_t k = 0;
        while (k + 1 < spec.group_size_weights.size() && u >= spec.group_size_weights[k]) {
            u -= spec.group_size_weights[k];
            ++k;
        }
        const int size = spec.group_size_min + static_cast<int>(k);
        sizes.push_back(size);
        covered += static_cast<std::size_t>(size);
    }
    // Trim the overshoot, keeping every group at or above the minimum size.
    std::size_t excess = covered - n;
    for (auto it = sizes.rbegin(); it != sizes.rend() && excess > 0; ++it) {
        const auto room = static_cast<std::size_t>(*it - spec.group_size_min);
        const std::size_t cut = std::min(room, excess);
        *it -= static_cast<int>(cut);
        excess -= cut;
    }
    if (excess > 0) throw ConfigError("group sizes cannot cover the student count exactly");
    if (sizes.size() < spec.n_tutors) {
        throw ConfigError(fmt::format("{} groups cannot give each of {} tutors a group", sizes.size(),
                                      spec.n_tutors));
    }
    return sizes;
}

double bimodal_rate(bool high, double threshold, Rng& rng) {
    if (high) return rng.uniform(threshold + kGapToThreshold, threshold + 3.0);
    return rng.uniform(std::max(0.2, threshold - 1.7), threshold - kGapToThreshold);
}

struct Group {
    std::string tutor;
    std::vector<std::size_t> members;
    std::array<double, kTalkMoveCount> rates{};
    std::array<int, kRoundCount> round_jitter{};
};

struct Student {
    std::string id;
    std::size_t group = 0;
    double attendance = 1.0;
    std::array<double, kItsFeatureCount> its_level{};
    std::vector<int> rounds;  // completed rounds, ascending
    double effect = 0.0;
    std::size_t offered = 0;
    std::size_t attended = 0;
};

bool is_weekday(Date d) {
    const std::chrono::weekday wd{d};
    return wd != std::chrono::Saturday && wd != std::chrono::Sunday;
}

}  // namespace

SyntheticCohort generate_cohort(const CohortSpec& spec) {
    check(spec);
    const std::size_t n_students = spec.n_students();
    Rng structure(derive_seed(spec.seed, kStreamStructure));
    Rng student_rng(derive_seed(spec.seed, kStreamStudents));
    Rng session_rng(derive_seed(spec.seed, kStreamSessions));
    Rng its_rng(derive_seed(spec.seed, kStreamIts));
    Rng score_rng(derive_seed(spec.seed, kStreamScores));
    const auto& rule = spec.planted;

    // Tutors and groups.
    const auto sizes = draw_group_sizes(spec, n_students, structure);
    std::vector<std::string> tutors;
    for (std::size_t t = 0; t < spec.n_tutors; ++t) tutors.push_back(fmt::format("T{:02}", t + 1));
    std::vector<Group> groups(sizes.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        groups[g].tutor = g < tutors.size() ? tutors[g] : tutors[structure.index(tutors.size())];
        for (std::size_t m = 0; m < kTalkMoveCount; ++m) groups[g].rates[m] = structure.uniform(0.5, 4.0);
        groups[g].rates[static_cast<std::size_t>(rule.left.feature)] =
            bimodal_rate(structure.bernoulli(spec.reasoning_high_share), rule.left.threshold, structure);
        groups[g].rates[static_cast<std::size_t>(rule.right.feature)] =
            bimodal_rate(structure.bernoulli(spec.revoicing_high_share), rule.right.threshold, structure);
        for (auto& j : groups[g].round_jitter) j = static_cast<int>(structure.index(kRoundJitterDays));
    }

    // Students, in group order so every group is contiguous in id order.
    std::vector<int> counts;
    for (const auto& [count, n] : spec.assessment_counts) counts.insert(counts.end(), n, count);
    student_rng.shuffle(std::span<int>(counts));
    std::vector<Student> students(n_students);
    {
        std::size_t s = 0;
        for (std::size_t g = 0; g < groups.size(); ++g) {
            for (int k = 0; k < sizes[g]; ++k, ++s) {
                auto& st = students[s];
                st.id = fmt::format("S{:04}", s + 1);
                st.group = g;
                groups[g].members.push_back(s);
                st.attendance = student_rng.uniform(0.75, 0.97);
                const bool high_mastery = student_rng.bernoulli(spec.high_mastery_share);
                st.its_level = {
                    student_rng.uniform(0.3, 0.9),
                    high_mastery ? student_rng.uniform(rule.root_threshold - 2.0, rule.root_threshold - 0.4)
                                 : student_rng.uniform(rule.root_threshold + 0.4, rule.root_threshold + 3.0),
                    student_rng.uniform(5.0, 40.0),
                    student_rng.uniform(50.0, 100.0),
                    student_rng.uniform(0.5, 1.0),
                };
                std::array<int, kRoundCount> all{1, 2, 3, 4, 5};
                student_rng.shuffle(std::span<int>(all));
                st.rounds.assign(all.begin(), all.begin() + counts[s]);
                std::sort(st.rounds.begin(), st.rounds.end());
                st.effect = spec.student_effect_sd > 0.0 ? student_rng.normal(0.0, spec.student_effect_sd) : 0.0;
            }
        }
    }

    SyntheticCohort out;
    out.rule = rule;
    RawInputs& inputs = out.inputs;
    const Date last_day = spec.year_start + std::chrono::days{kRoundOffsets.back() + kRoundJitterDays};

    // Sessions: each group meets on a random subset of school days.
    for (const auto& group : groups) {
        for (Date d = spec.year_start; d <= last_day; d += std::chrono::days{1}) {
            if (!is_weekday(d) || !session_rng.bernoulli(kSessionProbability)) continue;
            SessionLog log;
            log.tutor_id = group.tutor;
            log.date = d;
            for (auto s : group.members) {
                auto& st = students[s];
                ++st.offered;
                if (session_rng.bernoulli(st.attendance)) {
                    ++st.attended;
                    log.attendees.push_back(st.id);
                }
            }
            for (std::size_t m = 0; m < kTalkMoveCount; ++m) log.talk_moves[m] = session_rng.poisson(group.rates[m]);
            if (!log.attendees.empty()) inputs.sessions.push_back(std::move(log));
        }
    }

    // Weekly ITS snapshots on Fridays.
    Date first_friday = spec.year_start;
    while (std::chrono::weekday{first_friday} != std::chrono::Friday) first_friday += std::chrono::days{1};
    for (const auto& st : students) {
        for (Date d = first_friday; d <= last_day; d += std::chrono::days{7}) {
            ItsSnapshot snap;
            snap.student_id = st.id;
            snap.date = d;
            snap.mastered_skills_avg = std::clamp(its_rng.normal(st.its_level[0], 0.05), 0.0, 1.0);
            snap.opportunities_avg = std::max(0.0, its_rng.normal(st.its_level[1], kSnapshotNoise));
            snap.workspace_time_avg = std::max(0.0, its_rng.normal(st.its_level[2], 3.0));
            snap.workspace_score_avg = std::clamp(its_rng.normal(st.its_level[3], 4.0), 0.0, 100.0);
            snap.apls_avg = std::clamp(its_rng.normal(st.its_level[4], 0.05), 0.0, 1.0);
            inputs.its.push_back(snap);
        }
    }

    // Assessments with placeholder scores; scores follow once features are known.
    for (const auto& st : students) {
        const auto& group = groups[st.group];
        for (int round : st.rounds) {
            const auto r = static_cast<std::size_t>(round - 1);
            inputs.assessments.push_back(
                {st.id, round, spec.year_start + std::chrono::days{kRoundOffsets[r] + group.round_jitter[r]}, 0});
        }
        const double ratio = st.offered == 0 ? 1.0 : static_cast<double>(st.attended) / static_cast<double>(st.offered);
        inputs.roster.push_back({st.id, group.tutor, ratio});
    }

    AssembleOptions options;
    options.year_start = spec.year_start;
    const Cohort placeholder = assemble_evaluation_periods(inputs, options);

    std::map<std::string, const Student*> by_id;
    for (const auto& st : students) by_id[st.id] = &st;
    std::map<std::pair<std::string, int>, int> score_of;
    std::vector<EvaluationPeriod> periods = placeholder.periods();
    out.planted_leaf.reserve(periods.size());
    for (auto& ep : periods) {
        const int leaf = rule.leaf(ep.features);
        const Student& st = *by_id.at(ep.student_id);
        double score = rule.leaf_mean(leaf) + st.effect +
                       spec.growth_per_round[static_cast<std::size_t>(leaf)] * (ep.round - 3);
        if (spec.noise_sd > 0.0) score += score_rng.normal(0.0, spec.noise_sd);
        score = std::clamp(score, static_cast<double>(kMinScore), static_cast<double>(kMaxScore));
        const int rounded = static_cast<int>(std::lround(score));
        ep.outcome = spec.integer_scores ? rounded : score;
        score_of[{ep.student_id, ep.round}] = rounded;
        out.planted_leaf.push_back(leaf);
    }
    for (auto& a : inputs.assessments) a.score = score_of.at({a.student_id, a.round});

    std::map<std::string, std::string> tutor_of(placeholder.tutor_of().begin(), placeholder.tutor_of().end());
    out.cohort = Cohort(std::move(periods), std::move(tutor_of), placeholder.source_assessments(),
                        placeholder.exclusions());
    return out;
}

void write_synthetic(const SyntheticCohort& synthetic, const std::filesystem::path& dir) {
    write_inputs(synthetic.inputs, dir);
    std::ofstream rule_file(dir / kPlantedRuleFile, std::ios::binary);
    rule_file << to_json(synthetic.rule).dump(2) << '\n';
    if (!rule_file) throw std::runtime_error("cannot write " + (dir / kPlantedRuleFile).string());
    write_cohort_csv(synthetic.cohort, dir / "cohort.csv");
}

}  // namespace dtx
