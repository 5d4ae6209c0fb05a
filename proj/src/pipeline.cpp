#include "dtx/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "dtx/errors.hpp"
#include "dtx/parallel.hpp"

namespace dtx {

// ---------------------------------------------------------------------------
// Folds

double partition_sse(std::span<const FoldTally> folds) {
    if (folds.size() != kFoldCount) throw std::invalid_argument("partition_sse: expected five folds");
    std::size_t tutors = 0;
    std::size_t students = 0;
    for (const auto& f : folds) {
        if (f.tutors == 0) return std::numeric_limits<double>::infinity();
        tutors += f.tutors;
        students += f.students;
    }
    if (students == 0) return std::numeric_limits<double>::infinity();
    constexpr double target = 1.0 / static_cast<double>(kFoldCount);
    double sse = 0.0;
    for (const auto& f : folds) {
        const double s = static_cast<double>(f.students) / static_cast<double>(students) - target;
        const double t = static_cast<double>(f.tutors) / static_cast<double>(tutors) - target;
        sse += s * s + t * t;
    }
    return sse;
}

namespace {

/// Students per tutor, in cohort.tutors() order.
std::vector<std::size_t> students_per_tutor(const Cohort& cohort) {
    std::map<std::string, std::size_t> count;
    for (const auto& s : cohort.students()) ++count[cohort.tutor_of().at(s)];
    std::vector<std::size_t> out;
    out.reserve(cohort.tutors().size());
    for (const auto& t : cohort.tutors()) out.push_back(count[t]);
    return out;
}

std::vector<FoldTally> tally(std::span<const std::size_t> per_tutor, std::span<const int> fold_of_tutor) {
    if (fold_of_tutor.size() != per_tutor.size()) {
        throw std::invalid_argument("fold assignment does not cover every tutor");
    }
    std::vector<FoldTally> folds(kFoldCount);
    for (std::size_t i = 0; i < per_tutor.size(); ++i) {
        const int f = fold_of_tutor[i];
        if (f < 0 || f >= static_cast<int>(kFoldCount)) throw std::invalid_argument("fold index out of range");
        folds[static_cast<std::size_t>(f)].tutors += 1;
        folds[static_cast<std::size_t>(f)].students += per_tutor[i];
    }
    return folds;
}

}  // namespace

std::vector<FoldTally> tally_folds(const Cohort& cohort, std::span<const int> fold_of_tutor) {
    return tally(students_per_tutor(cohort), fold_of_tutor);
}

double partition_sse(std::span<const int> fold_of_tutor, const Cohort& cohort) {
    return partition_sse(tally_folds(cohort, fold_of_tutor));
}

FoldPlan make_fold_plan(const Cohort& cohort, std::span<const int> fold_of_tutor) {
    FoldPlan plan;
    plan.fold_of_tutor.assign(fold_of_tutor.begin(), fold_of_tutor.end());
    plan.sse = partition_sse(fold_of_tutor, cohort);
    std::map<std::string, int> fold_of;
    std::size_t i = 0;
    for (const auto& t : cohort.tutors()) {
        fold_of[t] = fold_of_tutor[i++];
        plan.folds[static_cast<std::size_t>(fold_of[t])].tutors.push_back(t);
    }
    for (const auto& s : cohort.students()) {
        plan.folds[static_cast<std::size_t>(fold_of.at(cohort.tutor_of().at(s)))].students.push_back(s);
    }
    const auto& periods = cohort.periods();
    for (std::size_t r = 0; r < periods.size(); ++r) {
        plan.folds[static_cast<std::size_t>(fold_of.at(periods[r].tutor_id))].periods.push_back(r);
    }
    return plan;
}

FoldPlan search_fold_plan(const Cohort& cohort, std::size_t n_candidates, Rng& rng) {
    const std::size_t n_tutors = cohort.tutors().size();
    if (n_tutors < kFoldCount) {
        throw DegenerateDataError("fold search needs at least 5 tutors, cohort has " +
                                  std::to_string(n_tutors));
    }
    if (n_candidates == 0) throw std::invalid_argument("fold search needs at least one candidate");
    const auto per_tutor = students_per_tutor(cohort);
    std::vector<int> candidate(n_tutors);
    std::vector<int> best;
    double best_sse = std::numeric_limits<double>::infinity();
    std::size_t best_index = 0;
    for (std::size_t c = 0; c < n_candidates; ++c) {
        for (auto& f : candidate) f = static_cast<int>(rng.index(kFoldCount));
        const double sse = partition_sse(tally(per_tutor, candidate));
        if (sse < best_sse) {
            best_sse = sse;
            best = candidate;
            best_index = c;
        }
    }
    if (best.empty()) throw DegenerateDataError("fold search found no partition with five non-empty folds");
    auto plan = make_fold_plan(cohort, best);
    plan.candidate_index = best_index;
    return plan;
}

std::array<FoldAssignment, kFoldCount> nested_cv_assignments(const FoldPlan&, Rng& rng) {
    std::array<FoldAssignment, kFoldCount> out;
    for (int k = 0; k < static_cast<int>(kFoldCount); ++k) {
        std::vector<int> others;
        for (int f = 0; f < static_cast<int>(kFoldCount); ++f) {
            if (f != k) others.push_back(f);
        }
        const auto v = static_cast<std::size_t>(rng.index(others.size()));
        out[static_cast<std::size_t>(k)].test = k;
        out[static_cast<std::size_t>(k)].validation = others[v];
        others.erase(others.begin() + static_cast<std::ptrdiff_t>(v));
        std::copy(others.begin(), others.end(), out[static_cast<std::size_t>(k)].training.begin());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Extraction

namespace {

/// Agreement of every member with the majority vote on `rows`.
std::vector<double> member_agreements(const Forest& forest, const FeatureMatrix& rows) {
    const std::size_t n = rows.rows();
    const std::size_t m = forest.size();
    if (n == 0) throw std::invalid_argument("agreement needs at least one row");
    std::vector<std::uint8_t> votes(n * m);
    std::vector<int> high(n, 0);
    for (std::size_t i = 0; i < m; ++i) {
        const auto labels = forest.members()[i].predict_labels(rows);
        for (std::size_t r = 0; r < n; ++r) {
            const bool h = labels[r] == Label::high;
            votes[i * n + r] = h ? 1 : 0;
            high[r] += h ? 1 : 0;
        }
    }
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t same = 0;
        for (std::size_t r = 0; r < n; ++r) {
            const bool majority = 2 * static_cast<std::size_t>(high[r]) > m;
            same += (votes[i * n + r] == 1) == majority ? 1 : 0;
        }
        out[i] = static_cast<double>(same) / static_cast<double>(n);
    }
    return out;
}

}  // namespace

double agreement(const DecisionTree& tree, const Forest& forest, const FeatureMatrix& rows) {
    if (rows.rows() == 0) throw std::invalid_argument("agreement needs at least one row");
    std::size_t same = 0;
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        same += tree.predict_label(rows, r) == majority_vote(forest, rows, r) ? 1 : 0;
    }
    return static_cast<double>(same) / static_cast<double>(rows.rows());
}

Extraction extract_best_tree(const Forest& forest, const FeatureMatrix& rows) {
    const auto scores = member_agreements(forest, rows);
    Extraction best{0, scores[0]};
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > best.agreement) best = {i, scores[i]};
    }
    return best;
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<double> default_score_thresholds() {
    std::vector<double> out;
    for (int t = 15; t <= 24; ++t) out.push_back(t);
    return out;
}

std::vector<double> default_change_thresholds() { return {2.0, 2.5, 3.0, 3.5}; }

void validate(const SweepConfig& config) {
    if (config.n_seeds < 1) throw ConfigError("n_seeds must be at least 1");
    if (config.fold_candidates < 1) throw ConfigError("fold_candidates must be at least 1");
    for (double t : config.thresholds) {
        if (!std::isfinite(t)) throw ConfigError("thresholds must be finite");
    }
    if (config.forest.tree.task != Task::classification) {
        throw ConfigError("the sweep forest must be a classifier");
    }
    try {
        validate(config.forest);
        validate(config.plain_tree);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

std::vector<double> resolve_thresholds(const SweepConfig& config, OutcomeKind kind) {
    if (!config.thresholds.empty()) return config.thresholds;
    return kind == OutcomeKind::score ? default_score_thresholds() : default_change_thresholds();
}

std::uint64_t sweep_forest_seed(std::uint64_t master_seed, std::uint64_t index) {
    return derive_seed(derive_seed(master_seed, streams::forest), index);
}

std::string_view to_string(OutcomeKind kind) { return kind == OutcomeKind::score ? "score" : "change"; }

std::string_view to_string(AgreementSet set) {
    return set == AgreementSet::training ? "training" : "validation";
}

namespace {

struct Split {
    FoldAssignment assignment;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> val_rows;
    std::vector<std::size_t> test_rows;
    FeatureMatrix x_train;
    FeatureMatrix x_val;
    FeatureMatrix x_test;
    std::vector<double> y_train;
    std::vector<double> y_val;
    std::vector<double> y_test;
    PresortedColumns presorted;
};

struct Design {
    FoldPlan plan;
    std::array<FoldAssignment, kFoldCount> assignments;
};

Design make_design(const Cohort& cohort, const SweepConfig& config) {
    Design d;
    Rng fold_rng(derive_seed(config.master_seed, streams::fold_search));
    d.plan = search_fold_plan(cohort, config.fold_candidates, fold_rng);
    Rng cv_rng(derive_seed(config.master_seed, streams::nested_cv));
    d.assignments = nested_cv_assignments(d.plan, cv_rng);
    return d;
}

Split make_split(const Cohort& cohort, const FoldPlan& plan, const FoldAssignment& a,
                 std::span<const int> ids, FeatureAccessLog* tracer) {
    Split s;
    s.assignment = a;
    for (int f : a.training) {
        const auto& p = plan.folds[static_cast<std::size_t>(f)].periods;
        s.train_rows.insert(s.train_rows.end(), p.begin(), p.end());
    }
    std::sort(s.train_rows.begin(), s.train_rows.end());
    s.val_rows = plan.folds[static_cast<std::size_t>(a.validation)].periods;
    s.test_rows = plan.folds[static_cast<std::size_t>(a.test)].periods;
    s.x_train = cohort.features(s.train_rows, ids, tracer);
    s.x_val = cohort.features(s.val_rows, ids, tracer);
    s.x_test = cohort.features(s.test_rows, ids, tracer);
    s.y_train = cohort.outcomes(s.train_rows);
    s.y_val = cohort.outcomes(s.val_rows);
    s.y_test = cohort.outcomes(s.test_rows);
    s.presorted = PresortedColumns(s.x_train);
    return s;
}

bool single_class(std::span<const Label> labels) {
    const auto high = std::count(labels.begin(), labels.end(), Label::high);
    return high == 0 || static_cast<std::size_t>(high) == labels.size();
}

struct ThresholdLabels {
    double threshold = 0.0;
    std::vector<Label> train;
    std::vector<Label> val;
    std::vector<Label> test;
};

struct Candidate {
    double val_auc = 0.0;
    double ensemble_val_auc = 0.0;
    std::size_t member = 0;
    double agreement = 0.0;
};

struct FoldSweep {
    std::vector<ThresholdLabels> usable;
    std::vector<double> skipped;
    // usable.size() x n_seeds, threshold-major
    std::vector<Candidate> grid;
};

ForestParams seeded(const SweepConfig& config, std::uint64_t seed_index) {
    ForestParams p = config.forest;
    p.seed = sweep_forest_seed(config.master_seed, seed_index);
    return p;
}

Forest fit_candidate(const Split& s, std::span<const Label> labels, const ForestParams& params) {
    return fit_forest(s.x_train, labels, s.y_train, params,
                      {.record_bootstrap = false, .presorted = &s.presorted});
}

FoldSweep sweep_fold(const Split& s, const SweepConfig& config, std::span<const double> thresholds,
                     bool with_ensemble) {
    FoldSweep out;
    for (double t : thresholds) {
        ThresholdLabels tl{t, binarize_outcomes(s.y_train, t), binarize_outcomes(s.y_val, t),
                           binarize_outcomes(s.y_test, t)};
        if (single_class(tl.train) || single_class(tl.val)) {
            out.skipped.push_back(t);
            continue;
        }
        out.usable.push_back(std::move(tl));
    }
    if (out.usable.empty()) {
        throw DegenerateDataError("every threshold is degenerate on the training or validation rows of fold " +
                                  std::to_string(s.assignment.test));
    }
    const std::size_t n_seeds = config.n_seeds;
    out.grid.resize(out.usable.size() * n_seeds);
    parallel_for(out.grid.size(), config.jobs, [&](std::size_t k) {
        const auto& tl = out.usable[k / n_seeds];
        const std::size_t seed_index = k % n_seeds;
        const Forest forest = fit_candidate(s, tl.train, seeded(config, seed_index));
        const bool on_training = config.agreement_set == AgreementSet::training;
        const auto extraction = extract_best_tree(forest, on_training ? s.x_train : s.x_val);
        Candidate c;
        c.member = extraction.member_index;
        c.agreement = extraction.agreement;
        c.val_auc = roc_auc(forest.members()[c.member].predict_proba(s.x_val), tl.val);
        if (with_ensemble) c.ensemble_val_auc = roc_auc(ensemble_proba(forest, s.x_val), tl.val);
        out.grid[k] = c;
    });
    return out;
}

/// (threshold slot, seed index) of the best candidate: ties go to the lower
/// seed, then the lower threshold.
template <class Score>
std::pair<std::size_t, std::size_t> argmax(const FoldSweep& sweep, std::size_t n_seeds, Score score) {
    std::pair<std::size_t, std::size_t> best{0, 0};
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t seed = 0; seed < n_seeds; ++seed) {
        for (std::size_t t = 0; t < sweep.usable.size(); ++t) {
            const double v = score(sweep.grid[t * n_seeds + seed]);
            if (v > best_score) {
                best_score = v;
                best = {t, seed};
            }
        }
    }
    return best;
}

double test_auc(std::span<const double> scores, std::span<const Label> labels, int fold) {
    if (single_class(labels)) {
        throw DegenerateDataError("test fold " + std::to_string(fold) +
                                  " holds a single class at the winning threshold");
    }
    return roc_auc(scores, labels);
}

FoldResult extracted_result(const Split& s, const SweepConfig& config, const FoldSweep& sweep) {
    const auto [t, seed] = argmax(sweep, config.n_seeds, [](const Candidate& c) { return c.val_auc; });
    const auto& tl = sweep.usable[t];
    const auto& c = sweep.grid[t * config.n_seeds + seed];
    const auto params = seeded(config, seed);
    const Forest forest = fit_candidate(s, tl.train, params);

    FoldResult r;
    r.assignment = s.assignment;
    r.n_training = s.train_rows.size();
    r.n_validation = s.val_rows.size();
    r.n_test = s.test_rows.size();
    r.skipped_thresholds = sweep.skipped;
    r.winner.tree = forest.members()[c.member];
    r.winner.fold = s.assignment.test;
    r.winner.threshold = tl.threshold;
    r.winner.seed_index = seed;
    r.winner.forest_seed = params.seed;
    r.winner.member_index = c.member;
    r.winner.agreement = c.agreement;
    r.winner.validation_auc = c.val_auc;
    r.test_auc = test_auc(r.winner.tree.predict_proba(s.x_test), tl.test, s.assignment.test);
    return r;
}

double ensemble_test_auc(const Split& s, const SweepConfig& config, const FoldSweep& sweep) {
    const auto [t, seed] =
        argmax(sweep, config.n_seeds, [](const Candidate& c) { return c.ensemble_val_auc; });
    const auto& tl = sweep.usable[t];
    const Forest forest = fit_candidate(s, tl.train, seeded(config, seed));
    return test_auc(ensemble_proba(forest, s.x_test), tl.test, s.assignment.test);
}

double plain_tree_test_auc(const Split& s, const SweepConfig& config, std::span<const double> thresholds) {
    TreeParams params = config.plain_tree;
    params.task = Task::classification;
    std::optional<DecisionTree> best;
    std::vector<Label> best_test;
    double best_auc = -std::numeric_limits<double>::infinity();
    for (double t : thresholds) {
        const auto train = binarize_outcomes(s.y_train, t);
        const auto val = binarize_outcomes(s.y_val, t);
        if (single_class(train) || single_class(val)) continue;
        Rng rng(derive_seed(config.master_seed, static_cast<std::uint64_t>(std::llround(t * 1000))));
        auto tree = fit_tree(s.x_train, train, s.y_train, params, rng);
        const double auc = roc_auc(tree.predict_proba(s.x_val), val);
        if (auc > best_auc) {
            best_auc = auc;
            best = std::move(tree);
            best_test = binarize_outcomes(s.y_test, t);
        }
    }
    if (!best) {
        throw DegenerateDataError("every threshold is degenerate for fold " +
                                  std::to_string(s.assignment.test));
    }
    return test_auc(best->predict_proba(s.x_test), best_test, s.assignment.test);
}

struct RegressorFold {
    double test_auc = 0.0;
    double test_r2 = 0.0;
};

RegressorFold regressor_fold(const Split& s, const SweepConfig& config) {
    ForestParams base = config.forest;
    base.tree.task = Task::regression;
    const std::uint64_t stream = derive_seed(config.master_seed, streams::regressor);
    std::vector<double> val_r2(config.n_seeds);
    parallel_for(config.n_seeds, config.jobs, [&](std::size_t k) {
        ForestParams p = base;
        p.seed = derive_seed(stream, k);
        const Forest f = fit_forest(s.x_train, std::span<const double>(s.y_train), s.y_train, p,
                                    {.record_bootstrap = false, .presorted = &s.presorted});
        val_r2[k] = rfr_r2(f, s.x_val, s.y_val);
    });
    const auto best = static_cast<std::size_t>(
        std::distance(val_r2.begin(), std::max_element(val_r2.begin(), val_r2.end())));
    ForestParams p = base;
    p.seed = derive_seed(stream, best);
    const Forest f = fit_forest(s.x_train, std::span<const double>(s.y_train), s.y_train, p,
                                {.record_bootstrap = false, .presorted = &s.presorted});
    RegressorFold out;
    out.test_r2 = rfr_r2(f, s.x_test, s.y_test);
    out.test_auc = r2_to_auc(out.test_r2);
    return out;
}

double mean(std::span<const double> values) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

MethodResult summarize(std::vector<double> per_fold) {
    MethodResult m;
    m.mean_test_auc = mean(per_fold);
    m.fold_test_auc = std::move(per_fold);
    return m;
}

PipelineReport sweep_report(const Cohort& cohort, const SweepConfig& config, OutcomeKind kind,
                            FeatureAccessLog* tracer) {
    validate(config);
    PipelineReport report;
    report.outcome = kind;
    report.features = config.features;
    report.thresholds = resolve_thresholds(config, kind);
    report.n_seeds = config.n_seeds;
    report.master_seed = config.master_seed;
    report.cohort = {cohort.students().size(), cohort.tutors().size(), cohort.size(),
                     cohort.source_assessments()};

    const auto design = make_design(cohort, config);
    report.fold_tallies = tally_folds(cohort, design.plan.fold_of_tutor);
    report.fold_sse = design.plan.sse;
    const auto ids = feature_ids(config.features);

    for (const auto& a : design.assignments) {
        const auto split = make_split(cohort, design.plan, a, ids, tracer);
        const auto sweep = sweep_fold(split, config, report.thresholds, false);
        report.folds.push_back(extracted_result(split, config, sweep));
        spdlog::info("fold {}: threshold {} seed {} validation AUC {:.4f} test AUC {:.4f}", a.test,
                     report.folds.back().winner.threshold, report.folds.back().winner.seed_index,
                     report.folds.back().winner.validation_auc, report.folds.back().test_auc);
    }
    std::vector<double> aucs;
    for (const auto& f : report.folds) aucs.push_back(f.test_auc);
    report.mean_test_auc = mean(aucs);

    std::size_t best = 0;
    for (std::size_t i = 1; i < report.folds.size(); ++i) {
        if (report.folds[i].test_auc > report.folds[best].test_auc) best = i;
    }
    report.final_model = report.folds[best].winner;
    const auto x_all = cohort.features(ids, tracer);
    const auto y_all = cohort.outcomes();
    const auto labels = binarize_outcomes(y_all, report.final_model.threshold);
    report.whole_dataset_auc = single_class(labels)
                                   ? 0.5
                                   : roc_auc(report.final_model.tree.predict_proba(x_all), labels);
    report.final_model.tree.annotate_raw(x_all, y_all, config.forest.tree.sd_kind);
    return report;
}

}  // namespace

PipelineReport run_sweep(const Cohort& cohort, const SweepConfig& config, FeatureAccessLog* tracer) {
    return sweep_report(cohort, config, OutcomeKind::score, tracer);
}

PipelineReport run_change_pipeline(const Cohort& cohort, const SweepConfig& config) {
    const Cohort changes = compute_score_changes(cohort);
    return sweep_report(changes, config, OutcomeKind::change, nullptr);
}

BaselineRow run_baseline_row(const Cohort& cohort, const SweepConfig& config, OutcomeKind outcome,
                             FeatureAccessLog* tracer) {
    validate(config);
    const auto thresholds = resolve_thresholds(config, outcome);
    const auto design = make_design(cohort, config);
    const auto ids = feature_ids(config.features);

    BaselineRow row;
    row.features = config.features;
    std::vector<double> dt, rfc, rfr, extracted;
    for (const auto& a : design.assignments) {
        const auto split = make_split(cohort, design.plan, a, ids, tracer);
        const auto sweep = sweep_fold(split, config, thresholds, true);
        extracted.push_back(extracted_result(split, config, sweep).test_auc);
        rfc.push_back(ensemble_test_auc(split, config, sweep));
        dt.push_back(plain_tree_test_auc(split, config, thresholds));
        const auto reg = regressor_fold(split, config);
        rfr.push_back(reg.test_auc);
        row.regressor_fold_r2.push_back(reg.test_r2);
    }
    row.decision_tree = summarize(std::move(dt));
    row.random_forest_classifier = summarize(std::move(rfc));
    row.random_forest_regressor = summarize(std::move(rfr));
    row.extracted_tree = summarize(std::move(extracted));
    return row;
}

BaselineTable run_baselines(const Cohort& cohort, const SweepConfig& config, OutcomeKind outcome) {
    BaselineTable table;
    table.outcome = outcome;
    const Cohort changes = outcome == OutcomeKind::change ? compute_score_changes(cohort) : Cohort{};
    const Cohort& source = outcome == OutcomeKind::change ? changes : cohort;
    for (auto set : kAllFeatureSets) {
        SweepConfig c = config;
        c.features = set;
        table.rows.push_back(run_baseline_row(source, c, outcome));
    }
    return table;
}

}  // namespace dtx
