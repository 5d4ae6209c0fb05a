#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dtx {

enum class Label : std::uint8_t { low = 0, high = 1 };

/// Class tallies of a node or branch. Counts may be bootstrap multiplicities.
struct ClassCounts {
    std::int64_t n_high = 0;
    std::int64_t n_low = 0;

    std::int64_t total() const { return n_high + n_low; }
    bool pure() const { return n_high == 0 || n_low == 0; }
    bool operator==(const ClassCounts&) const = default;
};

/// Gini impurity 1 - p_high^2 - p_low^2. Throws std::invalid_argument on an
/// empty node.
double gini(ClassCounts counts);

/// Size-weighted mean of the two children's Gini impurities. Throws when either
/// side is empty, since such a split is not a split.
double weighted_split_gini(ClassCounts left, ClassCounts right);

struct ScoredLabels {
    std::vector<double> scores;
    std::vector<Label> labels;
};

/// Area under the ROC curve: the probability that a random high-labelled item
/// scores above a random low-labelled one, ties counting one half.
/// Throws DegenerateDataError when either class is absent.
double roc_auc(std::span<const double> scores, std::span<const Label> labels);
double roc_auc(const ScoredLabels& data);

enum class SdKind { sample, population };

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

/// Mean and standard deviation. A single value has SD 0 under either kind.
MeanSd mean_sd(std::span<const double> values, SdKind kind = SdKind::sample);

/// Standard normal CDF.
double normal_cdf(double x);

/// Converts a coefficient of determination to an AUC-equivalent through the
/// correlation r = sqrt(R2), Cohen's d = 2r / sqrt(1 - r^2) and
/// AUC = Phi(d / sqrt(2)). Negative R2 is clamped to 0 with a warning; R2 >= 1
/// throws.
double r2_to_auc(double r2);

/// 1 - SS_res / SS_tot. Throws DegenerateDataError when the observed values
/// have zero variance.
double r_squared(std::span<const double> predicted, std::span<const double> observed);

}  // namespace dtx
