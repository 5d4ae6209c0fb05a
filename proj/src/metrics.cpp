#include "dtx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <spdlog/spdlog.h>

#include "dtx/errors.hpp"

namespace dtx {

double gini(ClassCounts counts) {
    if (counts.n_high < 0 || counts.n_low < 0) throw std::invalid_argument("negative class count");
    const auto total = counts.total();
    if (total == 0) throw std::invalid_argument("gini of an empty node");
    // 1 - p_h^2 - p_l^2, written as 2hl / n^2 so swapping the classes is exact.
    const double n = static_cast<double>(total);
    return 2.0 * static_cast<double>(counts.n_high) * static_cast<double>(counts.n_low) / (n * n);
}

double weighted_split_gini(ClassCounts left, ClassCounts right) {
    if (left.total() <= 0 || right.total() <= 0) {
        throw std::invalid_argument("split with an empty side");
    }
    const double n_left = static_cast<double>(left.total());
    const double n_right = static_cast<double>(right.total());
    return (n_left * gini(left) + n_right * gini(right)) / (n_left + n_right);
}

double roc_auc(std::span<const double> scores, std::span<const Label> labels) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("roc_auc: scores and labels differ in length");
    }
    std::int64_t positives = 0;
    for (Label l : labels) positives += l == Label::high ? 1 : 0;
    const std::int64_t negatives = static_cast<std::int64_t>(labels.size()) - positives;
    if (positives == 0 || negatives == 0) {
        throw DegenerateDataError("roc_auc needs both classes (high=" + std::to_string(positives) +
                                  ", low=" + std::to_string(negatives) + ")");
    }
    for (double s : scores) {
        if (std::isnan(s)) throw std::invalid_argument("roc_auc: NaN score");
    }

    std::vector<std::uint32_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(),
              [&](std::uint32_t a, std::uint32_t b) { return scores[a] < scores[b]; });

    // Twice the Mann-Whitney count, kept in integers so ties stay exact.
    std::int64_t twice_wins = 0;
    std::int64_t negatives_below = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        std::int64_t pos = 0;
        std::int64_t neg = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] == Label::high ? pos : neg) += 1;
            ++j;
        }
        twice_wins += pos * (2 * negatives_below + neg);
        negatives_below += neg;
        i = j;
    }
    return static_cast<double>(twice_wins) /
           (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

double roc_auc(const ScoredLabels& data) { return roc_auc(data.scores, data.labels); }

MeanSd mean_sd(std::span<const double> values, SdKind kind) {
    if (values.empty()) throw std::invalid_argument("mean_sd of an empty sample");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() == 1) return {mean, 0.0};
    double squares = 0.0;
    for (double v : values) squares += (v - mean) * (v - mean);
    const double denom = kind == SdKind::sample ? n - 1.0 : n;
    return {mean, std::sqrt(squares / denom)};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double r2_to_auc(double r2) {
    if (std::isnan(r2)) throw std::invalid_argument("r2_to_auc: NaN");
    if (r2 >= 1.0) throw std::invalid_argument("r2_to_auc: R^2 must be below 1");
    if (r2 < 0.0) {
        spdlog::warn("negative R^2 ({}) clamped to 0 before AUC conversion", r2);
        r2 = 0.0;
    }
    const double r = std::sqrt(r2);
    const double d = 2.0 * r / std::sqrt(1.0 - r2);
    return normal_cdf(d / std::sqrt(2.0));
}

double r_squared(std::span<const double> predicted, std::span<const double> observed) {
    if (predicted.size() != observed.size()) {
        throw std::invalid_argument("r_squared: length mismatch");
    }
    if (observed.empty()) throw std::invalid_argument("r_squared: empty sample");
    const double mean =
        std::accumulate(observed.begin(), observed.end(), 0.0) / static_cast<double>(observed.size());
    double ss_tot = 0.0;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        ss_tot += (observed[i] - mean) * (observed[i] - mean);
        ss_res += (observed[i] - predicted[i]) * (observed[i] - predicted[i]);
    }
    if (ss_tot == 0.0) throw DegenerateDataError("R^2 undefined: observed values have zero variance");
    return 1.0 - ss_res / ss_tot;
}

}  // namespace dtx
