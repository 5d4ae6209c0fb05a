#include "doctest.h"

#include <cmath>
#include <vector>

#include "dtx/errors.hpp"
#include "dtx/metrics.hpp"
#include "dtx/random.hpp"
#include "oracles.hpp"

using namespace dtx;

namespace {
constexpr Label H = Label::high;
constexpr Label L = Label::low;

std::vector<Label> flipped(const std::vector<Label>& labels) {
    std::vector<Label> out;
    for (auto l : labels) out.push_back(l == H ? L : H);
    return out;
}

// Long-double erfc reference for the normal CDF.
double reference_cdf(double x) { return static_cast<double>(0.5L * std::erfc(-static_cast<long double>(x) / std::sqrt(2.0L))); }
}  // namespace

TEST_CASE("gini values") {
    CHECK(gini({5, 5}) == 0.5);
    CHECK(gini({7, 0}) == 0.0);
    CHECK(gini({3, 1}) == 0.375);
    CHECK_THROWS_AS(gini({0, 0}), std::invalid_argument);
}

TEST_CASE("gini is symmetric and peaks at equal counts") {
    for (std::int64_t h = 0; h <= 20; ++h) {
        for (std::int64_t l = 0; l <= 20; ++l) {
            if (h + l == 0) continue;
            const double g = gini({h, l});
            CHECK(g == gini({l, h}));
            CHECK(g >= 0.0);
            CHECK(g <= 0.5);
            CHECK((g == 0.0) == (h == 0 || l == 0));
        }
    }
}

TEST_CASE("weighted split gini") {
    CHECK(weighted_split_gini({4, 0}, {0, 3}) == 0.0);
    CHECK(weighted_split_gini({5, 5}, {5, 5}) == 0.5);
    CHECK(weighted_split_gini({3, 1}, {0, 4}) == doctest::Approx(0.1875).epsilon(1e-15));
    CHECK_THROWS(weighted_split_gini({0, 0}, {1, 1}));
    CHECK_THROWS(weighted_split_gini({1, 1}, {0, 0}));
}

TEST_CASE("split impurity never exceeds the parent") {
    Rng rng(17);
    for (int i = 0; i < 2000; ++i) {
        const ClassCounts left{static_cast<std::int64_t>(rng.index(30)), static_cast<std::int64_t>(rng.index(30)) + 1};
        const ClassCounts right{static_cast<std::int64_t>(rng.index(30)) + 1, static_cast<std::int64_t>(rng.index(30))};
        const ClassCounts parent{left.n_high + right.n_high, left.n_low + right.n_low};
        CHECK(weighted_split_gini(left, right) <= gini(parent) + 1e-15);
    }
}

TEST_CASE("roc_auc examples") {
    CHECK(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<Label>{L, L, H, H}) == 1.0);
    CHECK(roc_auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, std::vector<Label>{L, H, H, L}) == 0.5);
    CHECK(roc_auc(std::vector<double>{0.9, 0.8, 0.4, 0.3}, std::vector<Label>{H, L, H, L}) == 0.75);
    CHECK(roc_auc(ScoredLabels{{0.9, 0.8, 0.4, 0.3}, {H, L, H, L}}) == 0.75);
}

TEST_CASE("roc_auc rejects single-class and mismatched input") {
    CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<Label>{H, H}), DegenerateDataError);
    CHECK_THROWS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<Label>{H}));
}

TEST_CASE("roc_auc matches the pairwise estimator, complements on flipped labels and ignores monotone transforms") {
    Rng rng(5);
    for (int draw = 0; draw < 300; ++draw) {
        const std::size_t n = 2 + rng.index(150);
        std::vector<double> s(n);
        std::vector<Label> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.index(draw % 3 == 0 ? 5 : 1000)) / 10.0;
            y[i] = rng.bernoulli(0.5) ? H : L;
        }
        y[0] = H;
        y[1] = L;
        const double auc = roc_auc(s, y);
        CHECK(std::abs(auc - oracle::pairwise_auc(s, y)) <= 1e-12);
        CHECK(auc + roc_auc(s, flipped(y)) == 1.0);
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(s[i]) * 3.0 - 1.0;
        CHECK(roc_auc(t, y) == auc);
        CHECK(auc >= 0.0);
        CHECK(auc <= 1.0);
    }
}

TEST_CASE("mean_sd") {
    const std::vector<double> one{20.0};
    CHECK(mean_sd(one).mean == 20.0);
    CHECK(mean_sd(one).sd == 0.0);
    CHECK(mean_sd(one, SdKind::population).sd == 0.0);
    const std::vector<double> two{1.0, 3.0};
    CHECK(mean_sd(two).mean == 2.0);
    CHECK(mean_sd(two).sd == doctest::Approx(std::sqrt(2.0)));
    CHECK(mean_sd(two, SdKind::population).sd == doctest::Approx(1.0));
    CHECK_THROWS(mean_sd(std::vector<double>{}));
}

TEST_CASE("normal_cdf against an erfc reference") {
    for (double x = -8.0; x <= 8.0; x += 0.01) CHECK(std::abs(normal_cdf(x) - reference_cdf(x)) < 1e-7);
}

TEST_CASE("r2_to_auc") {
    CHECK(r2_to_auc(0.0) == 0.5);
    const double anchor = r2_to_auc(0.018);
    CHECK(anchor >= 0.575);
    CHECK(anchor <= 0.585);
    // r = 0.5, d = 1/sqrt(0.75), AUC = Phi(d / sqrt 2)
    const double d = 2.0 * 0.5 / std::sqrt(0.75);
    CHECK(r2_to_auc(0.25) == doctest::Approx(reference_cdf(d / std::sqrt(2.0))).epsilon(1e-7));
    CHECK(r2_to_auc(0.25) == doctest::Approx(0.793).epsilon(0.001));
    CHECK(r2_to_auc(-0.3) == 0.5);
    CHECK_THROWS(r2_to_auc(1.0));
    double previous = r2_to_auc(0.0);
    for (double r2 = 0.001; r2 < 0.9; r2 += 0.001) {
        const double a = r2_to_auc(r2);
        CHECK(a > previous);
        previous = a;
    }
}

TEST_CASE("r_squared") {
    CHECK(r_squared(std::vector<double>{1, 2, 4}, std::vector<double>{1, 2, 3}) == doctest::Approx(0.5));
    CHECK(r_squared(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 1.0);
    CHECK(r_squared(std::vector<double>{3, 2, 1}, std::vector<double>{1, 2, 3}) < 0.0);
    CHECK_THROWS_AS(r_squared(std::vector<double>{1, 2}, std::vector<double>{5, 5}), DegenerateDataError);
}
