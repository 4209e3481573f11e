// Copyright 2026 The qsurf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qsurf/fit.hpp"

#include <random>

#include "gtest/gtest.h"

namespace qsurf {
namespace {

TEST(Fit, FidelityBasics) {
    EXPECT_DOUBLE_EQ(fidelity(0.0), 1.0);
    EXPECT_DOUBLE_EQ(fidelity(0.5), 0.0);
    EXPECT_DOUBLE_EQ(fidelity(0.1), 0.8);
}

TEST(Fit, LerFixedNInversePair) {
    EXPECT_DOUBLE_EQ(ler_fixed_n(0.1, 1), 0.1);
    EXPECT_DOUBLE_EQ(ler_fixed_n(0.0, 10), 0.0);
    for (double eps : {0.001, 0.01, 0.2, 0.49}) {
        for (int n : {1, 3, 25, 100}) {
            double e = error_from_ler(eps, n);
            if (e >= 0.5) continue;  // F underflowed to 0 in double precision
            EXPECT_NEAR(ler_fixed_n(e, n), eps, 1e-12);
        }
    }
    EXPECT_THROW(ler_fixed_n(0.5, 3), std::invalid_argument);
    EXPECT_THROW(ler_fixed_n(0.1, 0), std::invalid_argument);
}

std::vector<DurationStat> exact_counts(double eps, const std::vector<int> &ns, uint64_t shots) {
    std::vector<DurationStat> stats;
    for (int n : ns) {
        DurationStat s;
        s.n = n;
        s.shots = shots;
        s.errors = static_cast<uint64_t>(std::llround(error_from_ler(eps, n) * static_cast<double>(shots)));
        stats.push_back(s);
    }
    return stats;
}

TEST(Fit, ExactExponentialRecovered) {
    const double eps = 0.01;
    auto stats = exact_counts(eps, {3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25}, 1ull << 50);
    auto fit = fit_ler(stats, 0);
    EXPECT_NEAR(fit.eps, eps, 1e-12);
    EXPECT_NEAR(fit.r2, 1.0, 1e-12);
    EXPECT_NEAR(fit.log_f0, 0.0, 1e-9);
}

TEST(Fit, DropsNEqualOneAndDeadPoints) {
    auto stats = exact_counts(0.02, {1, 3, 5, 7}, 1ull << 50);
    stats.push_back({9, 600, 1000});  // E = 0.6 -> F < 0
    auto fit = fit_ler(stats, 0);
    EXPECT_NEAR(fit.eps, 0.02, 1e-10);
    ASSERT_EQ(fit.dropped.size(), 2u);
    EXPECT_EQ(fit.dropped[0], 1);
    EXPECT_EQ(fit.dropped[1], 9);
    EXPECT_EQ(fit.fidelities.size(), 3u);
}

TEST(Fit, RejectsTooFewPoints) {
    auto stats = exact_counts(0.02, {1, 5}, 1000000);
    EXPECT_THROW(fit_ler(stats, 0), std::invalid_argument);  // n=1 excluded -> 1 point
}

TEST(Fit, BootstrapCoverage) {
    // A synthetic study: binomial counts around a known eps; the bootstrap
    // percentile interval should cover the truth in >= 90 of 100 trials.
    const double eps = 0.02;
    const std::vector<int> ns = {3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25};
    std::mt19937_64 rng(12345);
    int covered = 0;
    for (int trial = 0; trial < 100; trial++) {
        std::vector<DurationStat> stats;
        for (int n : ns) {
            DurationStat s;
            s.n = n;
            s.shots = 10000;
            std::binomial_distribution<uint64_t> bin(s.shots, error_from_ler(eps, n));
            s.errors = bin(rng);
            stats.push_back(s);
        }
        auto fit = fit_ler(stats, 300, rng());
        if (eps >= fit.eps_lo && eps <= fit.eps_hi) covered++;
    }
    EXPECT_GE(covered, 90);
}

TEST(Fit, LambdaFactor) {
    EXPECT_NEAR(lambda_factor(1e-3, 0, 3, 1e-3, 0, 11).lambda, 1.0, 1e-12);
    EXPECT_NEAR(lambda_factor(16e-6, 0, 3, 1e-6, 0, 11).lambda, 2.0, 1e-12);
    auto l = lambda_factor(4e-3, 4e-4, 3, 1e-3, 1e-4, 5);
    EXPECT_NEAR(l.lambda, 4.0, 1e-12);
    EXPECT_GT(l.stderr_, 0.0);
    EXPECT_THROW(lambda_factor(1e-3, 0, 3, 1e-3, 0, 3), std::invalid_argument);
}

TEST(Fit, CalibrationCurveOnCalibratedPredictor) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> preds;
    std::vector<uint8_t> labels;
    for (int i = 0; i < 200000; i++) {
        double p = unif(rng);
        preds.push_back(p);
        labels.push_back(unif(rng) < p ? 1 : 0);
    }
    auto curve = calibration_curve(preds, labels, 10, 200);
    ASSERT_EQ(curve.size(), 10u);
    for (const auto &bin : curve) {
        EXPECT_GE(bin.count, 1000u);
        EXPECT_LT(std::abs(bin.empirical_frequency - bin.mean_prediction), 0.02);
        EXPECT_LE(bin.freq_lo, bin.empirical_frequency);
        EXPECT_GE(bin.freq_hi, bin.empirical_frequency);
    }
}

TEST(Fit, CalibrationConstantPredictor) {
    std::vector<double> preds(1000, 0.5);
    std::vector<uint8_t> labels;
    for (int i = 0; i < 1000; i++) labels.push_back(i % 2);
    auto curve = calibration_curve(preds, labels, 10, 0);
    ASSERT_EQ(curve.size(), 1u);
    EXPECT_DOUBLE_EQ(curve[0].mean_prediction, 0.5);
    EXPECT_DOUBLE_EQ(curve[0].empirical_frequency, 0.5);
}

TEST(Fit, PostselectFractionZeroIsBaseline) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> preds;
    std::vector<uint8_t> labels;
    uint64_t base_errors = 0;
    for (int i = 0; i < 20000; i++) {
        double p = unif(rng);
        preds.push_back(p);
        uint8_t l = unif(rng) < p ? 1 : 0;
        labels.push_back(l);
        base_errors += (p > 0.5 ? 1 : 0) != l;
    }
    auto pts = postselect(preds, labels, {0.0, 0.05, 0.1}, 5);
    EXPECT_DOUBLE_EQ(pts[0].error_rate, static_cast<double>(base_errors) / 20000.0);
    // Calibrated predictor: error rate should not increase within a few sigma.
    for (size_t i = 1; i < pts.size(); i++) {
        double sigma = std::hypot(pts[i].error_stderr, pts[i - 1].error_stderr);
        EXPECT_LE(pts[i].error_rate, pts[i - 1].error_rate + 3 * sigma);
    }
}

TEST(Fit, PostselectSeparableDataReachesZero) {
    // Misclassified shots are exactly the low-confidence ones.
    std::vector<double> preds;
    std::vector<uint8_t> labels;
    for (int i = 0; i < 90; i++) {
        preds.push_back(0.99);
        labels.push_back(1);
    }
    for (int i = 0; i < 10; i++) {
        preds.push_back(0.45);  // low confidence, wrong
        labels.push_back(1);
    }
    auto pts = postselect(preds, labels, {0.0, 0.1}, 3);
    EXPECT_DOUBLE_EQ(pts[0].error_rate, 0.1);
    EXPECT_DOUBLE_EQ(pts[1].error_rate, 0.0);
    EXPECT_EQ(pts[1].kept, 90u);
}

}  // namespace
}  // namespace qsurf
