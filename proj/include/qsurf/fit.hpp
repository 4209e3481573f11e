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

#ifndef QSURF_FIT_HPP
#define QSURF_FIT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace qsurf {

inline double fidelity(double error_rate) { return 1.0 - 2.0 * error_rate; }

// Logical error per round from a single duration: eps = (1 - (1-2E)^(1/n))/2.
inline double ler_fixed_n(double error_rate, int n) {
    if (n < 1) throw std::invalid_argument("duration must be >= 1");
    if (error_rate < 0 || error_rate >= 0.5) {
        throw std::invalid_argument("error rate must be in [0, 0.5)");
    }
    return 0.5 * (1.0 - std::pow(1.0 - 2.0 * error_rate, 1.0 / n));
}

// Inverse of ler_fixed_n: E(n) for a given per-round epsilon.
inline double error_from_ler(double eps, int n) {
    if (n < 1) throw std::invalid_argument("duration must be >= 1");
    if (eps < 0 || eps >= 0.5) throw std::invalid_argument("eps must be in [0, 0.5)");
    return 0.5 * (1.0 - std::pow(1.0 - 2.0 * eps, n));
}

struct DurationStat {
    int n = 0;             // cycles
    uint64_t errors = 0;   // misdecoded shots
    uint64_t shots = 0;
};

struct FitResult {
    double eps = 0;               // logical error per round
    double log_f0 = 0;            // fit intercept
    double r2 = 0;
    double eps_stderr = 0;        // bootstrap standard error
    double eps_lo = 0, eps_hi = 0;        // bootstrap percentile interval
    double intercept_stderr = 0;
    std::vector<std::pair<int, double>> fidelities;  // usable (n, F) points
    std::vector<int> dropped;     // durations dropped (F <= 0 or n == 1)
};

namespace detail {

struct LineFit {
    double slope = 0, intercept = 0, r2 = 0;
    int points = 0;
};

// Unweighted least squares of log F vs n; n=1 excluded, F<=0 dropped.
inline LineFit fit_log_fidelity(const std::vector<DurationStat> &stats, std::vector<int> *dropped) {
    std::vector<double> xs, ys;
    for (const auto &s : stats) {
        if (s.shots == 0) throw std::invalid_argument("duration point with zero shots");
        double f = fidelity(static_cast<double>(s.errors) / static_cast<double>(s.shots));
        if (s.n == 1 || f <= 0) {
            if (dropped) dropped->push_back(s.n);
            continue;
        }
        xs.push_back(s.n);
        ys.push_back(std::log(f));
    }
    LineFit out;
    out.points = static_cast<int>(xs.size());
    if (out.points < 2) return out;
    double mx = 0, my = 0;
    for (size_t i = 0; i < xs.size(); i++) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= xs.size();
    my /= ys.size();
    double sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < xs.size(); i++) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0) {
        out.points = 0;
        return out;
    }
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    double ss_res = 0;
    for (size_t i = 0; i < xs.size(); i++) {
        double r = ys[i] - (out.intercept + out.slope * xs[i]);
        ss_res += r * r;
    }
    out.r2 = syy > 0 ? 1.0 - ss_res / syy : 1.0;
    return out;
}

}  // namespace detail

// Fit log F(n) = n log(1-2eps) + log F0 across durations; bootstrap over
// binomial resamples of the per-duration outcomes for standard errors.
inline FitResult fit_ler(const std::vector<DurationStat> &stats, int bootstrap = 1000,
                         uint64_t seed = 0x5eedf17) {
    FitResult out;
    auto base = detail::fit_log_fidelity(stats, &out.dropped);
    if (base.points < 2) {
        throw std::invalid_argument("fit_ler: fewer than 2 usable duration points");
    }
    out.eps = 0.5 * (1.0 - std::exp(base.slope));
    out.log_f0 = base.intercept;
    out.r2 = base.r2;
    for (const auto &s : stats) {
        double f = fidelity(static_cast<double>(s.errors) / static_cast<double>(s.shots));
        if (s.n != 1 && f > 0) out.fidelities.emplace_back(s.n, f);
    }
    if (bootstrap > 0) {
        std::mt19937_64 rng(seed);
        std::vector<double> eps_samples, int_samples;
        eps_samples.reserve(bootstrap);
        for (int b = 0; b < bootstrap; b++) {
            std::vector<DurationStat> resampled = stats;
            for (auto &s : resampled) {
                double p = static_cast<double>(s.errors) / static_cast<double>(s.shots);
                std::binomial_distribution<uint64_t> bin(s.shots, p);
                s.errors = bin(rng);
            }
            auto fit = detail::fit_log_fidelity(resampled, nullptr);
            if (fit.points < 2) continue;
            eps_samples.push_back(0.5 * (1.0 - std::exp(fit.slope)));
            int_samples.push_back(fit.intercept);
        }
        if (eps_samples.size() >= 2) {
            auto moments = [](const std::vector<double> &v) {
                double m = 0, s2 = 0;
                for (double x : v) m += x;
                m /= v.size();
                for (double x : v) s2 += (x - m) * (x - m);
                return std::sqrt(s2 / (v.size() - 1));
            };
            out.eps_stderr = moments(eps_samples);
            out.intercept_stderr = moments(int_samples);
            std::sort(eps_samples.begin(), eps_samples.end());
            size_t lo = static_cast<size_t>(0.025 * (eps_samples.size() - 1));
            size_t hi = static_cast<size_t>(std::ceil(0.975 * (eps_samples.size() - 1)));
            out.eps_lo = eps_samples[lo];
            out.eps_hi = eps_samples[hi];
        }
    }
    return out;
}

struct LambdaResult {
    double lambda = 0;
    double stderr_ = 0;
};

// Error suppression factor between distances a < b: (eps_a/eps_b)^(2/(b-a)).
inline LambdaResult lambda_factor(double eps_a, double err_a, int a, double eps_b, double err_b, int b) {
    if (a == b) throw std::invalid_argument("distances must differ");
    if (eps_a <= 0 || eps_b <= 0) throw std::invalid_argument("eps must be positive");
    double expo = 2.0 / static_cast<double>(b - a);
    LambdaResult out;
    out.lambda = std::pow(eps_a / eps_b, expo);
    double rel = std::abs(expo) * std::sqrt((err_a / eps_a) * (err_a / eps_a) + (err_b / eps_b) * (err_b / eps_b));
    out.stderr_ = out.lambda * rel;
    return out;
}

struct CalibrationBin {
    double mean_prediction = 0;
    double empirical_frequency = 0;
    uint64_t count = 0;
    double freq_lo = 0, freq_hi = 0;  // bootstrap percentile interval
};

inline std::vector<CalibrationBin> calibration_curve(const std::vector<double> &predictions,
                                                     const std::vector<uint8_t> &labels, int bins,
                                                     int bootstrap = 1000, uint64_t seed = 0xca11b) {
    if (predictions.size() != labels.size()) throw std::invalid_argument("size mismatch");
    if (bins < 1) throw std::invalid_argument("need at least one bin");
    std::vector<std::vector<uint8_t>> bin_labels(bins);
    std::vector<double> bin_pred_sum(bins, 0);
    for (size_t i = 0; i < predictions.size(); i++) {
        double p = predictions[i];
        if (p < 0 || p > 1) throw std::invalid_argument("prediction outside [0,1]");
        int b = std::min(bins - 1, static_cast<int>(p * bins));
        bin_labels[b].push_back(labels[i]);
        bin_pred_sum[b] += p;
    }
    std::mt19937_64 rng(seed);
    std::vector<CalibrationBin> out;
    for (int b = 0; b < bins; b++) {
        if (bin_labels[b].empty()) continue;
        CalibrationBin cb;
        cb.count = bin_labels[b].size();
        cb.mean_prediction = bin_pred_sum[b] / static_cast<double>(cb.count);
        uint64_t ones = 0;
        for (uint8_t l : bin_labels[b]) ones += l;
        cb.empirical_frequency = static_cast<double>(ones) / static_cast<double>(cb.count);
        if (bootstrap > 0) {
            std::vector<double> freqs;
            std::binomial_distribution<uint64_t> bin_dist(cb.count, cb.empirical_frequency);
            for (int i = 0; i < bootstrap; i++) {
                freqs.push_back(static_cast<double>(bin_dist(rng)) / static_cast<double>(cb.count));
            }
            std::sort(freqs.begin(), freqs.end());
            cb.freq_lo = freqs[static_cast<size_t>(0.025 * (freqs.size() - 1))];
            cb.freq_hi = freqs[static_cast<size_t>(std::ceil(0.975 * (freqs.size() - 1)))];
        }
        out.push_back(cb);
    }
    return out;
}

struct PostselectPoint {
    double rejected_fraction = 0;
    uint64_t kept = 0;
    double error_rate = 0;
    double error_stderr = 0;  // standard error of the mean
    double eps = 0;           // per-round ler at the given duration, NaN if E >= 0.5
};

// Drop the least confident shots (smallest |p - 0.5|) and recompute the error
// rate at each requested rejection fraction.
inline std::vector<PostselectPoint> postselect(const std::vector<double> &predictions,
                                               const std::vector<uint8_t> &labels,
                                               const std::vector<double> &fractions, int duration) {
    if (predictions.size() != labels.size()) throw std::invalid_argument("size mismatch");
    if (predictions.empty()) throw std::invalid_argument("empty prediction set");
    std::vector<size_t> order(predictions.size());
    for (size_t i = 0; i < order.size(); i++) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return std::abs(predictions[a] - 0.5) < std::abs(predictions[b] - 0.5);
    });
    std::vector<PostselectPoint> out;
    for (double frac : fractions) {
        if (frac < 0 || frac >= 1) throw std::invalid_argument("fraction must be in [0,1)");
        size_t drop = static_cast<size_t>(frac * static_cast<double>(predictions.size()));
        PostselectPoint pt;
        pt.rejected_fraction = frac;
        pt.kept = predictions.size() - drop;
        uint64_t errors = 0;
        for (size_t i = drop; i < order.size(); i++) {
            size_t idx = order[i];
            uint8_t pred = predictions[idx] > 0.5 ? 1 : 0;
            errors += pred != labels[idx];
        }
        pt.error_rate = static_cast<double>(errors) / static_cast<double>(pt.kept);
        pt.error_stderr = std::sqrt(pt.error_rate * (1 - pt.error_rate) / static_cast<double>(pt.kept));
        pt.eps = pt.error_rate < 0.5 ? ler_fixed_n(pt.error_rate, duration)
                                     : std::numeric_limits<double>::quiet_NaN();
        out.push_back(pt);
    }
    return out;
}

}  // namespace qsurf

#endif
