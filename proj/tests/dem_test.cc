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

#include "qsurf/dem.hpp"

#include <cmath>
#include <map>

#include "gtest/gtest.h"
#include "qsurf/frame_sim.hpp"

namespace qsurf {
namespace {

TEST(Dem, ZeroNoiseIsEmpty) {
    auto layout = build_layout(3, Basis::Z, Variant::cnot_standard);
    auto circuit = build_memory_circuit(layout, 2, NoiseParams{});
    auto dem = extract_dem(circuit);
    EXPECT_TRUE(dem.mechanisms.empty());
    EXPECT_FALSE(dem.skipped_leakage);
    EXPECT_EQ(dem.num_detectors, static_cast<int>(circuit.detectors.size()));
}

// A lone X channel on the central data qubit between cycles: one mechanism,
// its two adjacent Z-stabilizer detectors, and the logical flip of the row
// it sits on (and no other).
TEST(Dem, SingleInjectedChannel) {
    auto layout = build_layout(3, Basis::Z, Variant::cnot_standard);
    auto circuit = build_memory_circuit(layout, 3, NoiseParams{});
    int bulk = layout.data_index({2, 2});
    size_t pos = 0;
    while (circuit.ops[pos].type != OpType::measure_reset) pos++;
    circuit.ops.insert(circuit.ops.begin() + pos + 1, CircuitOp{OpType::x_error, 0.01, {bulk}});

    auto dem = extract_dem(circuit);
    ASSERT_EQ(dem.mechanisms.size(), 1u);
    const auto &mech = dem.mechanisms[0];
    EXPECT_DOUBLE_EQ(mech.prob, 0.01);
    ASSERT_EQ(mech.detectors.size(), 2u);
    for (int d : mech.detectors) {
        EXPECT_EQ(circuit.detectors[d].cycle, 2);
        EXPECT_EQ(layout.stabilizers[circuit.detectors[d].stabilizer].basis, Basis::Z);
    }
    // Qubit (2,2) is on row 1: exactly that line flips, the others do not.
    EXPECT_EQ(mech.logical_flips, (std::vector<int>{1}));

    // A corner qubit on row 0 carries L0 instead.
    auto circuit2 = build_memory_circuit(layout, 3, NoiseParams{});
    pos = 0;
    while (circuit2.ops[pos].type != OpType::measure_reset) pos++;
    circuit2.ops.insert(circuit2.ops.begin() + pos + 1,
                        CircuitOp{OpType::x_error, 0.01, {layout.data_index({0, 0})}});
    auto dem2 = extract_dem(circuit2);
    ASSERT_EQ(dem2.mechanisms.size(), 1u);
    EXPECT_EQ(dem2.mechanisms[0].logical_flips, (std::vector<int>{0}));
}

TEST(Dem, MergeRule) {
    auto layout = build_layout(3, Basis::Z, Variant::cnot_standard);
    auto circuit = build_memory_circuit(layout, 2, NoiseParams{});
    int bulk = layout.data_index({2, 2});
    size_t pos = 0;
    while (circuit.ops[pos].type != OpType::measure_reset) pos++;
    circuit.ops.insert(circuit.ops.begin() + pos + 1, CircuitOp{OpType::x_error, 0.02, {bulk}});
    circuit.ops.insert(circuit.ops.begin() + pos + 1, CircuitOp{OpType::x_error, 0.01, {bulk}});
    auto dem = extract_dem(circuit);
    ASSERT_EQ(dem.mechanisms.size(), 1u);
    EXPECT_NEAR(dem.mechanisms[0].prob, 0.01 * 0.98 + 0.02 * 0.99, 1e-15);
}

TEST(Dem, LeakageSkippedWithFlag) {
    auto layout = build_layout(3, Basis::Z, Variant::cnot_standard);
    NoiseParams noise{NoiseModel::SI1000, 0.001, 0.002, 0.0005, 0.25};
    auto circuit = build_memory_circuit(layout, 2, noise);
    auto dem = extract_dem(circuit);
    EXPECT_TRUE(dem.skipped_leakage);
    EXPECT_FALSE(dem.mechanisms.empty());
}

TEST(Dem, SampleBasics) {
    DetectorErrorModel empty;
    empty.num_detectors = 3;
    empty.num_observables = 1;
    std::mt19937_64 rng(1);
    auto s = sample_dem(empty, rng);
    EXPECT_EQ(s.events, (std::vector<uint8_t>{0, 0, 0}));
    EXPECT_EQ(s.flips, (std::vector<uint8_t>{0}));

    DetectorErrorModel certain;
    certain.num_detectors = 3;
    certain.num_observables = 1;
    certain.mechanisms.push_back({1.0 - 1e-15, {0, 2}, {0}});
    for (int i = 0; i < 10; i++) {
        auto t = sample_dem(certain, rng);
        EXPECT_EQ(t.events, (std::vector<uint8_t>{1, 0, 1}));
        EXPECT_EQ(t.flips, (std::vector<uint8_t>{1}));
    }
}

// Marginal detector frequencies on a 3-mechanism toy DEM match the
// closed-form XOR probability within 3 sigma over 1e6 samples.
TEST(Dem, SampleMarginalsClosedForm) {
    DetectorErrorModel dem;
    dem.num_detectors = 2;
    dem.num_observables = 1;
    double p1 = 0.1, p2 = 0.25, p3 = 0.05;
    dem.mechanisms.push_back({p1, {0}, {}});
    dem.mechanisms.push_back({p2, {0, 1}, {0}});
    dem.mechanisms.push_back({p3, {1}, {0}});
    double m0 = soft_xor(p1, p2);
    double m1 = soft_xor(p2, p3);
    const int n = 1000000;
    std::mt19937_64 rng(77);
    int c0 = 0, c1 = 0;
    for (int i = 0; i < n; i++) {
        auto s = sample_dem(dem, rng);
        c0 += s.events[0];
        c1 += s.events[1];
    }
    auto sigma = [&](double p) { return std::sqrt(p * (1 - p) / n); };
    EXPECT_NEAR(static_cast<double>(c0) / n, m0, 3 * sigma(m0));
    EXPECT_NEAR(static_cast<double>(c1) / n, m1, 3 * sigma(m1));
}

TEST(Dem, ScaleDem) {
    DetectorErrorModel dem;
    dem.num_detectors = 1;
    dem.mechanisms.push_back({0.01, {0}, {}});
    auto same = scale_dem(dem, 1.0);
    EXPECT_DOUBLE_EQ(same.mechanisms[0].prob, 0.01);
    auto half = scale_dem(dem, 0.5);
    EXPECT_DOUBLE_EQ(half.mechanisms[0].prob, 0.005);
    EXPECT_THROW(scale_dem(dem, 0.0), std::invalid_argument);
    EXPECT_THROW(scale_dem(dem, 1.5), std::invalid_argument);

    // Sampled event density increases monotonically with the factor.
    auto layout = build_layout(3, Basis::Z, Variant::cnot_standard);
    auto big = extract_dem(build_memory_circuit(layout, 3, NoiseParams{NoiseModel::SI1000, 0.01}));
    std::mt19937_64 rng(3);
    double prev = -1.0;
    for (double f : {0.25, 0.5, 1.0}) {
        auto scaled = scale_dem(big, f);
        long events = 0;
        const int n = 20000;
        for (int i = 0; i < n; i++) {
            auto s = sample_dem(scaled, rng);
            for (uint8_t e : s.events) events += e;
        }
        double density = static_cast<double>(events) / (n * big.num_detectors);
        EXPECT_GT(density, prev);
        prev = density;
    }
}

// Independent recursive enumeration used as the oracle for the bitmask
// brute-force implementation.
void enumerate(const DetectorErrorModel &dem, size_t k, double weight, std::vector<uint8_t> det,
               std::vector<uint8_t> obs, const std::vector<uint8_t> &target,
               std::map<std::vector<uint8_t>, double> &mass) {
    if (k == dem.mechanisms.size()) {
        if (det == target) mass[obs] += weight;
        return;
    }
    const auto &mech = dem.mechanisms[k];
    enumerate(dem, k + 1, weight * (1 - mech.prob), det, obs, target, mass);
    for (int d : mech.detectors) det[d] ^= 1;
    for (int o : mech.logical_flips) obs[o] ^= 1;
    enumerate(dem, k + 1, weight * mech.prob, det, obs, target, mass);
}

TEST(Dem, BruteForceMlDecode) {
    DetectorErrorModel tiny;
    tiny.num_detectors = 2;
    tiny.num_observables = 1;
    tiny.mechanisms.push_back({0.01, {0, 1}, {0}});
    tiny.mechanisms.push_back({0.02, {0}, {}});
    auto r = brute_force_ml_decode(tiny, {0, 0});
    EXPECT_EQ(r.flips, (std::vector<uint8_t>{0}));
    EXPECT_GT(r.posterior, 0.5);

    auto r2 = brute_force_ml_decode(tiny, {1, 1});
    EXPECT_EQ(r2.flips, (std::vector<uint8_t>{1}));
    EXPECT_GT(r2.posterior, 0.99);

    // Random 10-mechanism DEM against the recursive oracle.
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(0.01, 0.3);
    for (int trial = 0; trial < 20; trial++) {
        DetectorErrorModel dem;
        dem.num_detectors = 4;
        dem.num_observables = 2;
        for (int i = 0; i < 10; i++) {
            ErrorMechanism m;
            m.prob = unif(rng);
            for (int d = 0; d < 4; d++) {
                if (rng() & 1) m.detectors.push_back(d);
            }
            for (int o = 0; o < 2; o++) {
                if (rng() % 3 == 0) m.logical_flips.push_back(o);
            }
            if (m.detectors.empty() && m.logical_flips.empty()) m.detectors.push_back(0);
            dem.mechanisms.push_back(std::move(m));
        }
        std::vector<uint8_t> target{static_cast<uint8_t>(rng() & 1), static_cast<uint8_t>(rng() & 1),
                                    static_cast<uint8_t>(rng() & 1), static_cast<uint8_t>(rng() & 1)};
        std::map<std::vector<uint8_t>, double> mass;
        enumerate(dem, 0, 1.0, {0, 0, 0, 0}, {0, 0}, target, mass);
        double total = 0, best = -1;
        std::vector<uint8_t> best_obs;
        for (auto &[obs, w] : mass) {
            total += w;
            if (w > best) {
                best = w;
                best_obs = obs;
            }
        }
        if (total == 0) continue;
        auto got = brute_force_ml_decode(dem, target);
        EXPECT_EQ(got.flips, best_obs);
        EXPECT_NEAR(got.posterior, best / total, 1e-12);
    }

    DetectorErrorModel huge;
    huge.num_detectors = 1;
    for (int i = 0; i < 25; i++) huge.mechanisms.push_back({0.01, {0}, {}});
    EXPECT_THROW(brute_force_ml_decode(huge, {0}), std::invalid_argument);
}

TEST(Dem, TextRoundTrip) {
    auto layout = build_layout(3, Basis::Z, Variant::cnot_standard);
    auto dem = extract_dem(build_memory_circuit(layout, 2, NoiseParams{NoiseModel::SI1000, 0.003}));
    auto text = serialize_dem(dem);
    auto parsed = parse_dem(text);
    EXPECT_EQ(parsed.num_detectors, dem.num_detectors);
    EXPECT_EQ(parsed.num_observables, dem.num_observables);
    ASSERT_EQ(parsed.mechanisms.size(), dem.mechanisms.size());
    for (size_t i = 0; i < dem.mechanisms.size(); i++) {
        EXPECT_EQ(parsed.mechanisms[i].prob, dem.mechanisms[i].prob);
        EXPECT_EQ(parsed.mechanisms[i].detectors, dem.mechanisms[i].detectors);
        EXPECT_EQ(parsed.mechanisms[i].logical_flips, dem.mechanisms[i].logical_flips);
    }
    EXPECT_EQ(serialize_dem(parsed), text);
    EXPECT_THROW(parse_dem("error(0.1) D0"), std::invalid_argument);
    EXPECT_THROW(parse_dem("dem 2 1\nerror(0.1) D5"), std::invalid_argument);
}

// Circuit sampling and DEM sampling agree on per-detector marginals
// (scaled-down version of the full acceptance check).
TEST(Dem, EventDensityMatchesCircuit) {
    auto layout = build_layout(3, Basis::Z, Variant::cnot_standard);
    NoiseParams noise{NoiseModel::SI1000, 0.002};
    auto circuit = build_memory_circuit(layout, 3, noise);
    auto dem = extract_dem(circuit);
    ASSERT_FALSE(dem.mechanisms.empty());

    const int n = 30000;
    std::vector<long> circ_counts(circuit.detectors.size(), 0), dem_counts(circuit.detectors.size(), 0);
    for (uint64_t shot = 0; shot < n; shot++) {
        auto raw = simulate_shot(circuit, 2024, shot);
        auto ev = detector_bits(circuit, raw);
        for (size_t i = 0; i < ev.size(); i++) circ_counts[i] += ev[i];
    }
    std::mt19937_64 rng(2025);
    for (int shot = 0; shot < n; shot++) {
        auto s = sample_dem(dem, rng);
        for (size_t i = 0; i < s.events.size(); i++) dem_counts[i] += s.events[i];
    }
    for (size_t i = 0; i < circ_counts.size(); i++) {
        double pc = static_cast<double>(circ_counts[i]) / n;
        double pd = static_cast<double>(dem_counts[i]) / n;
        double sigma = std::sqrt(std::max(pd * (1 - pd), 1e-9) * 2.0 / n);
        EXPECT_NEAR(pc, pd, 4 * sigma) << "detector " << i;
    }
}

}  // namespace
}  // namespace qsurf
