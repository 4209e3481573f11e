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

#include "qsurf/matching.hpp"

#include <map>
#include <random>

#include "gtest/gtest.h"
#include "qsurf/circuit.hpp"
#include "qsurf/exact_ml.hpp"
#include "qsurf/layout.hpp"

namespace qsurf {
namespace {

ErrorMechanism mech(double p, std::vector<int> dets, std::vector<int> obs = {}) {
    ErrorMechanism m;
    m.prob = p;
    m.detectors = std::move(dets);
    m.logical_flips = std::move(obs);
    return m;
}

TEST(Matching, EmptyDem) {
    DetectorErrorModel dem;
    dem.num_detectors = 4;
    dem.num_observables = 1;
    auto g = MatchingGraph::build(dem);
    EXPECT_TRUE(g.edges.empty());
    EXPECT_EQ(g.decode({}), 0u);
}

TEST(Matching, SingleEdgeWeight) {
    DetectorErrorModel dem;
    dem.num_detectors = 2;
    dem.num_observables = 1;
    dem.mechanisms.push_back(mech(0.01, {0, 1}));
    auto g = MatchingGraph::build(dem);
    ASSERT_EQ(g.edges.size(), 1u);
    EXPECT_NEAR(g.edges[0].weight, std::log(0.99 / 0.01), 1e-12);
}

TEST(Matching, TwoEventsAcrossLogicalEdge) {
    // Chain 0-1-2 with the middle edge carrying the logical flip.
    DetectorErrorModel dem;
    dem.num_detectors = 3;
    dem.num_observables = 1;
    dem.mechanisms.push_back(mech(0.01, {0}));
    dem.mechanisms.push_back(mech(0.01, {0, 1}, {0}));
    dem.mechanisms.push_back(mech(0.01, {1, 2}));
    dem.mechanisms.push_back(mech(0.01, {2}));
    auto g = MatchingGraph::build(dem);
    EXPECT_EQ(g.decode({0, 1}), 1u);  // direct edge carries the flip
    EXPECT_EQ(g.decode({1, 2}), 0u);
    EXPECT_EQ(g.decode({}), 0u);
}

// Independent Bellman-Ford as a second shortest-path implementation.
std::vector<double> bellman_ford(const MatchingGraph &g, int source) {
    const int n = g.num_detectors + 1;
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    dist[source] = 0;
    for (int iter = 0; iter < n; iter++) {
        bool changed = false;
        for (const auto &e : g.edges) {
            int u = e.u;
            int v = e.v < 0 ? g.num_detectors : e.v;
            if (dist[u] + e.weight < dist[v]) {
                dist[v] = dist[u] + e.weight;
                changed = true;
            }
            if (dist[v] + e.weight < dist[u]) {
                dist[u] = dist[v] + e.weight;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return dist;
}

DetectorErrorModel random_graphlike_dem(std::mt19937_64 &rng, int detectors, int mechanisms) {
    DetectorErrorModel dem;
    dem.num_detectors = detectors;
    dem.num_observables = 2;
    std::uniform_real_distribution<double> pdist(0.001, 0.2);
    std::uniform_int_distribution<int> ddist(0, detectors - 1);
    std::uniform_int_distribution<int> kind(0, 3);
    for (int i = 0; i < mechanisms; i++) {
        int a = ddist(rng), b = ddist(rng);
        std::vector<int> dets = a == b ? std::vector<int>{a} : std::vector<int>{std::min(a, b), std::max(a, b)};
        std::vector<int> obs;
        if (kind(rng) == 0) obs.push_back(0);
        dem.mechanisms.push_back(mech(pdist(rng), dets, obs));
    }
    return dem;
}

TEST(Matching, DijkstraMatchesBellmanFord) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; trial++) {
        auto dem = random_graphlike_dem(rng, 12, 30);
        auto g = MatchingGraph::build(dem);
        for (int src = 0; src < 4; src++) {
            auto ref = bellman_ford(g, src);
            const auto &got = g.dijkstra(src);
            for (size_t i = 0; i < ref.size(); i++) {
                if (std::isinf(ref[i])) {
                    EXPECT_TRUE(std::isinf(got.dist[i]));
                } else {
                    EXPECT_NEAR(got.dist[i], ref[i], 1e-9);
                }
            }
        }
    }
}

// Brute-force matcher over all pairings (with optional boundary) for oracle
// comparison.
double brute_force_matching(const std::vector<std::vector<double>> &dist, const std::vector<double> &bdist,
                            uint32_t remaining) {
    if (remaining == 0) return 0;
    int i = 0;
    while (!(remaining >> i & 1)) i++;
    double best = bdist[i] + brute_force_matching(dist, bdist, remaining ^ (1u << i));
    for (size_t j = i + 1; j < bdist.size(); j++) {
        if (!(remaining >> j & 1)) continue;
        best = std::min(best, dist[i][j] + brute_force_matching(
                                               dist, bdist, remaining ^ (1u << i) ^ (1u << static_cast<int>(j))));
    }
    return best;
}

TEST(Matching, ExactMatcherIsOptimal) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; trial++) {
        auto dem = random_graphlike_dem(rng, 10, 25);
        auto g = MatchingGraph::build(dem);
        std::vector<int> events;
        std::uniform_int_distribution<int> ddist(0, 9);
        for (int i = 0; i < 6; i++) {
            int e = ddist(rng);
            if (std::find(events.begin(), events.end(), e) == events.end()) events.push_back(e);
        }
        if (events.empty()) continue;
        const int k = static_cast<int>(events.size());
        std::vector<std::vector<double>> dist(k, std::vector<double>(k));
        std::vector<double> bdist(k);
        for (int i = 0; i < k; i++) {
            const auto &src = g.dijkstra(events[i]);
            for (int j = 0; j < k; j++) dist[i][j] = src.dist[events[j]];
            bdist[i] = src.dist[g.boundary()];
        }
        double oracle = brute_force_matching(dist, bdist, (1u << k) - 1);
        if (std::isinf(oracle)) continue;
        EXPECT_NEAR(g.matching_weight(events, true), oracle, 1e-9);
        EXPECT_GE(g.matching_weight(events, false) + 1e-9, oracle);  // greedy never beats exact
    }
}

TEST(Matching, HyperedgeDecomposition) {
    DetectorErrorModel dem;
    dem.num_detectors = 4;
    dem.num_observables = 1;
    dem.mechanisms.push_back(mech(0.01, {0, 1}, {0}));
    dem.mechanisms.push_back(mech(0.02, {2, 3}));
    dem.mechanisms.push_back(mech(0.005, {0, 1, 2, 3}, {0}));  // = edge01 + edge23
    auto g = MatchingGraph::build(dem);
    EXPECT_EQ(g.decomposed_hyperedges, 1);
    EXPECT_EQ(g.dropped_hyperedges, 0);
    ASSERT_EQ(g.edges.size(), 2u);
    // Each component absorbed the hyperedge probability via the merge rule.
    for (const auto &e : g.edges) {
        double base = e.obs_mask ? 0.01 : 0.02;
        EXPECT_NEAR(e.p, soft_xor(base, 0.005), 1e-12);
    }
}

TEST(Matching, UndecomposableHyperedgeDropped) {
    DetectorErrorModel dem;
    dem.num_detectors = 3;
    dem.num_observables = 1;
    dem.mechanisms.push_back(mech(0.01, {0, 1, 2}));
    auto g = MatchingGraph::build(dem);
    EXPECT_EQ(g.dropped_hyperedges, 1);
    EXPECT_TRUE(g.edges.empty());
}

TEST(Matching, EventRelabelingInvariance) {
    // Relabeling detectors consistently permutes events but not the decoded
    // logical answer.
    std::mt19937_64 rng(23);
    auto dem = random_graphlike_dem(rng, 8, 20);
    std::vector<int> perm = {3, 7, 1, 0, 6, 2, 5, 4};
    DetectorErrorModel permuted = dem;
    for (auto &m : permuted.mechanisms) {
        for (auto &d : m.detectors) d = perm[d];
        std::sort(m.detectors.begin(), m.detectors.end());
    }
    auto g = MatchingGraph::build(dem);
    auto gp = MatchingGraph::build(permuted);
    std::uniform_int_distribution<int> ddist(0, 7);
    for (int trial = 0; trial < 50; trial++) {
        std::vector<int> events, pevents;
        for (int i = 0; i < 4; i++) {
            int e = ddist(rng);
            if (std::find(events.begin(), events.end(), e) == events.end()) {
                events.push_back(e);
                pevents.push_back(perm[e]);
            }
        }
        EXPECT_EQ(g.decode(events), gp.decode(pevents));
    }
}

// ---- Exact ML decoder (frontier DP) ----

// Independent recursive enumeration of the observable-0 class masses.
void enumerate_masses(const DetectorErrorModel &dem, size_t k, std::vector<uint8_t> events, int flip,
                      double mass, double out[2]) {
    if (k == dem.mechanisms.size()) {
        for (uint8_t e : events) {
            if (e) return;
        }
        out[flip] += mass;
        return;
    }
    const auto &m = dem.mechanisms[k];
    enumerate_masses(dem, k + 1, events, flip, mass * (1 - m.prob), out);
    for (int d : m.detectors) events[d] ^= 1;
    int f = flip;
    for (int o : m.logical_flips) {
        if (o == 0) f ^= 1;
    }
    enumerate_masses(dem, k + 1, events, f, mass * m.prob, out);
}

TEST(ExactMl, MatchesExhaustiveEnumeration) {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> pdist(0.01, 0.3);
    std::uniform_int_distribution<int> ddist(0, 6);
    std::uniform_int_distribution<int> ndist(1, 3);
    std::uniform_int_distribution<int> odist(0, 3);
    for (int trial = 0; trial < 20; trial++) {
        DetectorErrorModel dem;
        dem.num_detectors = 7;
        dem.num_observables = 1;
        for (int i = 0; i < 12; i++) {
            ErrorMechanism m;
            m.prob = pdist(rng);
            int nd = ndist(rng);
            for (int j = 0; j < nd; j++) {
                int d = ddist(rng);
                if (std::find(m.detectors.begin(), m.detectors.end(), d) == m.detectors.end()) {
                    m.detectors.push_back(d);
                }
            }
            std::sort(m.detectors.begin(), m.detectors.end());
            if (odist(rng) == 0) m.logical_flips.push_back(0);
            dem.mechanisms.push_back(m);
        }
        ExactMlDecoder dec(dem, 0);
        auto sample = sample_dem(dem, rng);
        double masses[2] = {0, 0};
        enumerate_masses(dem, 0, sample.events, 0, 1.0, masses);
        ASSERT_GT(masses[0] + masses[1], 0.0);
        int want = masses[1] > masses[0] ? 1 : 0;
        double post = std::max(masses[0], masses[1]) / (masses[0] + masses[1]);
        auto got = dec.decode(sample.events);
        EXPECT_EQ(got.flip, want);
        EXPECT_NEAR(got.posterior, post, 1e-10);
    }
}

TEST(ExactMl, MatchingIsNotBetterThanMl) {
    // d=3, 3 cycles, SI1000: decode DEM samples with both decoders; matching's
    // error rate must not beat exact ML (3 sigma, 1e5 shots).
    auto layout = build_layout(3, Basis::Z);
    NoiseParams noise;
    noise.model = NoiseModel::SI1000;
    noise.p = 0.005;
    auto circuit = build_memory_circuit(layout, 3, noise);
    auto dem = extract_dem(circuit);
    ExactMlDecoder ml(dem, 0);
    auto graph = MatchingGraph::build(dem);
    std::mt19937_64 rng(31);
    const int shots = 100000;
    int ml_err = 0, match_err = 0;
    std::map<std::vector<uint8_t>, int> ml_cache;
    for (int s = 0; s < shots; s++) {
        auto sample = sample_dem(dem, rng);
        auto [it, fresh] = ml_cache.try_emplace(sample.events, -1);
        if (fresh) it->second = ml.decode(sample.events).flip;
        ml_err += it->second != sample.flips[0];
        uint64_t m = graph.decode_bits(sample.events);
        match_err += static_cast<int>(m & 1) != sample.flips[0];
    }
    double p_ml = static_cast<double>(ml_err) / shots;
    double sigma = std::sqrt(2.0 * p_ml * (1 - p_ml) / shots);
    EXPECT_GE(match_err + 3 * sigma * shots, ml_err);
}

}  // namespace
}  // namespace qsurf
