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

#ifndef QSURF_MATCHING_HPP
#define QSURF_MATCHING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>
#include <vector>

#include "qsurf/dem.hpp"
#include "qsurf/iq.hpp"

namespace qsurf {

struct MatchingEdge {
    int u = 0;
    int v = -1;  // -1: virtual boundary
    double p = 0;
    double weight = 0;  // ln((1-p)/p)
    uint64_t obs_mask = 0;
};

// Uncorrelated matching decoder over a graph-like DEM. Events are paired by
// exact minimum-weight perfect matching (subset DP) over shortest paths, with
// a greedy fallback for large event sets.
class MatchingGraph {
  public:
    int num_detectors = 0;
    int num_observables = 0;
    std::vector<MatchingEdge> edges;
    int dropped_hyperedges = 0;
    int decomposed_hyperedges = 0;

    static constexpr int kExactLimit = 16;

    // Builds the graph; hyperedges are decomposed into existing edges when an
    // exact pairing exists, else dropped and counted.
    static MatchingGraph build(const DetectorErrorModel &dem, bool decompose_hyperedges = true) {
        MatchingGraph g;
        g.num_detectors = dem.num_detectors;
        g.num_observables = dem.num_observables;
        if (dem.num_observables > 64) throw std::invalid_argument("too many observables");
        // Key: (u, v, obs_mask); parallel edges with distinct flips stay apart.
        std::map<std::tuple<int, int, uint64_t>, double> merged;
        std::vector<const ErrorMechanism *> hyper;
        for (const auto &m : dem.mechanisms) {
            if (m.detectors.empty()) continue;  // detector-less mechanism: invisible to matching
            if (m.detectors.size() > 2) {
                hyper.push_back(&m);
                continue;
            }
            int u = m.detectors[0];
            int v = m.detectors.size() == 2 ? m.detectors[1] : -1;
            if (v >= 0 && v < u) std::swap(u, v);
            uint64_t obs = obs_mask_of(m);
            auto key = std::make_tuple(u, v, obs);
            auto it = merged.find(key);
            if (it == merged.end()) {
                merged[key] = m.prob;
            } else {
                it->second = soft_xor(it->second, m.prob);
            }
        }
        for (const auto *m : hyper) {
            if (!decompose_hyperedges || !g.try_decompose(*m, merged)) {
                g.dropped_hyperedges++;
            } else {
                g.decomposed_hyperedges++;
            }
        }
        for (const auto &[key, p] : merged) {
            if (p <= 0) continue;
            if (p >= 0.5) throw std::invalid_argument("edge probability >= 0.5");
            MatchingEdge e;
            e.u = std::get<0>(key);
            e.v = std::get<1>(key);
            e.obs_mask = std::get<2>(key);
            e.p = p;
            e.weight = std::log((1 - p) / p);
            g.edges.push_back(e);
        }
        g.build_adjacency();
        return g;
    }

    // Decodes a set of detection events into a logical-flip mask.
    uint64_t decode(const std::vector<int> &events, bool greedy_fallback = true) const {
        const int k = static_cast<int>(events.size());
        if (k == 0) return 0;
        for (int e : events) {
            if (e < 0 || e >= num_detectors) throw std::invalid_argument("event out of range");
        }
        // Pairwise shortest-path distances and path logical parities.
        std::vector<std::vector<double>> dist(k, std::vector<double>(k));
        std::vector<std::vector<uint64_t>> parity(k, std::vector<uint64_t>(k, 0));
        std::vector<double> bdist(k);
        std::vector<uint64_t> bparity(k);
        for (int i = 0; i < k; i++) {
            const auto &src = dijkstra(events[i]);
            for (int j = 0; j < k; j++) {
                dist[i][j] = src.dist[events[j]];
                parity[i][j] = src.obs[events[j]];
            }
            bdist[i] = src.dist[boundary()];
            bparity[i] = src.obs[boundary()];
        }
        std::vector<std::pair<int, int>> pairs;  // (i, j) or (i, -1) for boundary
        if (k <= kExactLimit) {
            pairs = exact_matching(k, dist, bdist);
        } else if (greedy_fallback) {
            pairs = greedy_matching(k, dist, bdist);
        } else {
            throw std::invalid_argument("event set too large for exact matcher");
        }
        uint64_t out = 0;
        for (auto [i, j] : pairs) {
            out ^= j < 0 ? bparity[i] : parity[i][j];
        }
        return out;
    }

    uint64_t decode_bits(const std::vector<uint8_t> &detector_bits, bool greedy_fallback = true) const {
        std::vector<int> events;
        for (size_t i = 0; i < detector_bits.size(); i++) {
            if (detector_bits[i]) events.push_back(static_cast<int>(i));
        }
        return decode(events, greedy_fallback);
    }

    // Matching weight of a decoded event set (exposed for oracle tests).
    double matching_weight(const std::vector<int> &events, bool exact = true) const {
        const int k = static_cast<int>(events.size());
        if (k == 0) return 0;
        std::vector<std::vector<double>> dist(k, std::vector<double>(k));
        std::vector<double> bdist(k);
        for (int i = 0; i < k; i++) {
            const auto &src = dijkstra(events[i]);
            for (int j = 0; j < k; j++) dist[i][j] = src.dist[events[j]];
            bdist[i] = src.dist[boundary()];
        }
        auto pairs = exact ? exact_matching(k, dist, bdist) : greedy_matching(k, dist, bdist);
        double total = 0;
        for (auto [i, j] : pairs) total += j < 0 ? bdist[i] : dist[i][j];
        return total;
    }

    struct DijkstraResult {
        std::vector<double> dist;
        std::vector<uint64_t> obs;  // logical parity along the shortest-path tree
    };

    // Shortest paths from a detector node over the matching graph, including
    // the boundary node. Cached per source.
    const DijkstraResult &dijkstra(int source) const {
        auto it = cache_.find(source);
        if (it != cache_.end()) return it->second;
        const int n = num_detectors + 1;
        DijkstraResult r;
        r.dist.assign(n, std::numeric_limits<double>::infinity());
        r.obs.assign(n, 0);
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
        r.dist[source] = 0;
        heap.push({0, source});
        std::vector<uint8_t> done(n, 0);
        while (!heap.empty()) {
            auto [d, u] = heap.top();
            heap.pop();
            if (done[u]) continue;
            done[u] = 1;
            for (int ei : adj_[u]) {
                const auto &e = edges[ei];
                int v = (e.u == u) ? node_of(e.v) : e.u;
                double nd = d + e.weight;
                if (nd < r.dist[v]) {
                    r.dist[v] = nd;
                    r.obs[v] = r.obs[u] ^ e.obs_mask;
                    heap.push({nd, v});
                }
            }
        }
        return cache_[source] = std::move(r);
    }

    int boundary() const { return num_detectors; }

  private:
    std::vector<std::vector<int>> adj_;
    mutable std::map<int, DijkstraResult> cache_;

    static uint64_t obs_mask_of(const ErrorMechanism &m) {
        uint64_t obs = 0;
        for (int o : m.logical_flips) obs |= 1ull << o;
        return obs;
    }

    int node_of(int v) const { return v < 0 ? boundary() : v; }

    void build_adjacency() {
        adj_.assign(num_detectors + 1, {});
        for (size_t i = 0; i < edges.size(); i++) {
            adj_[edges[i].u].push_back(static_cast<int>(i));
            adj_[node_of(edges[i].v)].push_back(static_cast<int>(i));
        }
    }

    // Attempts to split a 3- or 4-detector mechanism into existing edges whose
    // detector sets partition it and whose flips XOR to the mechanism's flips.
    // On success the probability is XOR-merged into each component.
    bool try_decompose(const ErrorMechanism &m, std::map<std::tuple<int, int, uint64_t>, double> &merged) {
        const auto &det = m.detectors;
        if (det.size() > 4) return false;
        uint64_t want = obs_mask_of(m);
        auto edge_key = [&](int a, int b) -> const std::tuple<int, int, uint64_t> * {
            // Any existing parallel edge over (a, b); prefers matching flips.
            static thread_local std::tuple<int, int, uint64_t> key;
            if (b >= 0 && b < a) std::swap(a, b);
            const std::tuple<int, int, uint64_t> *found = nullptr;
            for (auto it = merged.lower_bound(std::make_tuple(a, b, uint64_t(0))); it != merged.end(); ++it) {
                if (std::get<0>(it->first) != a || std::get<1>(it->first) != b) break;
                key = it->first;
                found = &key;
                break;
            }
            return found;
        };
        // Enumerate partitions into pairs plus at most one boundary singleton
        // per part.
        std::vector<std::vector<std::pair<int, int>>> partitions;
        if (det.size() == 3) {
            for (int s = 0; s < 3; s++) {
                std::vector<int> rest;
                for (int i = 0; i < 3; i++) {
                    if (i != s) rest.push_back(det[i]);
                }
                partitions.push_back({{det[s], -1}, {rest[0], rest[1]}});
            }
        } else {
            partitions.push_back({{det[0], det[1]}, {det[2], det[3]}});
            partitions.push_back({{det[0], det[2]}, {det[1], det[3]}});
            partitions.push_back({{det[0], det[3]}, {det[1], det[2]}});
        }
        for (const auto &parts : partitions) {
            std::vector<std::tuple<int, int, uint64_t>> keys;
            uint64_t got = 0;
            bool ok = true;
            for (auto [a, b] : parts) {
                const auto *key = edge_key(a, b);
                if (!key) {
                    ok = false;
                    break;
                }
                keys.push_back(*key);
                got ^= std::get<2>(*key);
            }
            if (!ok || got != want) continue;
            for (const auto &key : keys) {
                merged[key] = soft_xor(merged[key], m.prob);
            }
            return true;
        }
        return false;
    }

    // Exact minimum-weight matching over <= kExactLimit events via subset DP;
    // each event may also match the boundary.
    static std::vector<std::pair<int, int>> exact_matching(int k, const std::vector<std::vector<double>> &dist,
                                                           const std::vector<double> &bdist) {
        const int full = 1 << k;
        std::vector<double> dp(full, std::numeric_limits<double>::infinity());
        std::vector<std::pair<int, int>> choice(full, {-1, -1});
        dp[0] = 0;
        for (int s = 1; s < full; s++) {
            int i = 0;
            while (!(s >> i & 1)) i++;
            // Match i to the boundary.
            double best = dp[s ^ (1 << i)] + bdist[i];
            choice[s] = {i, -1};
            // Match i to another event in s.
            for (int j = i + 1; j < k; j++) {
                if (!(s >> j & 1)) continue;
                double c = dp[s ^ (1 << i) ^ (1 << j)] + dist[i][j];
                if (c < best) {
                    best = c;
                    choice[s] = {i, j};
                }
            }
            dp[s] = best;
        }
        std::vector<std::pair<int, int>> out;
        int s = full - 1;
        while (s) {
            auto [i, j] = choice[s];
            out.push_back({i, j});
            s ^= 1 << i;
            if (j >= 0) s ^= 1 << j;
        }
        return out;
    }

    static std::vector<std::pair<int, int>> greedy_matching(int k, const std::vector<std::vector<double>> &dist,
                                                            const std::vector<double> &bdist) {
        std::vector<uint8_t> used(k, 0);
        std::vector<std::pair<int, int>> out;
        int remaining = k;
        while (remaining > 0) {
            double best = std::numeric_limits<double>::infinity();
            std::pair<int, int> pick = {-1, -1};
            for (int i = 0; i < k; i++) {
                if (used[i]) continue;
                if (bdist[i] < best) {
                    best = bdist[i];
                    pick = {i, -1};
                }
                for (int j = i + 1; j < k; j++) {
                    if (used[j]) continue;
                    if (dist[i][j] < best) {
                        best = dist[i][j];
                        pick = {i, j};
                    }
                }
            }
            out.push_back(pick);
            used[pick.first] = 1;
            remaining--;
            if (pick.second >= 0) {
                used[pick.second] = 1;
                remaining--;
            }
        }
        return out;
    }
};

}  // namespace qsurf

#endif
