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

#ifndef QSURF_DEM_HPP
#define QSURF_DEM_HPP

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qsurf/circuit.hpp"
#include "qsurf/iq.hpp"

namespace qsurf {

struct ErrorMechanism {
    double prob = 0.0;
    std::vector<int> detectors;      // sorted
    std::vector<int> logical_flips;  // sorted
};

struct DetectorErrorModel {
    int num_detectors = 0;
    int num_observables = 0;
    std::vector<ErrorMechanism> mechanisms;
    bool skipped_leakage = false;
};

namespace detail {

// Sparse Pauli propagated forward through the Clifford part of a circuit;
// an X component on a qubit at measurement time flips that outcome.
struct PauliTracker {
    std::vector<uint8_t> x, z;
    explicit PauliTracker(int nq) : x(nq, 0), z(nq, 0) {}
};

inline void propagate_and_collect(const NoisyCircuit &circuit, size_t start_op, PauliTracker &p,
                                  std::vector<int> &flipped_measurements) {
    int m_index = 0;
    for (size_t k = 0; k < circuit.ops.size(); k++) {
        const auto &op = circuit.ops[k];
        bool active = k >= start_op;
        switch (op.type) {
            case OpType::hadamard:
                if (active) {
                    for (int q : op.targets) std::swap(p.x[q], p.z[q]);
                }
                break;
            case OpType::cx:
                if (active) {
                    for (size_t i = 0; i + 1 < op.targets.size(); i += 2) {
                        int c = op.targets[i], t = op.targets[i + 1];
                        p.x[t] ^= p.x[c];
                        p.z[c] ^= p.z[t];
                    }
                }
                break;
            case OpType::cz:
                if (active) {
                    for (size_t i = 0; i + 1 < op.targets.size(); i += 2) {
                        int a = op.targets[i], b = op.targets[i + 1];
                        p.z[b] ^= p.x[a];
                        p.z[a] ^= p.x[b];
                    }
                }
                break;
            case OpType::reset:
                if (active) {
                    for (int q : op.targets) p.x[q] = p.z[q] = 0;
                }
                break;
            case OpType::measure:
            case OpType::measure_reset:
                for (int q : op.targets) {
                    if (active && p.x[q]) flipped_measurements.push_back(m_index);
                    if (active && op.type == OpType::measure_reset) p.x[q] = p.z[q] = 0;
                    m_index++;
                }
                break;
            default:
                break;  // stochastic channels are transparent to propagation
        }
    }
}

}  // namespace detail

// Deterministic forward-conjugation extraction: every Pauli component of
// every stochastic channel is pushed through the rest of the circuit to find
// the detectors and logical observables it flips. Identical signatures merge
// under the XOR-probability rule; signatures touching nothing are dropped.
// Leakage channels are outside the Pauli model and are skipped (flagged).
inline DetectorErrorModel extract_dem(const NoisyCircuit &circuit) {
    DetectorErrorModel dem;
    dem.num_detectors = static_cast<int>(circuit.detectors.size());
    dem.num_observables = static_cast<int>(circuit.observables.size());

    // Measurement index -> detectors / observables containing it.
    std::vector<std::vector<int>> det_of(circuit.num_measurements), obs_of(circuit.num_measurements);
    for (int d = 0; d < dem.num_detectors; d++) {
        for (int m : circuit.detectors[d].measurements) det_of[m].push_back(d);
    }
    for (int o = 0; o < dem.num_observables; o++) {
        for (int m : circuit.observables[o]) obs_of[m].push_back(o);
    }

    std::map<std::pair<std::vector<int>, std::vector<int>>, double> merged;
    auto add_mechanism = [&](const detail::PauliTracker &seed, size_t op_index, double prob) {
        if (prob <= 0.0) return;
        detail::PauliTracker p = seed;
        std::vector<int> flips;
        detail::propagate_and_collect(circuit, op_index + 1, p, flips);
        std::vector<uint8_t> det(dem.num_detectors, 0), obs(dem.num_observables, 0);
        for (int m : flips) {
            for (int d : det_of[m]) det[d] ^= 1;
            for (int o : obs_of[m]) obs[o] ^= 1;
        }
        std::vector<int> dets, obss;
        for (int d = 0; d < dem.num_detectors; d++) {
            if (det[d]) dets.push_back(d);
        }
        for (int o = 0; o < dem.num_observables; o++) {
            if (obs[o]) obss.push_back(o);
        }
        if (dets.empty() && obss.empty()) return;
        double &q = merged[{dets, obss}];
        q = soft_xor(q, prob);
    };

    const int nq = circuit.num_qubits;
    for (size_t k = 0; k < circuit.ops.size(); k++) {
        const auto &op = circuit.ops[k];
        detail::PauliTracker seed(nq);
        auto component = [&](int q, bool sx, bool sz) {
            seed.x.assign(nq, 0);
            seed.z.assign(nq, 0);
            seed.x[q] = sx;
            seed.z[q] = sz;
        };
        switch (op.type) {
            case OpType::x_error:
                for (int q : op.targets) {
                    component(q, true, false);
                    add_mechanism(seed, k, op.prob);
                }
                break;
            case OpType::z_error:
                for (int q : op.targets) {
                    component(q, false, true);
                    add_mechanism(seed, k, op.prob);
                }
                break;
            case OpType::dep1:
                for (int q : op.targets) {
                    for (int pauli = 1; pauli < 4; pauli++) {  // X, Y, Z
                        component(q, pauli != 3, pauli != 1);
                        add_mechanism(seed, k, op.prob / 3.0);
                    }
                }
                break;
            case OpType::dep2:
                for (size_t i = 0; i + 1 < op.targets.size(); i += 2) {
                    int a = op.targets[i], b = op.targets[i + 1];
                    for (int which = 1; which < 16; which++) {
                        int pa = which / 4, pb = which % 4;
                        seed.x.assign(nq, 0);
                        seed.z.assign(nq, 0);
                        seed.x[a] = (pa == 1 || pa == 2);
                        seed.z[a] = (pa == 2 || pa == 3);
                        seed.x[b] = (pb == 1 || pb == 2);
                        seed.z[b] = (pb == 2 || pb == 3);
                        add_mechanism(seed, k, op.prob / 15.0);
                    }
                }
                break;
            case OpType::leak:
            case OpType::leak_decay:
                if (op.prob > 0) dem.skipped_leakage = true;
                break;
            default:
                break;
        }
    }

    for (auto &[key, prob] : merged) {
        if (prob <= 0.0) continue;
        dem.mechanisms.push_back({prob, key.first, key.second});
    }
    return dem;
}

struct DemSample {
    std::vector<uint8_t> events;
    std::vector<uint8_t> flips;
};

inline DemSample sample_dem(const DetectorErrorModel &dem, std::mt19937_64 &rng) {
    DemSample s;
    s.events.assign(dem.num_detectors, 0);
    s.flips.assign(dem.num_observables, 0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (const auto &mech : dem.mechanisms) {
        if (unif(rng) < mech.prob) {
            for (int d : mech.detectors) s.events[d] ^= 1;
            for (int o : mech.logical_flips) s.flips[o] ^= 1;
        }
    }
    return s;
}

inline DetectorErrorModel scale_dem(const DetectorErrorModel &dem, double f) {
    if (f <= 0.0 || f > 1.0) {
        throw std::invalid_argument("scale_dem: factor must be in (0, 1]");
    }
    DetectorErrorModel out = dem;
    for (auto &mech : out.mechanisms) {
        mech.prob *= f;
    }
    return out;
}

struct MlDecodeResult {
    std::vector<uint8_t> flips;
    double posterior = 0.0;
};

// Exhaustive maximum-likelihood decoding over all 2^K mechanism subsets.
// Only usable on tiny DEMs; larger instances must use the layered decoder.
inline MlDecodeResult brute_force_ml_decode(const DetectorErrorModel &dem, const std::vector<uint8_t> &events) {
    const int k = static_cast<int>(dem.mechanisms.size());
    if (k > 24) {
        throw std::invalid_argument("brute_force_ml_decode: " + std::to_string(k) + " mechanisms exceeds the cap of 24");
    }
    if (static_cast<int>(events.size()) != dem.num_detectors) {
        throw std::invalid_argument("brute_force_ml_decode: event vector size mismatch");
    }
    if (dem.num_detectors > 64 || dem.num_observables > 64) {
        throw std::invalid_argument("brute_force_ml_decode: too many detectors or observables");
    }
    uint64_t target = 0;
    for (int d = 0; d < dem.num_detectors; d++) {
        if (events[d]) target |= uint64_t{1} << d;
    }
    std::vector<uint64_t> det_mask(k, 0), obs_mask(k, 0);
    std::vector<double> odds(k);
    double base = 1.0;
    for (int i = 0; i < k; i++) {
        for (int d : dem.mechanisms[i].detectors) det_mask[i] |= uint64_t{1} << d;
        for (int o : dem.mechanisms[i].logical_flips) obs_mask[i] |= uint64_t{1} << o;
        double p = dem.mechanisms[i].prob;
        odds[i] = p / (1.0 - p);
        base *= 1.0 - p;
    }
    std::map<uint64_t, double> class_mass;
    double total = 0.0;
    for (uint64_t subset = 0; subset < (uint64_t{1} << k); subset++) {
        uint64_t det = 0, obs = 0;
        double w = base;
        for (int i = 0; i < k; i++) {
            if (subset >> i & 1) {
                det ^= det_mask[i];
                obs ^= obs_mask[i];
                w *= odds[i];
            }
        }
        if (det != target) continue;
        class_mass[obs] += w;
        total += w;
    }
    if (total <= 0.0) {
        throw std::runtime_error("brute_force_ml_decode: observed events are unreachable in this DEM");
    }
    uint64_t best = 0;
    double best_mass = -1.0;
    for (const auto &[obs, mass] : class_mass) {
        if (mass > best_mass) {
            best_mass = mass;
            best = obs;
        }
    }
    MlDecodeResult out;
    out.flips.assign(dem.num_observables, 0);
    for (int o = 0; o < dem.num_observables; o++) {
        out.flips[o] = (best >> o) & 1;
    }
    out.posterior = best_mass / total;
    return out;
}

// One mechanism per line: `error(<p>) D<i> ... L<k> ...`.
inline std::string serialize_dem(const DetectorErrorModel &dem) {
    std::ostringstream out;
    out << "dem " << dem.num_detectors << " " << dem.num_observables << "\n";
    char buf[64];
    for (const auto &mech : dem.mechanisms) {
        std::snprintf(buf, sizeof buf, "%.17g", mech.prob);
        out << "error(" << buf << ")";
        for (int d : mech.detectors) out << " D" << d;
        for (int o : mech.logical_flips) out << " L" << o;
        out << "\n";
    }
    return out.str();
}

inline DetectorErrorModel parse_dem(const std::string &text) {
    DetectorErrorModel dem;
    std::istringstream in(text);
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "dem") {
            if (!(ls >> dem.num_detectors >> dem.num_observables)) {
                throw std::invalid_argument("parse_dem: bad header");
            }
            have_header = true;
            continue;
        }
        if (tok.rfind("error(", 0) != 0 || tok.back() != ')') {
            throw std::invalid_argument("parse_dem: bad mechanism line: " + line);
        }
        ErrorMechanism mech;
        mech.prob = std::stod(tok.substr(6, tok.size() - 7));
        std::string target;
        while (ls >> target) {
            if (target.size() < 2) throw std::invalid_argument("parse_dem: bad target: " + target);
            int idx = std::stoi(target.substr(1));
            if (target[0] == 'D') {
                mech.detectors.push_back(idx);
            } else if (target[0] == 'L') {
                mech.logical_flips.push_back(idx);
            } else {
                throw std::invalid_argument("parse_dem: bad target: " + target);
            }
        }
        dem.mechanisms.push_back(std::move(mech));
    }
    if (!have_header) {
        throw std::invalid_argument("parse_dem: missing header");
    }
    for (const auto &mech : dem.mechanisms) {
        for (int d : mech.detectors) {
            if (d < 0 || d >= dem.num_detectors) throw std::invalid_argument("parse_dem: detector out of range");
        }
        for (int o : mech.logical_flips) {
            if (o < 0 || o >= dem.num_observables) throw std::invalid_argument("parse_dem: observable out of range");
        }
    }
    return dem;
}

}  // namespace qsurf

#endif
