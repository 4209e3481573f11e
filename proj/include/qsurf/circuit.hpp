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

#ifndef QSURF_CIRCUIT_HPP
#define QSURF_CIRCUIT_HPP

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "qsurf/layout.hpp"

namespace qsurf {

enum class NoiseModel : uint8_t { SD6, SI1000 };

struct NoiseParams {
    NoiseModel model = NoiseModel::SI1000;
    double p = 0.0;
    double leakage_rate = 0.0;     // per-qubit per-2q-gate leakage injection
    double leakage_heating = 0.0;  // per-qubit per-cycle leakage injection
    double leakage_decay = 0.0;    // per-data-qubit per-cycle leakage removal
    // When true, measurement pre-flip channels are dropped; assignment noise
    // is instead modeled downstream by I/Q sampling of the readout signal.
    bool analog_readout = false;

    // Derived channel strengths. SI1000 ratios: measurement 5p, reset 2p,
    // resonator idle 2p, 2q Clifford p, 1q Clifford p/10, idle p/10.
    double meas_flip() const { return analog_readout ? 0.0 : (model == NoiseModel::SI1000 ? 5 * p : p); }
    double reset_flip() const { return model == NoiseModel::SI1000 ? 2 * p : p; }
    double resonator_idle() const { return model == NoiseModel::SI1000 ? 2 * p : p; }
    double dep2() const { return p; }
    double dep1() const { return model == NoiseModel::SI1000 ? p / 10 : p; }
    double idle() const { return model == NoiseModel::SI1000 ? p / 10 : p; }

    void validate() const {
        for (double v : {p, leakage_rate, leakage_heating, leakage_decay}) {
            if (v < 0.0 || v > 1.0) {
                throw std::invalid_argument("noise probability out of [0,1]");
            }
        }
        if (meas_flip() > 1.0 || reset_flip() > 1.0) {
            throw std::invalid_argument("derived channel strength exceeds 1");
        }
    }
};

enum class OpType : uint8_t {
    reset,        // Z-basis reset, also removes leakage
    hadamard,     //
    cx,           // targets are (control, target) pairs
    cz,           // targets are unordered pairs
    measure,      // Z-basis measurement
    measure_reset,
    dep1,         // single-qubit depolarizing
    dep2,         // two-qubit depolarizing, pairwise targets
    x_error,
    z_error,
    leak,         // move to L2 with probability prob
    leak_decay,   // leave L2 with probability prob
};

inline bool is_noise_op(OpType t) {
    switch (t) {
        case OpType::dep1:
        case OpType::dep2:
        case OpType::x_error:
        case OpType::z_error:
        case OpType::leak:
        case OpType::leak_decay:
            return true;
        default:
            return false;
    }
}

struct CircuitOp {
    OpType type;
    double prob = 0.0;          // noise ops only
    std::vector<int> targets;   // qubit indices; flattened pairs for 2q ops
};

struct DetectorDef {
    std::vector<int> measurements;  // parity of these measurement indices
    int cycle = 0;                  // 1..n for bulk, n+1 for final round
    int stabilizer = 0;             // stabilizer index the detector belongs to
};

// A memory-experiment circuit: ordered ops, detector definitions over
// measurement indices, and observable definitions over final data readouts.
struct NoisyCircuit {
    int num_qubits = 0;
    int num_measurements = 0;
    int cycles = 0;
    std::vector<CircuitOp> ops;
    std::vector<DetectorDef> detectors;
    std::vector<std::vector<int>> observables;  // one measurement set per logical line
    // Measurement bookkeeping for dataset assembly.
    int stab_count = 0;
    int data_count = 0;
    bool has_leakage = false;

    int stab_measurement(int cycle, int stab) const { return (cycle - 1) * stab_count + stab; }
    int data_measurement(int data) const { return cycles * stab_count + data; }

    void append(OpType type, std::vector<int> targets, double prob = 0.0) {
        if (targets.empty()) {
            return;
        }
        if (is_noise_op(type) && prob == 0.0) {
            return;
        }
        ops.push_back(CircuitOp{type, prob, std::move(targets)});
    }
};

namespace detail {

// CX/CZ layer schedules: data-qubit offset from the ancilla coordinate for
// each of the four layers. X and Z ancillas sweep opposite middle legs so no
// data qubit is claimed twice in one layer.
inline constexpr Coord kOrderX[4] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
inline constexpr Coord kOrderZ[4] = {{1, 1}, {-1, 1}, {1, -1}, {-1, -1}};

// XZZX sublattice: data qubits measured in the X basis for a Z-basis
// experiment (alternating diagonals).
inline bool xzzx_x_frame(const CodeLayout &layout, Coord c) {
    int s = ((c.x - c.y) / 2) % 2;
    if (s < 0) {
        s += 2;
    }
    // Align the X-frame class with the experiment basis so that on-basis
    // stabilizers are recomputable from the final per-qubit readout bases.
    return layout.basis == Basis::Z ? s == 0 : s == 1;
}

}  // namespace detail

// Builds the n-cycle memory experiment circuit with the requested noise
// model. Schedule follows the six-step CX cycle (H, four CX layers, H, MR)
// for the standard variant, or the CZ/Hadamard interleaving for the XZZX
// variant, with noise channels placed after each moment.
inline NoisyCircuit build_memory_circuit(const CodeLayout &layout, int cycles, const NoiseParams &noise) {
    if (cycles < 1) {
        throw std::invalid_argument("cycle count must be >= 1");
    }
    noise.validate();
    const int d = layout.distance;
    const int nd = layout.num_data();
    const int ns = layout.num_stabilizers();
    NoisyCircuit c;
    c.num_qubits = nd + ns;
    c.cycles = cycles;
    c.stab_count = ns;
    c.data_count = nd;
    c.has_leakage = noise.leakage_rate > 0 || noise.leakage_heating > 0;

    auto anc = [&](int stab) { return nd + stab; };
    std::vector<int> all_data(nd), all_anc(ns), all_qubits(nd + ns);
    for (int i = 0; i < nd; i++) all_data[i] = i;
    for (int i = 0; i < ns; i++) all_anc[i] = anc(i);
    for (int i = 0; i < nd + ns; i++) all_qubits[i] = i;

    std::vector<int> x_anc;
    for (const auto &s : layout.stabilizers) {
        if (s.basis == Basis::X) {
            x_anc.push_back(anc(s.index));
        }
    }
    const bool xzzx = layout.variant == Variant::cz_xzzx;
    // Per-data-qubit preparation/readout basis: X means an extra H around
    // reset and measurement.
    std::vector<uint8_t> data_x_frame(nd, 0);
    for (int q = 0; q < nd; q++) {
        if (xzzx) {
            data_x_frame[q] = detail::xzzx_x_frame(layout, layout.data_coord(q));
        } else {
            data_x_frame[q] = layout.basis == Basis::X;
        }
    }
    std::vector<int> x_frame_data;
    for (int q = 0; q < nd; q++) {
        if (data_x_frame[q]) {
            x_frame_data.push_back(q);
        }
    }

    // Emits a gate moment followed by its gate noise and idle noise on the
    // qubits that did not participate.
    auto gate_moment = [&](OpType type, const std::vector<int> &targets, double gate_noise) {
        c.append(type, targets);
        if (type == OpType::cx || type == OpType::cz) {
            c.append(OpType::dep2, targets, gate_noise);
            if (noise.leakage_rate > 0) {
                c.append(OpType::leak, targets, noise.leakage_rate);
            }
        } else {
            c.append(OpType::dep1, targets, gate_noise);
        }
        std::vector<int> idle;
        std::set<int> busy(targets.begin(), targets.end());
        for (int q : all_qubits) {
            if (!busy.count(q)) {
                idle.push_back(q);
            }
        }
        c.append(OpType::dep1, idle, noise.idle());
    };

    // --- Initialization ---
    c.append(OpType::reset, all_data);
    c.append(OpType::x_error, all_data, noise.reset_flip());
    c.append(OpType::reset, all_anc);
    c.append(OpType::x_error, all_anc, noise.reset_flip());
    if (!x_frame_data.empty()) {
        gate_moment(OpType::hadamard, x_frame_data, noise.dep1());
    }

    // --- Stabilizer cycles ---
    for (int cyc = 1; cyc <= cycles; cyc++) {
        if (noise.leakage_heating > 0) {
            c.append(OpType::leak, all_qubits, noise.leakage_heating);
        }
        if (!xzzx) {
            gate_moment(OpType::hadamard, x_anc, noise.dep1());
            for (int layer = 0; layer < 4; layer++) {
                std::vector<int> pairs;
                for (const auto &s : layout.stabilizers) {
                    Coord off = s.basis == Basis::X ? detail::kOrderX[layer] : detail::kOrderZ[layer];
                    int q = layout.data_index(Coord{s.pos.x + off.x, s.pos.y + off.y});
                    if (q < 0) {
                        continue;
                    }
                    // X ancilla is the control, Z ancilla is the target.
                    if (s.basis == Basis::X) {
                        pairs.push_back(anc(s.index));
                        pairs.push_back(q);
                    } else {
                        pairs.push_back(q);
                        pairs.push_back(anc(s.index));
                    }
                }
                gate_moment(OpType::cx, pairs, noise.dep2());
            }
            gate_moment(OpType::hadamard, x_anc, noise.dep1());
        } else {
            // XZZX: every data qubit is the X leg in layers 0 and 3 and the
            // Z leg in layers 1 and 2, so whole-grid H layers toggle the
            // frame around the outer CZ layers.
            gate_moment(OpType::hadamard, all_qubits, noise.dep1());
            for (int layer = 0; layer < 4; layer++) {
                std::vector<int> pairs;
                for (const auto &s : layout.stabilizers) {
                    Coord off = detail::kOrderX[layer];
                    int q = layout.data_index(Coord{s.pos.x + off.x, s.pos.y + off.y});
                    if (q < 0) {
                        continue;
                    }
                    pairs.push_back(anc(s.index));
                    pairs.push_back(q);
                }
                gate_moment(OpType::cz, pairs, noise.dep2());
                if (layer == 0 || layer == 2) {
                    gate_moment(OpType::hadamard, all_data, noise.dep1());
                }
            }
            gate_moment(OpType::hadamard, all_qubits, noise.dep1());
        }
        // Readout and reset of the stabilizer ancillas.
        c.append(OpType::x_error, all_anc, noise.meas_flip());
        c.append(OpType::measure_reset, all_anc);
        c.append(OpType::dep1, all_data, noise.resonator_idle());
        c.append(OpType::x_error, all_anc, noise.reset_flip());
        if (noise.leakage_decay > 0) {
            c.append(OpType::leak_decay, all_data, noise.leakage_decay);
        }
        c.num_measurements += ns;
    }

    // --- Data qubit readout ---
    if (!x_frame_data.empty()) {
        gate_moment(OpType::hadamard, x_frame_data, noise.dep1());
    }
    c.append(OpType::x_error, all_data, noise.meas_flip());
    c.append(OpType::measure, all_data);
    c.num_measurements += nd;

    // --- Detectors ---
    for (const auto &s : layout.stabilizers) {
        if (layout.on_basis(s)) {
            c.detectors.push_back(DetectorDef{{c.stab_measurement(1, s.index)}, 1, s.index});
        }
    }
    for (int cyc = 2; cyc <= cycles; cyc++) {
        for (const auto &s : layout.stabilizers) {
            c.detectors.push_back(DetectorDef{
                {c.stab_measurement(cyc - 1, s.index), c.stab_measurement(cyc, s.index)}, cyc, s.index});
        }
    }
    for (const auto &s : layout.stabilizers) {
        if (!layout.on_basis(s)) {
            continue;
        }
        DetectorDef det;
        det.cycle = cycles + 1;
        det.stabilizer = s.index;
        for (int q : s.neighbors) {
            det.measurements.push_back(c.data_measurement(q));
        }
        det.measurements.push_back(c.stab_measurement(cycles, s.index));
        c.detectors.push_back(std::move(det));
    }

    // --- Observables ---
    for (int line = 0; line < d; line++) {
        std::vector<int> meas;
        for (int q : layout.observable_line(line)) {
            meas.push_back(c.data_measurement(q));
        }
        c.observables.push_back(std::move(meas));
    }
    return c;
}

}  // namespace qsurf

#endif
