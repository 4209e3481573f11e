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

#ifndef QSURF_FRAME_SIM_HPP
#define QSURF_FRAME_SIM_HPP

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "qsurf/circuit.hpp"
#include "qsurf/iq.hpp"
#include "qsurf/rng.hpp"

namespace qsurf {

// Raw per-measurement outcome: the frame flip relative to the noiseless
// reference (which is 0 for every measurement by construction) plus the
// ground-truth leakage flag.
struct RawShot {
    std::vector<uint8_t> bits;
    std::vector<uint8_t> leaked;

    // Leaked states read out nearest to |1> in the z ordering, so a decoder
    // without leakage awareness sees them as 1.
    uint8_t hard_bit(int m) const { return leaked[m] ? 1 : bits[m]; }
};

// Pauli frame per qubit, extended with a single leaked level. Leaked qubits
// carry no Pauli label; reset and measure+reset return them to the
// computational subspace.
class FrameSimulator {
  public:
    explicit FrameSimulator(int num_qubits) : x_(num_qubits, 0), z_(num_qubits, 0), leak_(num_qubits, 0) {}

    RawShot run(const NoisyCircuit &circuit, std::mt19937_64 &rng) {
        std::fill(x_.begin(), x_.end(), 0);
        std::fill(z_.begin(), z_.end(), 0);
        std::fill(leak_.begin(), leak_.end(), 0);
        RawShot shot;
        shot.bits.reserve(circuit.num_measurements);
        shot.leaked.reserve(circuit.num_measurements);
        for (const auto &op : circuit.ops) {
            apply(op, rng, shot);
        }
        return shot;
    }

  private:
    std::vector<uint8_t> x_, z_, leak_;

    double uniform(std::mt19937_64 &rng) {
        return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    }

    void random_pauli(int q, std::mt19937_64 &rng) {
        // Uniform over {I, X, Y, Z}.
        uint64_t r = rng();
        x_[q] ^= static_cast<uint8_t>(r & 1);
        z_[q] ^= static_cast<uint8_t>((r >> 1) & 1);
    }

    void nonidentity_pauli(int q, std::mt19937_64 &rng) {
        int which = static_cast<int>(rng() % 3);  // X, Z, Y
        if (which != 1) x_[q] ^= 1;
        if (which != 0) z_[q] ^= 1;
    }

    void reset(int q, std::mt19937_64 &rng) {
        leak_[q] = 0;
        x_[q] = 0;
        // Randomized Z component stands in for the measurement randomness of
        // superposed states; all deterministic parities cancel it.
        z_[q] = static_cast<uint8_t>(rng() & 1);
    }

    void apply(const CircuitOp &op, std::mt19937_64 &rng, RawShot &shot) {
        const auto &t = op.targets;
        switch (op.type) {
            case OpType::reset:
                for (int q : t) reset(q, rng);
                break;
            case OpType::hadamard:
                for (int q : t) {
                    if (!leak_[q]) std::swap(x_[q], z_[q]);
                }
                break;
            case OpType::cx:
                for (size_t k = 0; k + 1 < t.size(); k += 2) {
                    int c = t[k], d = t[k + 1];
                    if (leak_[c] || leak_[d]) {
                        if (!leak_[c]) random_pauli(c, rng);
                        if (!leak_[d]) random_pauli(d, rng);
                    } else {
                        x_[d] ^= x_[c];
                        z_[c] ^= z_[d];
                    }
                }
                break;
            case OpType::cz:
                for (size_t k = 0; k + 1 < t.size(); k += 2) {
                    int a = t[k], b = t[k + 1];
                    if (leak_[a] || leak_[b]) {
                        if (!leak_[a]) random_pauli(a, rng);
                        if (!leak_[b]) random_pauli(b, rng);
                    } else {
                        z_[a] ^= x_[b];
                        z_[b] ^= x_[a];
                    }
                }
                break;
            case OpType::measure:
            case OpType::measure_reset:
                for (int q : t) {
                    shot.bits.push_back(x_[q]);
                    shot.leaked.push_back(leak_[q]);
                    if (op.type == OpType::measure_reset) {
                        reset(q, rng);
                    }
                }
                break;
            case OpType::dep1:
                for (int q : t) {
                    if (!leak_[q] && uniform(rng) < op.prob) nonidentity_pauli(q, rng);
                }
                break;
            case OpType::dep2:
                for (size_t k = 0; k + 1 < t.size(); k += 2) {
                    int a = t[k], b = t[k + 1];
                    if (uniform(rng) < op.prob) {
                        int which = static_cast<int>(rng() % 15) + 1;  // non-identity 2q Pauli
                        int pa = which / 4, pb = which % 4;            // 0=I,1=X,2=Y,3=Z
                        if (!leak_[a]) {
                            if (pa == 1 || pa == 2) x_[a] ^= 1;
                            if (pa == 2 || pa == 3) z_[a] ^= 1;
                        }
                        if (!leak_[b]) {
                            if (pb == 1 || pb == 2) x_[b] ^= 1;
                            if (pb == 2 || pb == 3) z_[b] ^= 1;
                        }
                    }
                }
                break;
            case OpType::x_error:
                for (int q : t) {
                    if (!leak_[q] && uniform(rng) < op.prob) x_[q] ^= 1;
                }
                break;
            case OpType::z_error:
                for (int q : t) {
                    if (!leak_[q] && uniform(rng) < op.prob) z_[q] ^= 1;
                }
                break;
            case OpType::leak:
                for (int q : t) {
                    if (uniform(rng) < op.prob) {
                        leak_[q] = 1;
                        x_[q] = z_[q] = 0;
                    }
                }
                break;
            case OpType::leak_decay:
                for (int q : t) {
                    if (leak_[q] && uniform(rng) < op.prob) {
                        leak_[q] = 0;
                        random_pauli(q, rng);
                    }
                }
                break;
        }
    }
};

inline RawShot simulate_shot(const NoisyCircuit &circuit, uint64_t seed, uint64_t shot_index = 0) {
    FrameSimulator sim(circuit.num_qubits);
    auto rng = split_rng(seed, shot_index);
    return sim.run(circuit, rng);
}

// Hard detection-event bits in detector-definition order.
inline std::vector<uint8_t> detector_bits(const NoisyCircuit &circuit, const RawShot &shot) {
    std::vector<uint8_t> out;
    out.reserve(circuit.detectors.size());
    for (const auto &det : circuit.detectors) {
        uint8_t parity = 0;
        for (int m : det.measurements) {
            parity ^= shot.hard_bit(m);
        }
        out.push_back(parity);
    }
    return out;
}

inline std::vector<uint8_t> observable_bits(const NoisyCircuit &circuit, const RawShot &shot) {
    std::vector<uint8_t> out;
    out.reserve(circuit.observables.size());
    for (const auto &obs : circuit.observables) {
        uint8_t parity = 0;
        for (int m : obs) {
            parity ^= shot.hard_bit(m);
        }
        out.push_back(parity);
    }
    return out;
}

// One experiment's per-cycle stabilizer data plus final-round inputs and
// labels, in the exact form consumed by the decoders.
//
// Bulk arrays are flattened (cycle-major) over cycles 1..n and stabilizer
// index. Off-basis measurements are XORed with their first-cycle value so
// the initial random frame is zero, and off-basis first-cycle events are
// zeroed. Final-round data-qubit readouts are always thresholded before
// computing final stabilizers, and labels come from the frame ground truth,
// never from readout-noise-corrupted values.
struct ShotRecord {
    int cycles = 0;
    int stab_count = 0;
    std::vector<float> measurements;      // hard bit or post1 (adjusted)
    std::vector<float> events;            // hard event or SoftXOR event
    std::vector<float> leak_post;         // post2 (empty when leakage inputs off)
    std::vector<float> leak_events;       // SoftXOR temporal difference of post2
    std::vector<uint8_t> final_stabs;     // computed on-basis final stabilizers
    std::vector<float> final_events;      // final stab vs last measured cycle
    std::vector<uint8_t> detectors;       // hard detector bits, DEM order
    std::vector<uint8_t> labels;          // ground-truth flip per observable line

    float measurement(int cycle, int stab) const { return measurements[(cycle - 1) * stab_count + stab]; }
    float event(int cycle, int stab) const { return events[(cycle - 1) * stab_count + stab]; }
};

struct DatasetOptions {
    std::optional<ReadoutParams> readout;  // nullopt -> hard readout
    bool leakage_inputs = false;
};

inline float soft_xor_f(float p, float q) {
    return p * (1 - q) + (1 - p) * q;
}

// Turns one raw shot into a ShotRecord, sampling the analog readout signal
// when enabled.
inline ShotRecord assemble_record(const NoisyCircuit &circuit, const CodeLayout &layout, const RawShot &raw,
                                  const DatasetOptions &opts, std::mt19937_64 &rng) {
    const int n = circuit.cycles;
    const int ns = circuit.stab_count;
    const int nd = circuit.data_count;
    ShotRecord rec;
    rec.cycles = n;
    rec.stab_count = ns;

    // Per-measurement hard bit and posteriors.
    std::vector<uint8_t> hard(circuit.num_measurements);
    std::vector<float> post1(circuit.num_measurements, 0.0f);
    std::vector<float> post2(circuit.num_measurements, 0.0f);
    for (int m = 0; m < circuit.num_measurements; m++) {
        int state = raw.leaked[m] ? 2 : raw.bits[m];
        if (opts.readout.has_value()) {
            double z = sample_z(state, *opts.readout, rng);
            auto post = posterior(z, *opts.readout);
            post1[m] = static_cast<float>(post.post1);
            post2[m] = static_cast<float>(post.post2);
            hard[m] = post.post1 > 0.5 ? 1 : 0;
        } else {
            hard[m] = raw.leaked[m] ? 1 : raw.bits[m];
            post1[m] = hard[m];
            post2[m] = raw.leaked[m] ? 1.0f : 0.0f;
        }
    }

    std::vector<uint8_t> on_basis(ns, 0);
    for (const auto &s : layout.stabilizers) {
        on_basis[s.index] = layout.on_basis(s);
    }

    rec.measurements.resize(static_cast<size_t>(n) * ns);
    rec.events.resize(static_cast<size_t>(n) * ns);
    if (opts.leakage_inputs) {
        rec.leak_post.resize(static_cast<size_t>(n) * ns);
        rec.leak_events.resize(static_cast<size_t>(n) * ns);
    }
    for (int cyc = 1; cyc <= n; cyc++) {
        for (int i = 0; i < ns; i++) {
            int m = circuit.stab_measurement(cyc, i);
            int m_first = circuit.stab_measurement(1, i);
            size_t k = static_cast<size_t>(cyc - 1) * ns + i;
            float meas = post1[m];
            if (!on_basis[i]) {
                // Remove the initially random off-basis frame.
                meas = soft_xor_f(meas, hard[m_first]);
            }
            rec.measurements[k] = meas;
            if (cyc == 1) {
                rec.events[k] = on_basis[i] ? post1[m] : 0.0f;
            } else {
                int m_prev = circuit.stab_measurement(cyc - 1, i);
                rec.events[k] = soft_xor_f(post1[m], post1[m_prev]);
            }
            if (opts.leakage_inputs) {
                rec.leak_post[k] = post2[m];
                float prev = cyc == 1 ? 0.0f : post2[circuit.stab_measurement(cyc - 1, i)];
                rec.leak_events[k] = soft_xor_f(post2[m], prev);
            }
        }
    }

    // Final round: thresholded data-qubit readout only.
    std::vector<uint8_t> data_bits(nd);
    for (int q = 0; q < nd; q++) {
        data_bits[q] = hard[circuit.data_measurement(q)];
    }
    rec.final_stabs = final_stabilizers(layout, data_bits);
    rec.final_events.reserve(rec.final_stabs.size());
    int on_pos = 0;
    for (const auto &s : layout.stabilizers) {
        if (!on_basis[s.index]) {
            continue;
        }
        int m_last = circuit.stab_measurement(n, s.index);
        rec.final_events.push_back(soft_xor_f(rec.final_stabs[on_pos], post1[m_last]));
        on_pos++;
    }

    // Detector bits from thresholded values, aligned with DEM detectors.
    rec.detectors.reserve(circuit.detectors.size());
    for (const auto &det : circuit.detectors) {
        uint8_t parity = 0;
        for (int m : det.measurements) {
            parity ^= hard[m];
        }
        rec.detectors.push_back(parity);
    }

    // Ground-truth labels from the frame, before any readout sampling.
    for (const auto &obs : circuit.observables) {
        uint8_t parity = 0;
        for (int m : obs) {
            parity ^= raw.hard_bit(m);
        }
        rec.labels.push_back(parity);
    }
    return rec;
}

inline ShotRecord sample_shot(const NoisyCircuit &circuit, const CodeLayout &layout, const DatasetOptions &opts,
                              uint64_t seed, uint64_t shot_index) {
    auto rng = split_rng(seed, shot_index);
    FrameSimulator sim(circuit.num_qubits);
    RawShot raw = sim.run(circuit, rng);
    // Readout sampling uses its own stream so that shared-bulk replays at
    // different durations draw identical z values for the shared prefix.
    auto readout_rng = split_rng(seed ^ 0x9e3779b97f4a7c15ull, shot_index);
    return assemble_record(circuit, layout, raw, opts, readout_rng);
}

inline std::vector<ShotRecord> sample_dataset(const NoisyCircuit &circuit, const CodeLayout &layout,
                                              size_t n_shots, const DatasetOptions &opts, uint64_t seed) {
    std::vector<ShotRecord> out;
    out.reserve(n_shots);
    for (size_t s = 0; s < n_shots; s++) {
        out.push_back(sample_shot(circuit, layout, opts, seed, s));
    }
    return out;
}

// Per-duration final stabilizers and labels sharing the bulk randomness:
// simulating the duration-n circuit with the same per-shot stream replays
// the first n cycles draw-for-draw.
struct MultiDurationShot {
    ShotRecord bulk;                                 // the longest-duration record
    std::vector<std::vector<uint8_t>> final_stabs;   // per duration 1..N
    std::vector<std::vector<float>> final_events;    // per duration 1..N
    std::vector<std::vector<uint8_t>> labels;        // per duration 1..N
};

inline MultiDurationShot sample_multi_duration(const CodeLayout &layout, int max_cycles, const NoiseParams &noise,
                                               const DatasetOptions &opts, uint64_t seed, uint64_t shot_index) {
    MultiDurationShot out;
    for (int n = 1; n <= max_cycles; n++) {
        auto circuit = build_memory_circuit(layout, n, noise);
        ShotRecord rec = sample_shot(circuit, layout, opts, seed, shot_index);
        out.final_stabs.push_back(rec.final_stabs);
        out.final_events.push_back(rec.final_events);
        out.labels.push_back(rec.labels);
        if (n == max_cycles) {
            out.bulk = std::move(rec);
        }
    }
    return out;
}

}  // namespace qsurf

#endif
