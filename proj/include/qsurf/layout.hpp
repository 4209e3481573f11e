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

#ifndef QSURF_LAYOUT_HPP
#define QSURF_LAYOUT_HPP

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qsurf {

enum class Basis : uint8_t { X, Z };

enum class Variant : uint8_t {
    cnot_standard,  // CSS circuit with CX gates
    cz_xzzx,        // XZZX circuit with CZ gates and interleaved Hadamards
};

inline char basis_char(Basis b) {
    return b == Basis::X ? 'X' : 'Z';
}

struct Coord {
    int x = 0;
    int y = 0;
    bool operator==(const Coord &other) const = default;
};

struct Stabilizer {
    int index = 0;
    Coord pos;  // odd-odd interstitial coordinate
    Basis basis = Basis::Z;
    std::vector<int> neighbors;  // data qubit indices, 2 or 4 of them
};

// Geometry of a distance-d rotated surface code.
//
// Data qubits live at even-even coordinates (2c, 2r) for r, c in 0..d-1 and
// are indexed row-major. Stabilizers live at odd-odd interstitial coordinates
// and are indexed row-major over that grid, so indices are stable across
// rebuilds and usable as embedding indices.
struct CodeLayout {
    int distance = 0;
    Basis basis = Basis::Z;
    Variant variant = Variant::cnot_standard;
    std::vector<Coord> data_qubits;
    std::vector<Stabilizer> stabilizers;

    int num_data() const { return distance * distance; }
    int num_stabilizers() const { return static_cast<int>(stabilizers.size()); }
    int num_on_basis() const { return (distance * distance - 1) / 2; }

    int data_index(Coord c) const {
        if (c.x < 0 || c.y < 0 || c.x > 2 * (distance - 1) || c.y > 2 * (distance - 1) || c.x % 2 || c.y % 2) {
            return -1;
        }
        return (c.y / 2) * distance + c.x / 2;
    }

    Coord data_coord(int index) const {
        return Coord{2 * (index % distance), 2 * (index / distance)};
    }

    bool on_basis(const Stabilizer &s) const { return s.basis == basis; }

    // Indices of on-basis stabilizers, in stabilizer index order.
    std::vector<int> on_basis_indices() const {
        std::vector<int> out;
        for (const auto &s : stabilizers) {
            if (on_basis(s)) {
                out.push_back(s.index);
            }
        }
        return out;
    }

    // Data qubit indices of observable line `line` (rows for Z basis,
    // columns for X basis).
    std::vector<int> observable_line(int line) const {
        if (line < 0 || line >= distance) {
            throw std::invalid_argument("observable line out of range");
        }
        std::vector<int> out(distance);
        for (int k = 0; k < distance; k++) {
            out[k] = basis == Basis::Z ? line * distance + k : k * distance + line;
        }
        return out;
    }
};

inline CodeLayout build_layout(int distance, Basis basis, Variant variant = Variant::cnot_standard) {
    if (distance < 3 || distance % 2 == 0) {
        throw std::invalid_argument(
            "code distance must be an odd integer >= 3, got " + std::to_string(distance));
    }
    CodeLayout layout;
    layout.distance = distance;
    layout.basis = basis;
    layout.variant = variant;
    layout.data_qubits.reserve(static_cast<size_t>(distance) * distance);
    for (int r = 0; r < distance; r++) {
        for (int c = 0; c < distance; c++) {
            layout.data_qubits.push_back(Coord{2 * c, 2 * r});
        }
    }
    // Plaquette (a, b) has center (2a-1, 2b-1) and covers up to four data
    // qubits at its corners. Bulk plaquettes are kept unconditionally;
    // boundary half-plaquettes exist only where the checkerboard basis
    // matches the edge (Z on left/right, X on top/bottom).
    for (int b = 0; b <= distance; b++) {
        for (int a = 0; a <= distance; a++) {
            Coord pos{2 * a - 1, 2 * b - 1};
            std::vector<int> neighbors;
            for (Coord delta : {Coord{-1, -1}, Coord{1, -1}, Coord{-1, 1}, Coord{1, 1}}) {
                int idx = layout.data_index(Coord{pos.x + delta.x, pos.y + delta.y});
                if (idx >= 0) {
                    neighbors.push_back(idx);
                }
            }
            Basis sb = (a + b) % 2 == 0 ? Basis::Z : Basis::X;
            bool keep = false;
            if (neighbors.size() == 4) {
                keep = true;
            } else if (neighbors.size() == 2) {
                bool left_right = (a == 0 || a == distance);
                keep = left_right ? sb == Basis::Z : sb == Basis::X;
            }
            if (keep) {
                Stabilizer s;
                s.index = static_cast<int>(layout.stabilizers.size());
                s.pos = pos;
                s.basis = sb;
                s.neighbors = std::move(neighbors);
                layout.stabilizers.push_back(std::move(s));
            }
        }
    }
    if (layout.num_stabilizers() != distance * distance - 1) {
        throw std::logic_error("layout construction produced wrong stabilizer count");
    }
    return layout;
}

// Parity bits of the on-basis stabilizers, computed from a full set of
// data qubit bits (the final-round recomputation).
inline std::vector<uint8_t> final_stabilizers(const CodeLayout &layout, const std::vector<uint8_t> &data_bits) {
    if (static_cast<int>(data_bits.size()) != layout.num_data()) {
        throw std::invalid_argument("expected " + std::to_string(layout.num_data()) + " data bits");
    }
    std::vector<uint8_t> out;
    out.reserve(layout.num_on_basis());
    for (const auto &s : layout.stabilizers) {
        if (!layout.on_basis(s)) {
            continue;
        }
        uint8_t parity = 0;
        for (int q : s.neighbors) {
            parity ^= data_bits[q] & 1;
        }
        out.push_back(parity);
    }
    return out;
}

// One parity bit per equivalent observable line.
inline std::vector<uint8_t> logical_readout(const CodeLayout &layout, const std::vector<uint8_t> &data_bits) {
    if (static_cast<int>(data_bits.size()) != layout.num_data()) {
        throw std::invalid_argument("expected " + std::to_string(layout.num_data()) + " data bits");
    }
    std::vector<uint8_t> out(layout.distance, 0);
    for (int line = 0; line < layout.distance; line++) {
        for (int q : layout.observable_line(line)) {
            out[line] ^= data_bits[q] & 1;
        }
    }
    return out;
}

// Deterministic text listing for golden-file tests.
inline std::string layout_dump(const CodeLayout &layout) {
    std::ostringstream ss;
    ss << "d=" << layout.distance << " basis=" << basis_char(layout.basis) << "\n";
    for (const auto &s : layout.stabilizers) {
        ss << s.index << " (" << s.pos.x << "," << s.pos.y << ") " << basis_char(s.basis);
        for (int q : s.neighbors) {
            ss << " " << q;
        }
        ss << "\n";
    }
    return ss.str();
}

}  // namespace qsurf

#endif
