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

#include "qsurf/layout.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "gtest/gtest.h"

namespace qsurf {
namespace {

TEST(Layout, StabilizerCounts) {
    for (int d : {3, 5, 7, 9, 11}) {
        auto layout = build_layout(d, Basis::Z, Variant::cnot_standard);
        EXPECT_EQ(layout.num_data(), d * d);
        EXPECT_EQ(layout.num_stabilizers(), d * d - 1);
        int nx = 0, nz = 0, bulk = 0, boundary = 0;
        for (const auto &s : layout.stabilizers) {
            (s.basis == Basis::X ? nx : nz)++;
            if (s.neighbors.size() == 4) {
                bulk++;
            } else {
                ASSERT_EQ(s.neighbors.size(), 2u);
                boundary++;
            }
        }
        EXPECT_EQ(nx, (d * d - 1) / 2);
        EXPECT_EQ(nz, (d * d - 1) / 2);
        EXPECT_EQ(boundary, 2 * (d - 1));
        EXPECT_EQ(bulk, d * d - 1 - 2 * (d - 1));
    }
    auto d3 = build_layout(3, Basis::Z, Variant::cnot_standard);
    EXPECT_EQ(d3.num_stabilizers(), 8);
    int bulk3 = 0;
    for (const auto &s : d3.stabilizers) bulk3 += s.neighbors.size() == 4;
    EXPECT_EQ(bulk3, 4);
    EXPECT_EQ(build_layout(5, Basis::X, Variant::cnot_standard).num_stabilizers(), 24);
    auto d11 = build_layout(11, Basis::Z, Variant::cz_xzzx);
    EXPECT_EQ(d11.num_stabilizers(), 120);
    EXPECT_EQ(d11.num_data(), 121);
}

TEST(Layout, RejectsBadDistance) {
    EXPECT_THROW(build_layout(2, Basis::Z, Variant::cnot_standard), std::invalid_argument);
    EXPECT_THROW(build_layout(4, Basis::Z, Variant::cnot_standard), std::invalid_argument);
    EXPECT_THROW(build_layout(1, Basis::X, Variant::cnot_standard), std::invalid_argument);
}

TEST(Layout, Commutation) {
    auto layout = build_layout(5, Basis::Z, Variant::cnot_standard);
    for (const auto &a : layout.stabilizers) {
        for (const auto &b : layout.stabilizers) {
            if (a.basis == b.basis) continue;
            std::set<int> sa(a.neighbors.begin(), a.neighbors.end());
            int shared = 0;
            for (int q : b.neighbors) shared += sa.count(q);
            EXPECT_TRUE(shared == 0 || shared == 2) << "stabilizers " << a.index << "," << b.index;
        }
    }
}

TEST(Layout, FinalStabilizerFlips) {
    for (Basis basis : {Basis::Z, Basis::X}) {
        auto layout = build_layout(5, basis, Variant::cnot_standard);
        std::vector<uint8_t> zeros(layout.num_data(), 0);
        auto base = final_stabilizers(layout, zeros);
        for (uint8_t b : base) EXPECT_EQ(b, 0);

        // On-basis adjacency count per data qubit, from the layout itself.
        auto flips_for = [&](int q) {
            auto bits = zeros;
            bits[q] = 1;
            auto stabs = final_stabilizers(layout, bits);
            int flips = 0;
            for (size_t i = 0; i < stabs.size(); i++) flips += stabs[i] != base[i];
            return flips;
        };
        int d = layout.distance;
        // Corners touch exactly one on-basis stabilizer.
        for (int q : {layout.data_index({0, 0}), layout.data_index({2 * (d - 1), 0}),
                      layout.data_index({0, 2 * (d - 1)}), layout.data_index({2 * (d - 1), 2 * (d - 1)})}) {
            EXPECT_EQ(flips_for(q), 1);
        }
        // A bulk qubit touches exactly two.
        EXPECT_EQ(flips_for(layout.data_index({4, 4})), 2);
    }
    auto layout = build_layout(3, Basis::Z, Variant::cnot_standard);
    EXPECT_THROW(final_stabilizers(layout, std::vector<uint8_t>(5, 0)), std::invalid_argument);
}

TEST(Layout, LogicalReadout) {
    for (Basis basis : {Basis::Z, Basis::X}) {
        auto layout = build_layout(5, basis, Variant::cnot_standard);
        int d = layout.distance;
        std::vector<uint8_t> bits(layout.num_data(), 0);
        auto base = logical_readout(layout, bits);
        ASSERT_EQ(static_cast<int>(base.size()), d);
        for (uint8_t b : base) EXPECT_EQ(b, 0);

        // Flipping one full line flips exactly that line's bit.
        for (int line = 0; line < d; line++) {
            std::fill(bits.begin(), bits.end(), 0);
            for (int q : layout.observable_line(line)) bits[q] = 1;
            auto out = logical_readout(layout, bits);
            for (int j = 0; j < d; j++) {
                EXPECT_EQ(out[j], j == line ? 1 : 0);
            }
        }

        // Random bits against an independent coordinate-arithmetic parity.
        std::mt19937_64 rng(7);
        for (int trial = 0; trial < 50; trial++) {
            for (auto &b : bits) b = rng() & 1;
            auto out = logical_readout(layout, bits);
            for (int line = 0; line < d; line++) {
                uint8_t parity = 0;
                for (int q = 0; q < layout.num_data(); q++) {
                    Coord c = layout.data_coord(q);
                    int along = basis == Basis::Z ? c.y : c.x;
                    if (along == 2 * line) parity ^= bits[q];
                }
                EXPECT_EQ(out[line], parity);
            }
        }
    }
}

TEST(Layout, StabilizerSupportPreservesLogicals) {
    for (Basis basis : {Basis::Z, Basis::X}) {
        auto layout = build_layout(5, basis, Variant::cnot_standard);
        std::mt19937_64 rng(11);
        std::vector<uint8_t> bits(layout.num_data(), 0);
        for (auto &b : bits) b = rng() & 1;
        auto base = logical_readout(layout, bits);
        // Flipping readout bits acts like X (resp. Z) errors on a Z (resp. X)
        // readout, so the supports that commute with the observables are the
        // opposite-basis stabilizers.
        for (const auto &s : layout.stabilizers) {
            if (s.basis == basis) continue;
            auto flipped = bits;
            for (int q : s.neighbors) flipped[q] ^= 1;
            EXPECT_EQ(logical_readout(layout, flipped), base);
        }
    }
}

TEST(Layout, GoldenDumpD3) {
    const char *expected =
        "d=3 basis=Z\n"
        "0 (1,-1) X 0 1\n"
        "1 (1,1) Z 0 1 3 4\n"
        "2 (3,1) X 1 2 4 5\n"
        "3 (5,1) Z 2 5\n"
        "4 (-1,3) Z 3 6\n"
        "5 (1,3) X 3 4 6 7\n"
        "6 (3,3) Z 4 5 7 8\n"
        "7 (3,5) X 7 8\n";
    EXPECT_EQ(layout_dump(build_layout(3, Basis::Z, Variant::cnot_standard)), expected);
}

TEST(Layout, DumpDeterministic) {
    auto a = layout_dump(build_layout(5, Basis::Z, Variant::cnot_standard));
    auto b = layout_dump(build_layout(5, Basis::Z, Variant::cnot_standard));
    EXPECT_EQ(a, b);
    EXPECT_NE(a.find("d=5 basis=Z"), std::string::npos);
}

}  // namespace
}  // namespace qsurf
