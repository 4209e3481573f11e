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

#ifndef QSURF_EXACT_ML_HPP
#define QSURF_EXACT_ML_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "qsurf/dem.hpp"

namespace qsurf {

// Exact maximum-likelihood decoding of one observable's marginal for DEMs too
// large for brute_force_ml_decode. Mechanisms are swept in detector order; the
// DP state is the parity of detectors still in flight, and a detector is
// conditioned on its observed value (and dropped from the state) as soon as no
// later mechanism can touch it. Exact because mechanisms are independent; the
// state count stays near 2^(frontier width) instead of 2^mechanisms.
struct ExactMlResult {
    int flip = 0;
    double posterior = 0;  // probability of the predicted class
};

class ExactMlDecoder {
  public:
    explicit ExactMlDecoder(const DetectorErrorModel &dem, int observable = 0) : observable_(observable) {
        if (dem.num_detectors > 64) {
            throw std::invalid_argument("exact ML decoder supports at most 64 detectors");
        }
        if (observable < 0 || observable >= std::max(1, dem.num_observables)) {
            throw std::invalid_argument("observable index out of range");
        }
        num_detectors_ = dem.num_detectors;
        // Order mechanisms by their last detector so detectors retire early.
        std::vector<int> order(dem.mechanisms.size());
        for (size_t i = 0; i < order.size(); i++) order[i] = static_cast<int>(i);
        auto max_det = [&](int i) {
            int m = -1;
            for (int d : dem.mechanisms[i].detectors) m = std::max(m, d);
            return m;
        };
        std::sort(order.begin(), order.end(), [&](int a, int b) { return max_det(a) < max_det(b); });
        for (int i : order) {
            const auto &m = dem.mechanisms[i];
            Mech mech;
            mech.p = m.prob;
            for (int d : m.detectors) mech.mask |= 1ull << d;
            for (int o : m.logical_flips) {
                if (o == observable_) mech.flip ^= 1;
            }
            if (mech.mask == 0 && mech.flip == 0) continue;  // invisible, flip-free
            mechs_.push_back(mech);
        }
        // Retirement schedule: detector d retires after the last mechanism
        // touching it.
        retire_after_.assign(mechs_.size() + 1, {});
        std::vector<int> last(num_detectors_, -1);
        for (size_t k = 0; k < mechs_.size(); k++) {
            for (int d = 0; d < num_detectors_; d++) {
                if (mechs_[k].mask >> d & 1) last[d] = static_cast<int>(k);
            }
        }
        for (int d = 0; d < num_detectors_; d++) {
            retire_after_[last[d] + 1].push_back(d);  // last == -1: untouched, retire up front
        }
    }

    ExactMlResult decode(const std::vector<uint8_t> &detector_bits) const {
        if (static_cast<int>(detector_bits.size()) != num_detectors_) {
            throw std::invalid_argument("detector bit count mismatch");
        }
        // state -> mass per observable-flip parity
        std::unordered_map<uint64_t, std::array<double, 2>> states;
        states.reserve(1024);
        states[0] = {1.0, 0.0};
        auto retire = [&](int after) {
            for (int d : retire_after_[after]) {
                uint64_t bit = 1ull << d;
                std::unordered_map<uint64_t, std::array<double, 2>> next;
                next.reserve(states.size());
                uint8_t want = detector_bits[d];
                for (const auto &[s, w] : states) {
                    if (((s >> d) & 1) != want) continue;
                    auto &dst = next[s & ~bit];
                    dst[0] += w[0];
                    dst[1] += w[1];
                }
                states.swap(next);
            }
        };
        retire(0);
        for (size_t k = 0; k < mechs_.size(); k++) {
            const Mech &m = mechs_[k];
            std::unordered_map<uint64_t, std::array<double, 2>> next;
            next.reserve(states.size() * 2);
            for (const auto &[s, w] : states) {
                auto &stay = next[s];
                stay[0] += w[0] * (1 - m.p);
                stay[1] += w[1] * (1 - m.p);
                auto &fire = next[s ^ m.mask];
                fire[0 ^ m.flip] += w[0] * m.p;
                fire[1 ^ m.flip] += w[1] * m.p;
            }
            states.swap(next);
            retire(static_cast<int>(k) + 1);
        }
        double m0 = 0, m1 = 0;
        for (const auto &[s, w] : states) {
            if (s != 0) throw std::logic_error("unretired detector state");
            m0 += w[0];
            m1 += w[1];
        }
        if (m0 + m1 <= 0) throw std::runtime_error("observed syndrome has zero probability");
        ExactMlResult out;
        out.flip = m1 > m0 ? 1 : 0;
        out.posterior = std::max(m0, m1) / (m0 + m1);
        return out;
    }

  private:
    struct Mech {
        double p = 0;
        uint64_t mask = 0;
        int flip = 0;
    };
    int num_detectors_ = 0;
    int observable_ = 0;
    std::vector<Mech> mechs_;
    std::vector<std::vector<int>> retire_after_;
};

}  // namespace qsurf

#endif
