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

#ifndef QSURF_IQ_HPP
#define QSURF_IQ_HPP

#include <cmath>
#include <random>
#include <stdexcept>

namespace qsurf {

// XOR of independent Bernoulli probabilities.
inline double soft_xor(double p, double q) {
    return p * (1.0 - q) + (1.0 - p) * q;
}

// Recovers p from q = soft_xor(p, p_known). Undefined at p_known == 0.5,
// where the XOR is non-invertible (0.5 is absorbing).
inline double soft_xor_invert(double q, double p_known) {
    double denom = 1.0 - 2.0 * p_known;
    if (std::abs(denom) < 1e-12) {
        throw std::invalid_argument("soft_xor_invert: p_known too close to 0.5");
    }
    return (q - p_known) / denom;
}

// Simplified one-dimensional I/Q readout model. Point spread functions for
// |0>, |1>, |2> are centered at z = 0, 1, 2 with Gaussian width set by the
// signal-to-noise ratio, and |1>/|2> carry exponential decay tails governed
// by the normalized measurement duration t = t_meas / T1 (the |2> state
// decays twice as fast).
struct ReadoutParams {
    double snr = 10.0;
    double t = 0.01;
    double prior_leak = 0.01;  // w2; remainder split evenly between w0, w1

    double sigma() const { return std::sqrt(1.0 / (2.0 * snr)); }

    void validate() const {
        if (snr <= 0 || t <= 0 || prior_leak < 0 || prior_leak >= 1) {
            throw std::invalid_argument("ReadoutParams: invalid snr, t, or prior");
        }
    }
};

inline double pdf_p0(double z, const ReadoutParams &rp) {
    return std::sqrt(rp.snr / M_PI) * std::exp(-rp.snr * z * z);
}

inline double pdf_p1_at(double z, double snr, double t) {
    double root = std::sqrt(snr);
    double decay = 0.5 * t * std::exp(-t * (z - t / (4.0 * snr))) *
                   (std::erf(root * (z - t / (2.0 * snr))) + std::erf(root * (1.0 - z + t / (2.0 * snr))));
    double peak = std::exp(-t) * std::sqrt(snr / M_PI) * std::exp(-snr * (z - 1.0) * (z - 1.0));
    return decay + peak;
}

inline double pdf_p1(double z, const ReadoutParams &rp) { return pdf_p1_at(z, rp.snr, rp.t); }

inline double pdf_p2(double z, const ReadoutParams &rp) { return pdf_p1_at(z - 1.0, rp.snr, 2.0 * rp.t); }

// Draws z for a qubit measured in state |0>, |1>, or |2>, by sampling the
// physical decay process directly: with probability e^-t the excited state
// survives the full measurement and the signal centers on its level;
// otherwise the decay instant is exponentially distributed within the
// window and the signal centers on the surviving fraction.
inline double sample_z(int state, const ReadoutParams &rp, std::mt19937_64 &rng) {
    std::normal_distribution<double> gauss(0.0, rp.sigma());
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (state == 0) {
        return gauss(rng);
    }
    double t = state == 2 ? 2.0 * rp.t : rp.t;
    double offset = state == 2 ? 1.0 : 0.0;
    double mean;
    if (unif(rng) < std::exp(-t)) {
        mean = 1.0;
    } else {
        // Inverse CDF of Exp(t) truncated to [0, 1].
        mean = -std::log(1.0 - unif(rng) * (1.0 - std::exp(-t))) / t;
    }
    return offset + mean + gauss(rng);
}

struct Posteriors {
    double post1;  // P(|1> | not leaked)
    double post2;  // P(|2>)
};

// Bayesian posteriors from the observed z. Far out in the tails all
// densities underflow; fall back to the priors there.
inline Posteriors posterior(double z, const ReadoutParams &rp) {
    double w2 = rp.prior_leak;
    double w0 = 0.5 * (1.0 - w2);
    double w1 = w0;
    double p0 = pdf_p0(z, rp);
    double p1 = pdf_p1(z, rp);
    double p2 = pdf_p2(z, rp);
    double total = w0 * p0 + w1 * p1 + w2 * p2;
    if (!(total > 1e-300)) {
        return {w1 / (w0 + w1), w2};
    }
    Posteriors out;
    double denom1 = (w0 / w1) * p0 + p1;
    out.post1 = denom1 > 0 ? p1 / denom1 : w1 / (w0 + w1);
    out.post2 = w2 * p2 / total;
    return out;
}

}  // namespace qsurf

#endif
