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

#ifndef QSURF_TOOLS_CLI_COMMON_HPP
#define QSURF_TOOLS_CLI_COMMON_HPP

#include <cstdlib>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "qsurf/circuit.hpp"
#include "qsurf/frame_sim.hpp"
#include "qsurf/layout.hpp"

namespace qsurf {

struct ExperimentConfig {
    int distance = 3;
    int cycles = 3;
    std::string basis = "Z";
    std::string variant = "cnot";
    std::string noise_model = "si1000";
    double p = 0.002;
    double leakage_rate = 0.0;
    double leakage_heating = 0.0;
    double leakage_decay = 0.0;
    bool soft = false;
    bool leakage_inputs = false;
    double snr = 10.0;
    double t = 0.01;
    double prior_leak = 0.01;
    uint64_t seed = 1;
    int threads = 0;  // 0 -> QSURF_THREADS env or 1
};

inline int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char *env = std::getenv("QSURF_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

// Stable hash of the experiment settings, stamped into output headers.
inline uint64_t config_hash(const ExperimentConfig &c) {
    std::ostringstream ss;
    ss << c.distance << "|" << c.cycles << "|" << c.basis << "|" << c.variant << "|" << c.noise_model << "|"
       << c.p << "|" << c.leakage_rate << "|" << c.leakage_heating << "|" << c.leakage_decay << "|" << c.soft
       << "|" << c.leakage_inputs << "|" << c.snr << "|" << c.t << "|" << c.prior_leak << "|" << c.seed;
    uint64_t h = 14695981039346656037ull;
    for (char ch : ss.str()) {
        h = (h ^ static_cast<unsigned char>(ch)) * 1099511628211ull;
    }
    return h;
}

inline void add_experiment_flags(CLI::App *cmd, ExperimentConfig &cfg) {
    cmd->set_config("--config")->configurable(false);
    cmd->add_option("-d,--distance", cfg.distance, "code distance (odd, >= 3)");
    cmd->add_option("-n,--cycles", cfg.cycles, "error correction cycles");
    cmd->add_option("--basis", cfg.basis, "experiment basis: X or Z")->check(CLI::IsMember({"X", "Z"}));
    cmd->add_option("--variant", cfg.variant, "gate schedule: cnot or xzzx")->check(CLI::IsMember({"cnot", "xzzx"}));
    cmd->add_option("--noise-model", cfg.noise_model, "sd6 or si1000")->check(CLI::IsMember({"sd6", "si1000"}));
    cmd->add_option("-p,--noise", cfg.p, "base noise strength");
    cmd->add_option("--leakage-rate", cfg.leakage_rate, "per-2q-gate leakage injection probability");
    cmd->add_option("--leakage-heating", cfg.leakage_heating, "per-cycle leakage injection probability");
    cmd->add_option("--leakage-decay", cfg.leakage_decay, "per-cycle leakage removal probability");
    cmd->add_flag("--soft", cfg.soft, "sample analog I/Q readout and emit posteriors");
    cmd->add_flag("--leakage-inputs", cfg.leakage_inputs, "emit leakage posteriors as inputs");
    cmd->add_option("--snr", cfg.snr, "I/Q signal-to-noise ratio");
    cmd->add_option("--t-meas", cfg.t, "normalized measurement duration t_meas/T1");
    cmd->add_option("--prior-leak", cfg.prior_leak, "readout prior leakage weight");
    cmd->add_option("--seed", cfg.seed, "rng seed");
    cmd->add_option("--threads", cfg.threads, "worker threads (default: QSURF_THREADS env or 1)");
}

inline CodeLayout layout_from(const ExperimentConfig &cfg) {
    return build_layout(cfg.distance, cfg.basis == "X" ? Basis::X : Basis::Z,
                        cfg.variant == "xzzx" ? Variant::cz_xzzx : Variant::cnot_standard);
}

inline NoiseParams noise_from(const ExperimentConfig &cfg) {
    NoiseParams noise;
    noise.model = cfg.noise_model == "sd6" ? NoiseModel::SD6 : NoiseModel::SI1000;
    noise.p = cfg.p;
    noise.leakage_rate = cfg.leakage_rate;
    noise.leakage_heating = cfg.leakage_heating;
    noise.leakage_decay = cfg.leakage_decay;
    noise.analog_readout = cfg.soft;
    noise.validate();
    return noise;
}

inline DatasetOptions options_from(const ExperimentConfig &cfg) {
    DatasetOptions opts;
    if (cfg.soft) {
        ReadoutParams rp{cfg.snr, cfg.t, cfg.prior_leak};
        rp.validate();
        opts.readout = rp;
    }
    opts.leakage_inputs = cfg.leakage_inputs;
    return opts;
}

}  // namespace qsurf

#endif
