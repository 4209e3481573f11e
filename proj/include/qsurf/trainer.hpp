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

#ifndef QSURF_TRAINER_HPP
#define QSURF_TRAINER_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qsurf/circuit.hpp"
#include "qsurf/decoder.hpp"
#include "qsurf/dem.hpp"
#include "qsurf/fit.hpp"
#include "qsurf/frame_sim.hpp"

namespace qsurf {

// ---- Noise curriculum ----

struct CurriculumParams {
    double w_c = 12.0;
    double sigma_c = 0.1;
    double f_min = 0.0;
    double t_c = 50000.0;
    double s_c = 1.0;
};

// Center of the curriculum at training step t: sigmoid ramp from f_min to 1.
inline double curriculum_center(double step, const CurriculumParams &cp) {
    return cp.f_min + (1.0 - cp.f_min) / (1.0 + std::exp(-cp.s_c * (step / cp.t_c - 1.0)));
}

// Unnormalized sampling weight for noise-scale factor f at step t:
// p_f(t) ~ 1 + w_c * G(f_c(t), sigma_c, f) with a unit-height Gaussian kernel.
inline double curriculum_sample_weight(double f, double step, const CurriculumParams &cp) {
    double delta = (f - curriculum_center(step, cp)) / cp.sigma_c;
    return 1.0 + cp.w_c * std::exp(-0.5 * delta * delta);
}

// ---- Configuration ----

struct TrainConfig {
    double lr = 1.3e-4;
    int64_t warmup_steps = 10000;
    std::vector<int64_t> decay_steps = {400000, 800000, 1600000};
    double decay_factor = 0.7;
    int batch_initial = 256;
    int batch_final = 1024;
    int64_t batch_change_step = 800000;
    double weight_decay = 1e-7;
    double beta1 = 0.9;   // not given in the paper; cited optimizer default
    double beta2 = 0.95;
    double ema_constant = 1e-4;
    bool use_curriculum = false;
    CurriculumParams curriculum;
    std::vector<double> curriculum_factors = {0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    uint64_t sample_budget = 0;
    int64_t eval_every_steps = 500;
    double gate_r2 = 0.9;
    double gate_intercept = -0.02;
    uint64_t seed = 1;

    void validate() const {
        if (lr <= 0 || decay_factor <= 0 || ema_constant <= 0 || beta2 <= 0) {
            throw std::invalid_argument("rates must be positive");
        }
        for (double f : curriculum_factors) {
            if (f < 0.5 || f > 1.0) {
                throw std::invalid_argument("curriculum factors must lie in [0.5, 1.0]");
            }
        }
    }
};

inline double learning_rate_at(const TrainConfig &cfg, int64_t step) {
    double lr = cfg.lr;
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
        lr *= static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
    }
    for (int64_t s : cfg.decay_steps) {
        if (step >= s) lr *= cfg.decay_factor;
    }
    return lr;
}

inline int batch_size_at(const TrainConfig &cfg, int64_t step) {
    return step >= cfg.batch_change_step ? cfg.batch_final : cfg.batch_initial;
}

// Flat key-value config file (one "key value" pair per line, '#' comments).
inline std::map<std::string, std::string> parse_kv_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ss(line);
        std::string key, value;
        if (ss >> key >> value) out[key] = value;
    }
    return out;
}

inline void apply_kv_config(TrainConfig &cfg, const std::map<std::string, std::string> &kv) {
    auto get = [&](const char *key, auto &field) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        std::istringstream ss(it->second);
        ss >> field;
        if (ss.fail()) throw std::invalid_argument(std::string("bad config value for ") + key);
    };
    get("lr", cfg.lr);
    get("warmup_steps", cfg.warmup_steps);
    get("decay_factor", cfg.decay_factor);
    get("batch_initial", cfg.batch_initial);
    get("batch_final", cfg.batch_final);
    get("batch_change_step", cfg.batch_change_step);
    get("weight_decay", cfg.weight_decay);
    get("beta1", cfg.beta1);
    get("beta2", cfg.beta2);
    get("ema_constant", cfg.ema_constant);
    get("sample_budget", cfg.sample_budget);
    get("eval_every_steps", cfg.eval_every_steps);
    get("gate_r2", cfg.gate_r2);
    get("gate_intercept", cfg.gate_intercept);
    get("seed", cfg.seed);
    get("curriculum_w_c", cfg.curriculum.w_c);
    get("curriculum_sigma_c", cfg.curriculum.sigma_c);
    get("curriculum_f_min", cfg.curriculum.f_min);
    get("curriculum_t_c", cfg.curriculum.t_c);
    get("curriculum_s_c", cfg.curriculum.s_c);
    int use_cur = -1;
    get("use_curriculum", use_cur);
    if (use_cur >= 0) cfg.use_curriculum = use_cur != 0;
    cfg.validate();
}

// ---- Lion optimizer ----

template <typename T>
struct LionState {
    TensorStore<T> momentum;
    int64_t step = 0;

    static LionState zeros_like(const TensorStore<T> &params) {
        LionState s;
        for (size_t i = 0; i < params.tensors.size(); i++) {
            s.momentum.add(params.names[i], static_cast<int>(params.tensors[i].rows()),
                           static_cast<int>(params.tensors[i].cols()));
        }
        return s;
    }
};

// update = -lr * (sign(b1*m + (1-b1)*g) + wd*(p - anchor)); m <- b2*m + (1-b2)*g.
// anchor == nullptr decays toward zero (pre-training).
template <typename T>
inline void lion_step(TensorStore<T> &params, const TensorStore<T> &grads, LionState<T> &state, double lr,
                      double wd, double beta1, double beta2, const TensorStore<T> *anchor = nullptr) {
    if (grads.tensors.size() != params.tensors.size()) {
        throw std::invalid_argument("gradient/parameter shape mismatch");
    }
    for (size_t i = 0; i < params.tensors.size(); i++) {
        auto &p = params.tensors[i];
        const auto &g = grads.tensors[i];
        auto &m = state.momentum.tensors[i];
        for (Eigen::Index k = 0; k < p.size(); k++) {
            T interp = static_cast<T>(beta1) * m.data()[k] + static_cast<T>(1 - beta1) * g.data()[k];
            T s = interp > 0 ? T(1) : (interp < 0 ? T(-1) : T(0));
            T a = anchor ? anchor->tensors[i].data()[k] : T(0);
            p.data()[k] -= static_cast<T>(lr) * (s + static_cast<T>(wd) * (p.data()[k] - a));
            m.data()[k] = static_cast<T>(beta2) * m.data()[k] + static_cast<T>(1 - beta2) * g.data()[k];
        }
    }
    state.step++;
}

template <typename T>
inline void ema_update(TensorStore<T> &ema, const TensorStore<T> &params, double c) {
    for (size_t i = 0; i < ema.tensors.size(); i++) {
        ema.tensors[i] += static_cast<T>(c) * (params.tensors[i] - ema.tensors[i]);
    }
}

// ---- Data sources ----

class DataSource {
  public:
    virtual ~DataSource() = default;
    virtual ShotRecord sample(std::mt19937_64 &rng, int64_t step) = 0;
    virtual int cycles() const = 0;
};

// Draws fresh shots from the noisy-circuit simulator at fixed noise.
class SimulatorSource : public DataSource {
  public:
    SimulatorSource(const NoisyCircuit &circuit, const CodeLayout &layout, const DatasetOptions &opts,
                    uint64_t seed)
        : circuit_(circuit), layout_(layout), opts_(opts), seed_(seed) {}

    ShotRecord sample(std::mt19937_64 & /*rng*/, int64_t /*step*/) override {
        return sample_shot(circuit_, layout_, opts_, seed_, counter_++);
    }
    int cycles() const override { return circuit_.cycles; }

  private:
    const NoisyCircuit &circuit_;
    const CodeLayout &layout_;
    DatasetOptions opts_;
    uint64_t seed_;
    uint64_t counter_ = 0;
};

// Samples hard shots from scaled DEMs with the training-step curriculum over
// the noise-scale factor; reconstructs decoder inputs from detector bits.
class DemSource : public DataSource {
  public:
    DemSource(const DetectorErrorModel &dem, const NoisyCircuit &circuit, const CodeLayout &layout,
              const TrainConfig &cfg)
        : circuit_(circuit), layout_(layout), cfg_(cfg) {
        for (double f : cfg.curriculum_factors) {
            factors_.push_back(f);
            dems_.push_back(scale_dem(dem, f));
        }
        if (dems_.empty()) throw std::invalid_argument("no curriculum factors");
    }

    ShotRecord sample(std::mt19937_64 &rng, int64_t step) override {
        size_t pick = 0;
        if (cfg_.use_curriculum && factors_.size() > 1) {
            std::vector<double> w(factors_.size());
            for (size_t i = 0; i < w.size(); i++) {
                w[i] = curriculum_sample_weight(factors_[i], static_cast<double>(step), cfg_.curriculum);
            }
            std::discrete_distribution<size_t> dist(w.begin(), w.end());
            pick = dist(rng);
        } else {
            pick = factors_.size() - 1;  // unscaled DEM
        }
        auto s = sample_dem(dems_[pick], rng);
        return record_from_dem_sample(circuit_, layout_, s);
    }
    int cycles() const override { return circuit_.cycles; }

    // Rebuilds the hard-input shot record implied by DEM detector bits: events
    // come straight from detectors, measurements are their running parity, and
    // final stabilizers follow from the final-round events.
    static ShotRecord record_from_dem_sample(const NoisyCircuit &circuit, const CodeLayout &layout,
                                             const DemSample &s) {
        const int S = layout.num_stabilizers();
        const int n = circuit.cycles;
        ShotRecord r;
        r.cycles = n;
        r.stab_count = S;
        r.measurements.assign(static_cast<size_t>(n) * S, 0.0f);
        r.events.assign(static_cast<size_t>(n) * S, 0.0f);
        auto on_idx = layout.on_basis_indices();
        r.final_stabs.assign(on_idx.size(), 0);
        r.final_events.assign(on_idx.size(), 0.0f);
        r.detectors.assign(s.events.begin(), s.events.end());
        std::vector<float> final_event_by_stab(S, 0.0f);
        for (size_t d = 0; d < circuit.detectors.size(); d++) {
            if (!s.events[d]) continue;
            const auto &def = circuit.detectors[d];
            if (def.cycle <= n) {
                r.events[static_cast<size_t>(def.cycle - 1) * S + def.stabilizer] = 1.0f;
            } else {
                final_event_by_stab[def.stabilizer] = 1.0f;
            }
        }
        for (int i = 0; i < S; i++) {
            float parity = 0.0f;
            for (int c = 1; c <= n; c++) {
                parity = parity != r.events[static_cast<size_t>(c - 1) * S + i] ? 1.0f : 0.0f;
                r.measurements[static_cast<size_t>(c - 1) * S + i] = parity;
            }
        }
        for (size_t j = 0; j < on_idx.size(); j++) {
            int i = on_idx[j];
            r.final_events[j] = final_event_by_stab[i];
            float last = r.measurements[static_cast<size_t>(n - 1) * S + i];
            r.final_stabs[j] = (final_event_by_stab[i] != 0.0f) != (last != 0.0f) ? 1 : 0;
        }
        r.labels.assign(s.flips.begin(), s.flips.end());
        return r;
    }

  private:
    const NoisyCircuit &circuit_;
    const CodeLayout &layout_;
    TrainConfig cfg_;
    std::vector<double> factors_;
    std::vector<DetectorErrorModel> dems_;
};

// ---- Training loop ----

struct EvalSet {
    int duration = 0;
    std::vector<ShotRecord> shots;
};

struct TrainResult {
    TensorStore<float> best_params;  // EMA parameters of the best gated eval
    double best_ler = std::numeric_limits<double>::infinity();
    int64_t best_step = -1;
    bool gated_checkpoint_found = false;
    int64_t steps = 0;
    uint64_t samples_consumed = 0;
    std::vector<std::string> log;
};

namespace detail {

// Held-out error rate of the decoder (line 0) on one eval set.
inline DurationStat eval_error_rate(Decoder<float> &dec, const EvalSet &set, int max_batch = 256) {
    DurationStat out;
    out.n = set.duration;
    const int d = dec.layout.distance;
    for (size_t start = 0; start < set.shots.size(); start += max_batch) {
        size_t end = std::min(set.shots.size(), start + max_batch);
        std::vector<const ShotRecord *> batch;
        for (size_t i = start; i < end; i++) batch.push_back(&set.shots[i]);
        auto probs = dec.predict(batch);
        for (size_t i = 0; i < batch.size(); i++) {
            uint8_t pred = probs(static_cast<Eigen::Index>(i) * d, 0) > 0.5f ? 1 : 0;
            out.errors += pred != batch[i]->labels[0];
            out.shots++;
        }
    }
    return out;
}

}  // namespace detail

// Training loop: curriculum/simulator batches, Lion updates, EMA tracking and
// LER-gated retention of the best parameters. `anchor` enables fine-tuning
// (weight decay toward the pretrained parameters).
inline TrainResult train(Decoder<float> &dec, const TrainConfig &cfg, DataSource &data,
                         const std::vector<EvalSet> &eval_sets, const TensorStore<float> *anchor = nullptr,
                         std::ostream *log_stream = nullptr) {
    cfg.validate();
    TrainResult result;
    auto log_line = [&](const std::string &line) {
        result.log.push_back(line);
        if (log_stream) (*log_stream) << line << "\n" << std::flush;
    };
    TensorStore<float> ema = dec.params;
    LionState<float> opt = LionState<float>::zeros_like(dec.params);
    std::mt19937_64 rng(cfg.seed);
    result.best_params = ema;

    auto evaluate = [&](int64_t step) {
        if (eval_sets.empty()) return;
        // Evaluate the EMA parameters on the held-out sets.
        TensorStore<float> live = dec.params;
        dec.params = ema;
        std::vector<DurationStat> stats;
        for (const auto &set : eval_sets) stats.push_back(detail::eval_error_rate(dec, set));
        dec.params = live;
        double ler = std::numeric_limits<double>::quiet_NaN(), r2 = 0, intercept = 0, isd = 0;
        bool gated = false;
        if (stats.size() >= 2) {
            try {
                auto fit = fit_ler(stats, 200, cfg.seed ^ static_cast<uint64_t>(step));
                ler = fit.eps;
                r2 = fit.r2;
                intercept = fit.log_f0;
                isd = fit.intercept_stderr;
                gated = fit.r2 > cfg.gate_r2 && intercept > std::max(cfg.gate_intercept, -isd);
            } catch (const std::invalid_argument &) {
                gated = false;
            }
        } else {
            // Single-duration dev set: per-round rate via ler_fixed_n, no fit gates.
            double e = static_cast<double>(stats[0].errors) / static_cast<double>(stats[0].shots);
            if (e < 0.5) {
                ler = ler_fixed_n(e, stats[0].n);
                gated = true;
                r2 = 1.0;
            }
        }
        std::ostringstream ss;
        ss << "step=" << step << " dev_ler=" << ler << " r2=" << r2 << " intercept=" << intercept
           << " gated=" << gated;
        log_line(ss.str());
        if (gated && ler < result.best_ler) {
            result.best_ler = ler;
            result.best_step = step;
            result.best_params = ema;
            result.gated_checkpoint_found = true;
        }
    };

    int64_t step = 0;
    int last_batch = batch_size_at(cfg, 0);
    while (result.samples_consumed + static_cast<uint64_t>(batch_size_at(cfg, step)) <= cfg.sample_budget) {
        int batch = batch_size_at(cfg, step);
        if (batch != last_batch) {
            std::ostringstream ss;
            ss << "step=" << step << " batch_size_change " << last_batch << "->" << batch;
            log_line(ss.str());
            last_batch = batch;
        }
        std::vector<ShotRecord> records;
        records.reserve(batch);
        for (int i = 0; i < batch; i++) records.push_back(data.sample(rng, step));
        std::vector<const ShotRecord *> ptrs;
        for (const auto &r : records) ptrs.push_back(&r);

        auto pass = dec.begin_pass();
        auto inputs = std::make_shared<BatchInputs<float>>(dec.make_batch(ptrs));
        auto nodes = dec.forward(*pass, inputs);
        float loss = pass->tape.val(nodes.total_loss)(0, 0);
        if (!std::isfinite(loss)) {
            std::ostringstream ss;
            ss << "non-finite loss at step " << step;
            log_line(ss.str());
            throw std::runtime_error(ss.str());
        }
        pass->tape.backward(nodes.total_loss);
        auto grads = dec.collect_grads(*pass);
        double lr = learning_rate_at(cfg, step);
        lion_step(dec.params, grads, opt, lr, cfg.weight_decay, cfg.beta1, cfg.beta2, anchor);
        ema_update(ema, dec.params, cfg.ema_constant);
        result.samples_consumed += static_cast<uint64_t>(batch);
        if (step % 50 == 0) {
            std::ostringstream ss;
            ss << "step=" << step << " loss=" << loss << " lr=" << lr << " batch=" << batch;
            log_line(ss.str());
        }
        step++;
        if (cfg.eval_every_steps > 0 && step % cfg.eval_every_steps == 0) evaluate(step);
    }
    result.steps = step;
    evaluate(step);
    if (!result.gated_checkpoint_found) {
        result.best_params = ema;  // budget 0 or never gated: return the EMA
    }
    return result;
}

inline TrainResult fine_tune(Decoder<float> &dec, TrainConfig cfg, DataSource &data,
                             const std::vector<EvalSet> &eval_sets, double fine_tune_wd,
                             std::ostream *log_stream = nullptr) {
    TensorStore<float> anchor = dec.params;
    cfg.weight_decay = fine_tune_wd;
    return train(dec, cfg, data, eval_sets, &anchor, log_stream);
}

}  // namespace qsurf

#endif
