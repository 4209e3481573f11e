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

#ifndef QSURF_DECODER_HPP
#define QSURF_DECODER_HPP

#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "qsurf/autodiff.hpp"
#include "qsurf/frame_sim.hpp"
#include "qsurf/layout.hpp"

namespace qsurf {

// Network width configuration. The "paper" profile follows the published
// scaling-experiment hyperparameters; the "toy" profile is sized for
// desk-scale CPU training.
struct DecoderProfile {
    int dim = 64;            // per-stabilizer state dimension D
    int heads = 4;
    int key = 16;
    int widening = 2;        // gated dense block expansion
    int conv_dim = 16;
    int bias_dim = 16;       // attention-bias embedding width
    int bias_layers = 2;
    int embed_layers = 2;    // input-embedding residual blocks
    int readout_dim = 32;
    int readout_layers = 4;
    int layers = 3;          // syndrome transformer layers
    std::vector<int> dilations = {1, 1, 1};
    double aux_weight = 0.01;
};

inline std::vector<int> dilations_for_distance(int d) {
    if (d <= 3) return {1, 1, 1};
    if (d <= 5) return {1, 1, 2};
    return {1, 2, 4};
}

inline DecoderProfile toy_profile(int d) {
    DecoderProfile p;
    p.dilations = dilations_for_distance(d);
    return p;
}

inline DecoderProfile paper_profile(int d) {
    DecoderProfile p;
    p.dim = 256;
    p.heads = 4;
    p.key = 32;
    p.widening = 5;
    p.conv_dim = 128;
    p.bias_dim = 48;
    p.bias_layers = 8;
    p.embed_layers = 2;
    p.readout_dim = 48;
    p.readout_layers = 16;
    p.layers = 3;
    p.dilations = dilations_for_distance(d);
    p.aux_weight = 0.02;
    return p;
}

// Fixed bucket counts for attention-bias feature tables, sized for the
// largest supported code so parameter shapes are independent of d.
inline constexpr int kMaxDistance = 11;
inline constexpr int kCoordBuckets = kMaxDistance + 2;       // grid coords 0..d
inline constexpr int kOffsetBuckets = 2 * kMaxDistance + 3;  // signed offsets
inline constexpr int kIndicatorFeatures = 7;

// Ordered named-tensor store holding all learned parameters.
template <typename T>
struct TensorStore {
    using Mat = typename Tape<T>::Mat;
    std::vector<std::string> names;
    std::vector<Mat> tensors;
    std::map<std::string, int> index;

    Mat &add(const std::string &name, int rows, int cols) {
        if (index.count(name)) {
            throw std::invalid_argument("duplicate tensor: " + name);
        }
        index[name] = static_cast<int>(tensors.size());
        names.push_back(name);
        tensors.push_back(Mat::Zero(rows, cols));
        return tensors.back();
    }

    Mat &at(const std::string &name) {
        auto it = index.find(name);
        if (it == index.end()) {
            throw std::invalid_argument("unknown tensor: " + name);
        }
        return tensors[it->second];
    }
    const Mat &at(const std::string &name) const {
        auto it = index.find(name);
        if (it == index.end()) {
            throw std::invalid_argument("unknown tensor: " + name);
        }
        return tensors[it->second];
    }

    size_t total_parameters() const {
        size_t n = 0;
        for (const auto &m : tensors) n += static_cast<size_t>(m.size());
        return n;
    }

    std::vector<T> to_flat() const {
        std::vector<T> out;
        out.reserve(total_parameters());
        for (const auto &m : tensors) {
            out.insert(out.end(), m.data(), m.data() + m.size());
        }
        return out;
    }

    void from_flat(const std::vector<T> &flat) {
        if (flat.size() != total_parameters()) {
            throw std::invalid_argument("flat parameter size mismatch");
        }
        size_t pos = 0;
        for (auto &m : tensors) {
            std::memcpy(m.data(), flat.data() + pos, sizeof(T) * m.size());
            pos += m.size();
        }
    }

    template <typename U>
    TensorStore<U> cast() const {
        TensorStore<U> out;
        for (size_t i = 0; i < tensors.size(); i++) {
            auto &m = out.add(names[i], static_cast<int>(tensors[i].rows()), static_cast<int>(tensors[i].cols()));
            m = tensors[i].template cast<U>();
        }
        return out;
    }
};

// Output of one training/eval forward pass.
struct ForwardNodes {
    int logits = -1;      // (B*d) x 1, row b*d + line
    int probs = -1;       // sigmoid of logits
    int main_loss = -1;   // 1x1
    int aux_loss = -1;    // 1x1 (or -1 when aux disabled)
    int total_loss = -1;  // 1x1
    int final_state = -1; // (B*S) x D decoder state after the final rnn step
};

// Constant (non-learned) per-cycle inputs for a batch.
template <typename T>
struct BatchInputs {
    using Mat = typename Tape<T>::Mat;
    int batch = 0;
    int cycles = 0;
    std::vector<Mat> bulk_feats;                  // per cycle, (B*S) x k
    std::vector<std::vector<Mat>> indicator;      // per cycle, 7 mats (B*S) x S
    Mat final_feats;                              // (B*S) x 2
    Mat off_mask;                                 // (B*S) x 1, 1 for off-basis rows
    std::vector<Mat> aux_targets;                 // per cycle 1..n-1, (B*S) x 1
    Mat labels;                                   // (B*d) x 1
};

template <typename T>
class Decoder {
  public:
    using Mat = typename Tape<T>::Mat;

    DecoderProfile prof;
    CodeLayout layout;
    bool leakage_inputs = false;
    TensorStore<T> params;

    Decoder(const CodeLayout &lay, const DecoderProfile &profile, bool leak_inputs)
        : prof(profile), layout(lay), leakage_inputs(leak_inputs) {
        if (lay.distance > kMaxDistance) {
            throw std::invalid_argument("decoder supports distances up to 11");
        }
        build_params();
        build_static_tables();
    }

    int num_input_features() const { return leakage_inputs ? 4 : 2; }
    int tokens() const { return layout.num_stabilizers(); }
    int grid() const { return (layout.distance + 1) * (layout.distance + 1); }

    // ---- Parameter construction ----

    void build_params() {
        const int D = prof.dim;
        const int S = tokens();
        const int hk = prof.heads * prof.key;
        params.add("embed.bulk.W", num_input_features(), D);
        params.add("embed.idx", S, D);
        for (int l = 0; l < prof.embed_layers; l++) {
            params.add("embed.bulk.res" + std::to_string(l) + ".W1", D, D);
            params.add("embed.bulk.res" + std::to_string(l) + ".W2", D, D);
        }
        params.add("embed.final.W", 2, D);
        params.add("embed.final.idx", S, D);
        params.add("embed.final.off", 1, D);
        for (int l = 0; l < prof.embed_layers; l++) {
            params.add("embed.final.res" + std::to_string(l) + ".W1", D, D);
            params.add("embed.final.res" + std::to_string(l) + ".W2", D, D);
        }
        // Attention-bias feature embeddings, shared across layers.
        params.add("bias.cx_i", kCoordBuckets, prof.bias_dim);
        params.add("bias.cy_i", kCoordBuckets, prof.bias_dim);
        params.add("bias.cx_j", kCoordBuckets, prof.bias_dim);
        params.add("bias.cy_j", kCoordBuckets, prof.bias_dim);
        params.add("bias.dx", kOffsetBuckets, prof.bias_dim);
        params.add("bias.dy", kOffsetBuckets, prof.bias_dim);
        params.add("bias.manh", kOffsetBuckets, prof.bias_dim);
        params.add("bias.same", 2, prof.bias_dim);
        for (int l = 0; l < prof.bias_layers; l++) {
            params.add("bias.res" + std::to_string(l) + ".W1", prof.bias_dim, prof.bias_dim);
            params.add("bias.res" + std::to_string(l) + ".W2", prof.bias_dim, prof.bias_dim);
        }
        for (int L = 0; L < prof.layers; L++) {
            std::string p = "t" + std::to_string(L) + ".";
            params.add(p + "ln1.g", 1, D);
            params.add(p + "ln1.b", 1, D);
            params.add(p + "attn.Wq", D, hk);
            params.add(p + "attn.Wk", D, hk);
            params.add(p + "attn.Wv", D, hk);
            params.add(p + "attn.Wo", hk, D);
            params.add(p + "attn.bo", 1, D);
            params.add(p + "bias.proj", prof.bias_dim, prof.heads);
            params.add(p + "attn.w_ind", kIndicatorFeatures, prof.heads);
            params.add(p + "ln2.g", 1, D);
            params.add(p + "ln2.b", 1, D);
            params.add(p + "dense.W", D, prof.widening * D);
            params.add(p + "dense.V", D, prof.widening * D);
            params.add(p + "dense.W2", prof.widening * D, D);
            params.add(p + "dense.b2", 1, D);
            params.add(p + "ln3.g", 1, D);
            params.add(p + "ln3.b", 1, D);
            params.add(p + "conv1.W", 9 * D, prof.conv_dim);
            params.add(p + "conv1.b", 1, prof.conv_dim);
            params.add(p + "conv2.W", 9 * prof.conv_dim, prof.conv_dim);
            params.add(p + "conv2.b", 1, prof.conv_dim);
            params.add(p + "conv3.W", 9 * prof.conv_dim, D);
            params.add(p + "conv3.b", 1, D);
        }
        params.add("pad", 1, D);
        params.add("readout.reduce.W", 4 * D, prof.readout_dim);
        params.add("readout.reduce.b", 1, prof.readout_dim);
        for (int l = 0; l < prof.readout_layers; l++) {
            params.add("readout.res" + std::to_string(l) + ".W1", prof.readout_dim, prof.readout_dim);
            params.add("readout.res" + std::to_string(l) + ".W2", prof.readout_dim, prof.readout_dim);
        }
        params.add("readout.out.W", prof.readout_dim, 1);
        params.add("readout.out.b", 1, 1);
        params.add("aux.W", D, 1);
        params.add("aux.b", 1, 1);
    }

    void init(uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (size_t i = 0; i < params.tensors.size(); i++) {
            auto &m = params.tensors[i];
            const std::string &name = params.names[i];
            if (name.find("ln") != std::string::npos && name.size() >= 2 && name.substr(name.size() - 2) == ".g") {
                m.setOnes();
                continue;
            }
            if (name.size() >= 2 && (name.substr(name.size() - 2) == ".b" || name.substr(name.size() - 3) == ".b2" ||
                                     name.substr(name.size() - 3) == ".bo")) {
                m.setZero();
                continue;
            }
            double scale;
            if (name.rfind("bias.", 0) == 0 && name.find(".res") == std::string::npos) {
                scale = 0.1;  // feature embedding tables
            } else if (name == "embed.idx" || name == "embed.final.idx" || name == "embed.final.off" ||
                       name == "pad") {
                scale = 0.1;
            } else {
                scale = 1.0 / std::sqrt(static_cast<double>(m.rows()));
            }
            for (Eigen::Index k = 0; k < m.size(); k++) {
                m.data()[k] = static_cast<T>(normal(rng) * scale);
            }
        }
    }

    // d-dependent parameters: only the two stabilizer index-embedding tables.
    size_t index_embedding_parameters() const {
        return static_cast<size_t>(params.at("embed.idx").size() + params.at("embed.final.idx").size());
    }

    // ---- Batch assembly (constants, no gradients) ----

    BatchInputs<T> make_batch(const std::vector<const ShotRecord *> &shots) const {
        const int S = tokens();
        const int d = layout.distance;
        BatchInputs<T> out;
        out.batch = static_cast<int>(shots.size());
        if (shots.empty()) {
            throw std::invalid_argument("empty batch");
        }
        out.cycles = shots[0]->cycles;
        if (out.cycles < 1) {
            throw std::invalid_argument("cycle count must be >= 1");
        }
        const int k = num_input_features();
        for (const auto *s : shots) {
            if (s->cycles != out.cycles || s->stab_count != S) {
                throw std::invalid_argument("batch shots must share shape");
            }
            if (leakage_inputs && s->leak_post.empty()) {
                throw std::invalid_argument("leakage inputs requested but record has none");
            }
        }
        const int B = out.batch;
        for (int n = 1; n <= out.cycles; n++) {
            Mat feats(B * S, k);
            for (int b = 0; b < B; b++) {
                const ShotRecord &r = *shots[b];
                for (int i = 0; i < S; i++) {
                    size_t src = static_cast<size_t>(n - 1) * S + i;
                    feats(b * S + i, 0) = static_cast<T>(r.measurements[src]);
                    feats(b * S + i, 1) = static_cast<T>(r.events[src]);
                    if (leakage_inputs) {
                        feats(b * S + i, 2) = static_cast<T>(r.leak_post[src]);
                        feats(b * S + i, 3) = static_cast<T>(r.leak_events[src]);
                    }
                }
            }
            out.bulk_feats.push_back(std::move(feats));
            out.indicator.push_back(indicator_features(shots, n));
            if (n < out.cycles) {
                Mat tgt(B * S, 1);
                for (int b = 0; b < B; b++) {
                    for (int i = 0; i < S; i++) {
                        tgt(b * S + i, 0) = static_cast<T>(shots[b]->measurements[static_cast<size_t>(n) * S + i]);
                    }
                }
                out.aux_targets.push_back(std::move(tgt));
            }
        }
        // Final round inputs.
        out.final_feats = Mat::Zero(B * S, 2);
        out.off_mask = Mat::Zero(B * S, 1);
        auto on_idx = layout.on_basis_indices();
        for (int b = 0; b < B; b++) {
            const ShotRecord &r = *shots[b];
            std::vector<uint8_t> on(S, 0);
            for (size_t j = 0; j < on_idx.size(); j++) {
                int i = on_idx[j];
                on[i] = 1;
                out.final_feats(b * S + i, 0) = static_cast<T>(r.final_events[j]);
                out.final_feats(b * S + i, 1) = static_cast<T>(r.final_stabs[j]);
            }
            for (int i = 0; i < S; i++) {
                if (!on[i]) out.off_mask(b * S + i, 0) = 1;
            }
        }
        out.labels = Mat(B * d, 1);
        for (int b = 0; b < B; b++) {
            for (int line = 0; line < d; line++) {
                out.labels(b * d + line, 0) = static_cast<T>(shots[b]->labels[line]);
            }
        }
        return out;
    }

    // Event-product indicator features for the attention bias at cycle n
    // (events of cycle n and n-1; 4 products plus 3 distinct diagonals).
    std::vector<Mat> indicator_features(const std::vector<const ShotRecord *> &shots, int n) const {
        const int S = tokens();
        const int B = static_cast<int>(shots.size());
        std::vector<Mat> feats(kIndicatorFeatures, Mat::Zero(B * S, S));
        for (int b = 0; b < B; b++) {
            const ShotRecord &r = *shots[b];
            for (int i = 0; i < S; i++) {
                T en_i = static_cast<T>(r.events[static_cast<size_t>(n - 1) * S + i]);
                T ep_i = n >= 2 ? static_cast<T>(r.events[static_cast<size_t>(n - 2) * S + i]) : T(0);
                for (int j = 0; j < S; j++) {
                    T en_j = static_cast<T>(r.events[static_cast<size_t>(n - 1) * S + j]);
                    T ep_j = n >= 2 ? static_cast<T>(r.events[static_cast<size_t>(n - 2) * S + j]) : T(0);
                    feats[0](b * S + i, j) = en_i * en_j;
                    feats[1](b * S + i, j) = en_i * ep_j;
                    feats[2](b * S + i, j) = ep_i * en_j;
                    feats[3](b * S + i, j) = ep_i * ep_j;
                }
                feats[4](b * S + i, i) = en_i * en_i;
                feats[5](b * S + i, i) = en_i * ep_i;  // both time-space diagonals coincide
                feats[6](b * S + i, i) = ep_i * ep_i;
            }
        }
        return feats;
    }

    // ---- Forward pass ----

    // Context that must outlive backward(): parameter node ids plus owned
    // constant feature storage referenced by attention nodes.
    struct Pass {
        Tape<T> tape;
        std::map<std::string, int> pnode;
        std::shared_ptr<BatchInputs<T>> inputs;
        int bias_static = -1;  // (S*S) x bias_dim embedding after resnet

        int p(const std::string &name) const {
            auto it = pnode.find(name);
            if (it == pnode.end()) throw std::invalid_argument("no param node: " + name);
            return it->second;
        }
    };

    std::unique_ptr<Pass> begin_pass() {
        auto pass = std::make_unique<Pass>();
        for (size_t i = 0; i < params.tensors.size(); i++) {
            pass->pnode[params.names[i]] = pass->tape.leaf(params.tensors[i]);
        }
        return pass;
    }

    // Gathers parameter gradients (zero when untouched) after backward().
    TensorStore<T> collect_grads(Pass &pass) const {
        TensorStore<T> grads;
        for (size_t i = 0; i < params.tensors.size(); i++) {
            auto &g = grads.add(params.names[i], static_cast<int>(params.tensors[i].rows()),
                                static_cast<int>(params.tensors[i].cols()));
            const Mat &got = pass.tape.grad(pass.pnode.at(params.names[i]));
            if (got.size() != 0) g = got;
        }
        return grads;
    }

    int residual_stack(Pass &pass, int x, const std::string &prefix, int layers) const {
        Tape<T> &t = pass.tape;
        for (int l = 0; l < layers; l++) {
            std::string p = prefix + std::to_string(l);
            int h = t.matmul(t.gelu(t.matmul(x, pass.p(p + ".W1"))), pass.p(p + ".W2"));
            x = t.add(x, h);
        }
        return x;
    }

    // Static attention-bias embedding: per stabilizer pair, summed feature
    // embeddings passed through a residual network. Computed once per pass.
    int bias_embedding(Pass &pass) const {
        Tape<T> &t = pass.tape;
        const int S = tokens();
        auto gather1 = [&](const std::string &table, const std::vector<int> &idx) {
            return t.gather_concat(pass.p(table), -1, idx, 1);
        };
        int x = gather1("bias.cx_i", bias_idx_.cx_i);
        x = t.add(x, gather1("bias.cy_i", bias_idx_.cy_i));
        x = t.add(x, gather1("bias.cx_j", bias_idx_.cx_j));
        x = t.add(x, gather1("bias.cy_j", bias_idx_.cy_j));
        x = t.add(x, gather1("bias.dx", bias_idx_.dx));
        x = t.add(x, gather1("bias.dy", bias_idx_.dy));
        x = t.add(x, gather1("bias.manh", bias_idx_.manh));
        x = t.add(x, gather1("bias.same", bias_idx_.same));
        x = residual_stack(pass, x, "bias.res", prof.bias_layers);
        (void)S;
        return x;
    }

    // One syndrome transformer layer: biased attention, gated dense block,
    // three dilated convolutions, all with residual connections (pre-LN).
    int transformer_layer(Pass &pass, int x, int L, const std::vector<Mat> *feats, int batch) const {
        Tape<T> &t = pass.tape;
        const std::string p = "t" + std::to_string(L) + ".";
        const int S = tokens();
        // Attention.
        int xn = t.layernorm(x, pass.p(p + "ln1.g"), pass.p(p + "ln1.b"));
        int q = t.matmul(xn, pass.p(p + "attn.Wq"));
        int k = t.matmul(xn, pass.p(p + "attn.Wk"));
        int v = t.matmul(xn, pass.p(p + "attn.Wv"));
        int bias = t.matmul(pass.bias_static, pass.p(p + "bias.proj"));  // (S*S) x heads
        int att = t.attention(q, k, v, bias, pass.p(p + "attn.w_ind"), feats, batch, S, prof.heads, prof.key);
        int out = t.add_row(t.matmul(att, pass.p(p + "attn.Wo")), pass.p(p + "attn.bo"));
        x = t.add(x, out);
        // Gated dense block.
        xn = t.layernorm(x, pass.p(p + "ln2.g"), pass.p(p + "ln2.b"));
        int gate = t.mul(t.gelu(t.matmul(xn, pass.p(p + "dense.W"))), t.matmul(xn, pass.p(p + "dense.V")));
        out = t.add_row(t.matmul(gate, pass.p(p + "dense.W2")), pass.p(p + "dense.b2"));
        x = t.add(x, out);
        // Dilated convolutions on the (d+1)^2 grid.
        xn = t.layernorm(x, pass.p(p + "ln3.g"), pass.p(p + "ln3.b"));
        int g0 = t.gather_concat(xn, pass.p("pad"), scatter_idx(batch), 1);  // (B*G) x D grid
        int dil = prof.dilations[static_cast<size_t>(L) % prof.dilations.size()];
        int c1 = t.gelu(t.add_row(t.matmul(t.gather_concat(g0, pass.p("pad"), conv_idx(batch, dil), 9),
                                           pass.p(p + "conv1.W")),
                                  pass.p(p + "conv1.b")));
        int c2 = t.gelu(t.add_row(
            t.matmul(t.gather_concat(c1, -1, conv_idx(batch, dil), 9), pass.p(p + "conv2.W")),
            pass.p(p + "conv2.b")));
        int c3 = t.add_row(t.matmul(t.gather_concat(c2, -1, conv_idx(batch, dil), 9), pass.p(p + "conv3.W")),
                           pass.p(p + "conv3.b"));
        int back = t.gather_concat(c3, -1, gather_idx(batch), 1);  // (B*S) x D
        x = t.add(x, back);
        return x;
    }

    // state <- (state + S_n) * 0.707, then the transformer layers.
    int rnn_step(Pass &pass, int state, int embedded, const std::vector<Mat> *feats, int batch) const {
        Tape<T> &t = pass.tape;
        int x = t.scale(t.add(state, embedded), static_cast<T>(0.7071067811865476));
        for (int L = 0; L < prof.layers; L++) {
            x = transformer_layer(pass, x, L, feats, batch);
        }
        return x;
    }

    int embed_bulk(Pass &pass, const Mat &feats, int batch) const {
        Tape<T> &t = pass.tape;
        int f = t.leaf(feats);
        int x = t.matmul(f, pass.p("embed.bulk.W"));
        x = t.add(x, t.gather_concat(pass.p("embed.idx"), -1, tile_idx(batch), 1));
        return residual_stack(pass, x, "embed.bulk.res", prof.embed_layers);
    }

    int embed_final(Pass &pass, const Mat &feats, const Mat &off_mask, int batch) const {
        Tape<T> &t = pass.tape;
        int f = t.leaf(feats);
        int x = t.matmul(f, pass.p("embed.final.W"));
        x = t.add(x, t.gather_concat(pass.p("embed.final.idx"), -1, tile_idx(batch), 1));
        int mask = t.leaf(off_mask);
        x = t.add(x, t.matmul(mask, pass.p("embed.final.off")));
        return residual_stack(pass, x, "embed.final.res", prof.embed_layers);
    }

    // Readout: scatter to grid, 2x2 convolution to data-qubit cells,
    // dimension reduction, pooling perpendicular to the observable lines,
    // residual network, one logit per line.
    int readout(Pass &pass, int state, int batch) const {
        Tape<T> &t = pass.tape;
        int grid_x = t.gather_concat(state, pass.p("pad"), scatter_idx(batch), 1);
        int cells = t.gather_concat(grid_x, -1, readout_idx(batch), 4);  // (B*d^2) x 4D
        int red = t.gelu(t.add_row(t.matmul(cells, pass.p("readout.reduce.W")), pass.p("readout.reduce.b")));
        int pooled = t.group_mean(red, pool_groups(batch));  // (B*d) x R
        int x = residual_stack(pass, pooled, "readout.res", prof.readout_layers);
        return t.add_row(t.matmul(x, pass.p("readout.out.W")), pass.p("readout.out.b"));
    }

    // Full unrolled pass over a batch of equal-duration shots.
    ForwardNodes forward(Pass &pass, std::shared_ptr<BatchInputs<T>> inputs, bool with_aux = true) {
        Tape<T> &t = pass.tape;
        pass.inputs = inputs;
        const BatchInputs<T> &in = *inputs;
        const int B = in.batch;
        const int S = tokens();
        pass.bias_static = bias_embedding(pass);
        int state = t.leaf(Mat::Zero(static_cast<Eigen::Index>(B) * S, prof.dim));
        ForwardNodes out;
        std::vector<int> aux_logit_nodes;
        for (int n = 1; n <= in.cycles; n++) {
            int emb = embed_bulk(pass, in.bulk_feats[n - 1], B);
            state = rnn_step(pass, state, emb, &in.indicator[n - 1], B);
            if (with_aux && prof.aux_weight > 0 && n < in.cycles) {
                int logits = t.add_row(t.matmul(state, pass.p("aux.W")), pass.p("aux.b"));
                aux_logit_nodes.push_back(logits);
            }
        }
        int emb = embed_final(pass, in.final_feats, in.off_mask, B);
        state = rnn_step(pass, state, emb, nullptr, B);
        out.final_state = state;
        out.logits = readout(pass, state, B);
        out.probs = t.sigmoid(out.logits);
        out.main_loss = t.bce_mean(out.logits, in.labels);
        if (!aux_logit_nodes.empty()) {
            int acc = t.bce_mean(aux_logit_nodes[0], in.aux_targets[0]);
            for (size_t i = 1; i < aux_logit_nodes.size(); i++) {
                acc = t.add(acc, t.bce_mean(aux_logit_nodes[i], in.aux_targets[i]));
            }
            out.aux_loss = t.scale(acc, static_cast<T>(1.0 / aux_logit_nodes.size()));
            out.total_loss = t.axpy(out.main_loss, out.aux_loss, 1, static_cast<T>(prof.aux_weight));
        } else {
            out.total_loss = out.main_loss;
        }
        return out;
    }

    // Convenience: probabilities of a logical flip per observable line.
    Mat predict(const std::vector<const ShotRecord *> &shots) {
        auto pass = begin_pass();
        auto batch = std::make_shared<BatchInputs<T>>(make_batch(shots));
        auto nodes = forward(*pass, batch, false);
        return pass->tape.val(nodes.probs);
    }

    // ---- Incremental inference for long horizons ----
    // Each step runs on a fresh throwaway tape so memory stays constant.

    struct Session {
        Decoder *dec;
        int batch;
        Mat state;
    };

    Session begin_session(int batch) {
        Session s;
        s.dec = this;
        s.batch = batch;
        s.state = Mat::Zero(static_cast<Eigen::Index>(batch) * tokens(), prof.dim);
        return s;
    }

    void session_step(Session &s, const Mat &bulk_feats, const std::vector<Mat> &indicator) {
        auto pass = begin_pass();
        pass->bias_static = bias_embedding(*pass);
        int state = pass->tape.leaf(s.state);
        int emb = embed_bulk(*pass, bulk_feats, s.batch);
        int next = rnn_step(*pass, state, emb, &indicator, s.batch);
        s.state = pass->tape.val(next);
    }

    // Final-round step plus readout; returns per-line flip probabilities
    // without mutating the session state.
    Mat session_readout(Session &s, const Mat &final_feats, const Mat &off_mask) {
        auto pass = begin_pass();
        pass->bias_static = bias_embedding(*pass);
        int state = pass->tape.leaf(s.state);
        int emb = embed_final(*pass, final_feats, off_mask, s.batch);
        int next = rnn_step(*pass, state, emb, nullptr, s.batch);
        int logits = readout(*pass, next, s.batch);
        int probs = pass->tape.sigmoid(logits);
        return pass->tape.val(probs);
    }

    // ---- Checkpoints ----

    void save(const std::string &path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + path + " for writing");
        const char magic[8] = {'Q', 'S', 'U', 'R', 'F', 'C', 'K', 'P'};
        out.write(magic, 8);
        uint32_t version = 1, count = static_cast<uint32_t>(params.tensors.size());
        uint32_t dtype = sizeof(T) == 4 ? 0 : 1;
        out.write(reinterpret_cast<const char *>(&version), 4);
        out.write(reinterpret_cast<const char *>(&dtype), 4);
        out.write(reinterpret_cast<const char *>(&count), 4);
        for (size_t i = 0; i < params.tensors.size(); i++) {
            const std::string &name = params.names[i];
            uint32_t len = static_cast<uint32_t>(name.size());
            out.write(reinterpret_cast<const char *>(&len), 4);
            out.write(name.data(), len);
            uint64_t rows = static_cast<uint64_t>(params.tensors[i].rows());
            uint64_t cols = static_cast<uint64_t>(params.tensors[i].cols());
            out.write(reinterpret_cast<const char *>(&rows), 8);
            out.write(reinterpret_cast<const char *>(&cols), 8);
            out.write(reinterpret_cast<const char *>(params.tensors[i].data()),
                      static_cast<std::streamsize>(sizeof(T) * params.tensors[i].size()));
        }
        if (!out) throw std::runtime_error("checkpoint write failed: " + path);
    }

    void load(const std::string &path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path);
        char magic[8];
        in.read(magic, 8);
        if (!in || std::memcmp(magic, "QSURFCKP", 8) != 0) {
            throw std::runtime_error("not a qsurf checkpoint: " + path);
        }
        uint32_t version, dtype, count;
        in.read(reinterpret_cast<char *>(&version), 4);
        in.read(reinterpret_cast<char *>(&dtype), 4);
        in.read(reinterpret_cast<char *>(&count), 4);
        if (!in || version != 1) throw std::runtime_error("unsupported checkpoint version");
        if (dtype != (sizeof(T) == 4 ? 0u : 1u)) throw std::runtime_error("checkpoint dtype mismatch");
        if (count != params.tensors.size()) throw std::runtime_error("checkpoint tensor count mismatch");
        for (size_t i = 0; i < count; i++) {
            uint32_t len;
            in.read(reinterpret_cast<char *>(&len), 4);
            std::string name(len, '\0');
            in.read(name.data(), len);
            uint64_t rows, cols;
            in.read(reinterpret_cast<char *>(&rows), 8);
            in.read(reinterpret_cast<char *>(&cols), 8);
            auto &m = params.at(name);
            if (static_cast<uint64_t>(m.rows()) != rows || static_cast<uint64_t>(m.cols()) != cols) {
                throw std::runtime_error("checkpoint shape mismatch for " + name);
            }
            in.read(reinterpret_cast<char *>(m.data()), static_cast<std::streamsize>(sizeof(T) * m.size()));
            if (!in) throw std::runtime_error("checkpoint truncated at " + name);
        }
    }

  private:
    // Cached index tables keyed by batch size / dilation.
    struct BiasIdx {
        std::vector<int> cx_i, cy_i, cx_j, cy_j, dx, dy, manh, same;
    };
    BiasIdx bias_idx_;
    std::vector<int> stab_cell_;               // stabilizer -> grid cell
    mutable std::map<int, std::vector<int>> scatter_cache_, gather_cache_, readout_cache_;
    mutable std::map<std::pair<int, int>, std::vector<int>> conv_cache_;
    mutable std::map<int, std::vector<std::vector<int>>> pool_cache_;

    void build_static_tables() {
        const int S = tokens();
        const int d = layout.distance;
        stab_cell_.resize(S);
        std::vector<int> gx(S), gy(S);
        for (const auto &s : layout.stabilizers) {
            gx[s.index] = (s.pos.x + 1) / 2;
            gy[s.index] = (s.pos.y + 1) / 2;
            stab_cell_[s.index] = gy[s.index] * (d + 1) + gx[s.index];
        }
        for (int i = 0; i < S; i++) {
            for (int j = 0; j < S; j++) {
                bias_idx_.cx_i.push_back(gx[i]);
                bias_idx_.cy_i.push_back(gy[i]);
                bias_idx_.cx_j.push_back(gx[j]);
                bias_idx_.cy_j.push_back(gy[j]);
                bias_idx_.dx.push_back(gx[i] - gx[j] + kMaxDistance + 1);
                bias_idx_.dy.push_back(gy[i] - gy[j] + kMaxDistance + 1);
                int manh = std::abs(gx[i] - gx[j]) + std::abs(gy[i] - gy[j]);
                bias_idx_.manh.push_back(std::min(manh, kOffsetBuckets - 1));
                bias_idx_.same.push_back(layout.stabilizers[i].basis == layout.stabilizers[j].basis ? 1 : 0);
            }
        }
    }

    // (B*S) rows of repeated 0..S-1, for tiling index embeddings.
    std::vector<int> tile_idx(int batch) const {
        auto it = gather_cache_.find(-batch);
        if (it != gather_cache_.end()) return it->second;
        std::vector<int> idx;
        const int S = tokens();
        for (int b = 0; b < batch; b++) {
            for (int i = 0; i < S; i++) idx.push_back(i);
        }
        gather_cache_[-batch] = idx;
        return idx;
    }

    // Grid scatter: row (b*G + cell) pulls the stabilizer row or padding.
    const std::vector<int> &scatter_idx(int batch) const {
        auto it = scatter_cache_.find(batch);
        if (it != scatter_cache_.end()) return it->second;
        const int S = tokens();
        const int G = grid();
        std::vector<int> idx(static_cast<size_t>(batch) * G, -1);
        for (int b = 0; b < batch; b++) {
            for (int i = 0; i < S; i++) {
                idx[static_cast<size_t>(b) * G + stab_cell_[i]] = b * S + i;
            }
        }
        return scatter_cache_[batch] = std::move(idx);
    }

    // Gather stabilizer cells back from the grid.
    const std::vector<int> &gather_idx(int batch) const {
        auto it = gather_cache_.find(batch);
        if (it != gather_cache_.end()) return it->second;
        const int S = tokens();
        const int G = grid();
        std::vector<int> idx(static_cast<size_t>(batch) * S);
        for (int b = 0; b < batch; b++) {
            for (int i = 0; i < S; i++) {
                idx[static_cast<size_t>(b) * S + i] = b * G + stab_cell_[i];
            }
        }
        return gather_cache_[batch] = std::move(idx);
    }

    // 3x3 neighborhood (with dilation) per grid cell; -1 when off-grid.
    const std::vector<int> &conv_idx(int batch, int dilation) const {
        auto key = std::make_pair(batch, dilation);
        auto it = conv_cache_.find(key);
        if (it != conv_cache_.end()) return it->second;
        const int w = layout.distance + 1;
        const int G = grid();
        std::vector<int> idx;
        idx.reserve(static_cast<size_t>(batch) * G * 9);
        for (int b = 0; b < batch; b++) {
            for (int cy = 0; cy < w; cy++) {
                for (int cx = 0; cx < w; cx++) {
                    for (int oy = -1; oy <= 1; oy++) {
                        for (int ox = -1; ox <= 1; ox++) {
                            int nx = cx + ox * dilation, ny = cy + oy * dilation;
                            if (nx < 0 || ny < 0 || nx >= w || ny >= w) {
                                idx.push_back(-1);
                            } else {
                                idx.push_back(b * G + ny * w + nx);
                            }
                        }
                    }
                }
            }
        }
        return conv_cache_[key] = std::move(idx);
    }

    // 2x2 stabilizer-corner cells around each data qubit.
    const std::vector<int> &readout_idx(int batch) const {
        auto it = readout_cache_.find(batch);
        if (it != readout_cache_.end()) return it->second;
        const int d = layout.distance;
        const int w = d + 1;
        const int G = grid();
        std::vector<int> idx;
        idx.reserve(static_cast<size_t>(batch) * d * d * 4);
        for (int b = 0; b < batch; b++) {
            for (int r = 0; r < d; r++) {
                for (int c = 0; c < d; c++) {
                    for (int oy = 0; oy <= 1; oy++) {
                        for (int ox = 0; ox <= 1; ox++) {
                            idx.push_back(b * G + (r + oy) * w + (c + ox));
                        }
                    }
                }
            }
        }
        return readout_cache_[batch] = std::move(idx);
    }

    // Pool data-qubit rows perpendicular to the observable lines: line i
    // averages the d qubits whose perpendicular coordinate is i.
    const std::vector<std::vector<int>> &pool_groups(int batch) const {
        auto it = pool_cache_.find(batch);
        if (it != pool_cache_.end()) return it->second;
        const int d = layout.distance;
        std::vector<std::vector<int>> groups;
        groups.reserve(static_cast<size_t>(batch) * d);
        for (int b = 0; b < batch; b++) {
            for (int line = 0; line < d; line++) {
                std::vector<int> g;
                for (int k = 0; k < d; k++) {
                    // Z basis: line indexes columns (perpendicular to row
                    // observables); X basis: rows.
                    int r = layout.basis == Basis::Z ? k : line;
                    int c = layout.basis == Basis::Z ? line : k;
                    g.push_back(b * d * d + r * d + c);
                }
                groups.push_back(std::move(g));
            }
        }
        return pool_cache_[batch] = std::move(groups);
    }
};

// Ensembling: mean of member logits, sigmoid at the end (geometric mean of
// probabilities).
inline double ensemble_probability(const std::vector<double> &member_probs) {
    double sum_logit = 0;
    for (double p : member_probs) {
        if (p <= 0 || p >= 1) {
            throw std::invalid_argument("ensemble member probability must be in (0,1)");
        }
        sum_logit += std::log(p / (1 - p));
    }
    double mean = sum_logit / static_cast<double>(member_probs.size());
    return 1.0 / (1.0 + std::exp(-mean));
}

}  // namespace qsurf

#endif
