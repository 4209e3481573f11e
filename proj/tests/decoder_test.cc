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

#include "qsurf/decoder.hpp"

#include <cstdio>
#include <random>

#include "gtest/gtest.h"
#include "qsurf/circuit.hpp"
#include "qsurf/frame_sim.hpp"
#include "qsurf/layout.hpp"

namespace qsurf {
namespace {

DecoderProfile tiny_profile() {
    DecoderProfile p;
    p.dim = 8;
    p.heads = 2;
    p.key = 4;
    p.widening = 2;
    p.conv_dim = 4;
    p.bias_dim = 4;
    p.bias_layers = 1;
    p.embed_layers = 1;
    p.readout_dim = 6;
    p.readout_layers = 2;
    p.layers = 2;
    p.dilations = {1, 1, 1};
    p.aux_weight = 0.05;
    return p;
}

std::vector<ShotRecord> sample_records(int d, int cycles, int count, uint64_t seed, bool soft) {
    auto layout = build_layout(d, Basis::Z);
    NoiseParams noise;
    noise.model = NoiseModel::SI1000;
    noise.p = 0.01;
    auto circuit = build_memory_circuit(layout, cycles, noise);
    DatasetOptions opts;
    if (soft) opts.readout = ReadoutParams{10.0, 0.01, 0.001};
    return sample_dataset(circuit, layout, count, opts, seed);
}

std::vector<const ShotRecord *> ptrs(const std::vector<ShotRecord> &recs) {
    std::vector<const ShotRecord *> out;
    for (const auto &r : recs) out.push_back(&r);
    return out;
}

TEST(Decoder, GradCheck) {
    auto layout = build_layout(3, Basis::Z);
    Decoder<double> dec(layout, tiny_profile(), false);
    dec.init(7);
    auto recs = sample_records(3, 2, 2, 11, true);
    auto batch = std::make_shared<BatchInputs<double>>(dec.make_batch(ptrs(recs)));

    auto eval_loss = [&]() {
        auto pass = dec.begin_pass();
        auto nodes = dec.forward(*pass, batch);
        return pass->tape.val(nodes.total_loss)(0, 0);
    };

    auto pass = dec.begin_pass();
    auto nodes = dec.forward(*pass, batch);
    pass->tape.backward(nodes.total_loss);
    auto grads = dec.collect_grads(*pass);
    std::vector<double> flat = dec.params.to_flat();
    std::vector<double> gflat = grads.to_flat();
    ASSERT_EQ(flat.size(), gflat.size());

    std::mt19937_64 rng(99);
    std::uniform_int_distribution<size_t> pick(0, flat.size() - 1);
    const double eps = 1e-5;
    int checked = 0;
    double worst = 0;
    while (checked < 220) {
        size_t i = pick(rng);
        double orig = flat[i];
        flat[i] = orig + eps;
        dec.params.from_flat(flat);
        double lp = eval_loss();
        flat[i] = orig - eps;
        dec.params.from_flat(flat);
        double lm = eval_loss();
        flat[i] = orig;
        double numeric = (lp - lm) / (2 * eps);
        double denom = std::max({1.0, std::abs(numeric), std::abs(gflat[i])});
        worst = std::max(worst, std::abs(numeric - gflat[i]) / denom);
        checked++;
    }
    dec.params.from_flat(flat);
    EXPECT_LT(worst, 1e-4) << "worst relative gradient error over " << checked << " parameters";
}

TEST(Decoder, ParamCountVariesOnlyInIndexEmbeddings) {
    auto prof = tiny_profile();
    std::vector<size_t> fixed_part;
    for (int d : {3, 5, 7}) {
        Decoder<float> dec(build_layout(d, Basis::Z), prof, false);
        fixed_part.push_back(dec.params.total_parameters() - dec.index_embedding_parameters());
    }
    EXPECT_EQ(fixed_part[0], fixed_part[1]);
    EXPECT_EQ(fixed_part[1], fixed_part[2]);
}

TEST(Decoder, SessionMatchesUnrolledForward) {
    auto layout = build_layout(3, Basis::Z);
    Decoder<double> dec(layout, tiny_profile(), false);
    dec.init(3);
    auto recs = sample_records(3, 4, 3, 21, false);
    auto p = ptrs(recs);
    auto unrolled = dec.predict(p);

    auto batch = dec.make_batch(p);
    auto session = dec.begin_session(3);
    for (int n = 0; n < batch.cycles; n++) {
        dec.session_step(session, batch.bulk_feats[n], batch.indicator[n]);
    }
    auto incremental = dec.session_readout(session, batch.final_feats, batch.off_mask);
    ASSERT_EQ(unrolled.rows(), incremental.rows());
    EXPECT_LT((unrolled - incremental).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Decoder, CheckpointRoundTrip) {
    auto layout = build_layout(3, Basis::Z);
    Decoder<float> dec(layout, tiny_profile(), false);
    dec.init(5);
    auto recs = sample_records(3, 2, 2, 31, false);
    auto before = dec.predict(ptrs(recs));

    std::string path = "decoder_ckpt_test.bin";
    dec.save(path);
    Decoder<float> other(layout, tiny_profile(), false);
    other.init(1234);  // different weights before load
    other.load(path);
    auto after = other.predict(ptrs(recs));
    std::remove(path.c_str());
    EXPECT_LT((before - after).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Decoder, CheckpointRejectsWrongShape) {
    auto layout3 = build_layout(3, Basis::Z);
    auto layout5 = build_layout(5, Basis::Z);
    Decoder<float> dec3(layout3, tiny_profile(), false);
    dec3.init(5);
    std::string path = "decoder_ckpt_shape_test.bin";
    dec3.save(path);
    auto prof5 = tiny_profile();
    prof5.dilations = dilations_for_distance(5);
    Decoder<float> dec5(layout5, prof5, false);
    EXPECT_THROW(dec5.load(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST(Decoder, StateNormStaysBounded) {
    auto layout = build_layout(3, Basis::Z);
    Decoder<float> dec(layout, tiny_profile(), false);
    dec.init(17);
    auto recs = sample_records(3, 8, 2, 41, false);
    auto batch = dec.make_batch(ptrs(recs));
    auto session = dec.begin_session(2);
    double max_norm = 0;
    for (int step = 0; step < 200; step++) {
        int n = step % batch.cycles;
        dec.session_step(session, batch.bulk_feats[n], batch.indicator[n]);
        max_norm = std::max(max_norm, static_cast<double>(session.state.cwiseAbs().maxCoeff()));
    }
    EXPECT_LT(max_norm, 1e3);
    EXPECT_TRUE(std::isfinite(max_norm));
}

TEST(Decoder, EnsembleLogitMean) {
    EXPECT_NEAR(ensemble_probability({0.3, 0.3, 0.3}), 0.3, 1e-12);
    double p = ensemble_probability({0.2, 0.8});
    EXPECT_NEAR(p, 0.5, 1e-12);  // symmetric logits cancel
    EXPECT_THROW(ensemble_probability({0.0, 0.5}), std::invalid_argument);
}

TEST(Decoder, LeakageInputsChangeOnlyInputLayer) {
    auto layout = build_layout(3, Basis::Z);
    Decoder<float> plain(layout, tiny_profile(), false);
    Decoder<float> leak(layout, tiny_profile(), true);
    size_t diff = leak.params.total_parameters() - plain.params.total_parameters();
    EXPECT_EQ(diff, static_cast<size_t>(2 * tiny_profile().dim));
}

}  // namespace
}  // namespace qsurf
