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

#include <algorithm>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include "CLI11.hpp"
#include "cli_common.hpp"
#include "qsurf/dataset_io.hpp"
#include "qsurf/decoder.hpp"
#include "qsurf/dem.hpp"
#include "qsurf/exact_ml.hpp"
#include "qsurf/fit.hpp"
#include "qsurf/matching.hpp"
#include "qsurf/trainer.hpp"

namespace qsurf {
namespace {

DecoderProfile profile_from(const std::string &name, int distance) {
    if (name == "toy") return toy_profile(distance);
    if (name == "paper") return paper_profile(distance);
    throw std::invalid_argument("unknown profile: " + name);
}

std::vector<int> parse_int_list(const std::string &csv) {
    std::vector<int> out;
    std::istringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stoi(tok));
    }
    return out;
}

std::vector<double> parse_double_list(const std::string &csv) {
    std::vector<double> out;
    std::istringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stod(tok));
    }
    return out;
}

// Replays a fixed dataset in shuffled order (fine-tuning on limited samples).
class ReplaySource : public DataSource {
  public:
    ReplaySource(std::vector<ShotRecord> shots, int cycles, uint64_t seed)
        : shots_(std::move(shots)), cycles_(cycles), rng_(seed) {
        if (shots_.empty()) throw std::invalid_argument("empty replay dataset");
        order_.resize(shots_.size());
        for (size_t i = 0; i < order_.size(); i++) order_[i] = i;
    }

    ShotRecord sample(std::mt19937_64 & /*rng*/, int64_t /*step*/) override {
        if (pos_ == order_.size()) {
            std::shuffle(order_.begin(), order_.end(), rng_);
            pos_ = 0;
        }
        return shots_[order_[pos_++]];
    }
    int cycles() const override { return cycles_; }

  private:
    std::vector<ShotRecord> shots_;
    int cycles_ = 0;
    std::mt19937_64 rng_;
    std::vector<size_t> order_;
    size_t pos_ = 0;
};

std::vector<EvalSet> make_eval_sets(const ExperimentConfig &cfg, const CodeLayout &layout,
                                    const std::vector<int> &durations, int shots, uint64_t seed) {
    std::vector<EvalSet> sets;
    auto opts = options_from(cfg);
    for (int n : durations) {
        auto circuit = build_memory_circuit(layout, n, noise_from(cfg));
        EvalSet set;
        set.duration = n;
        set.shots = sample_dataset(circuit, layout, shots, opts, seed ^ (0xe7a1ull * n));
        sets.push_back(std::move(set));
    }
    return sets;
}

// Neural flip probabilities (line 0) for a set of shots, optionally ensembled
// over several checkpoints by logit averaging.
std::vector<double> neural_probs(Decoder<float> &dec, const std::vector<TensorStore<float>> &member_params,
                                 const std::vector<ShotRecord> &shots, int max_batch = 256) {
    const int d = dec.layout.distance;
    std::vector<double> out(shots.size(), 0.0);
    for (const auto &params : member_params) {
        dec.params = params;
        for (size_t start = 0; start < shots.size(); start += max_batch) {
            size_t end = std::min(shots.size(), start + max_batch);
            std::vector<const ShotRecord *> batch;
            for (size_t i = start; i < end; i++) batch.push_back(&shots[i]);
            auto probs = dec.predict(batch);
            for (size_t i = 0; i < batch.size(); i++) {
                double p = std::clamp<double>(probs(static_cast<Eigen::Index>(i) * d, 0), 1e-9, 1 - 1e-9);
                out[start + i] += std::log(p / (1 - p));
            }
        }
    }
    for (auto &v : out) {
        v = 1.0 / (1.0 + std::exp(-v / static_cast<double>(member_params.size())));
    }
    return out;
}

// Matching decode of line 0 across shots, parallel over a worker pool.
std::vector<uint8_t> matching_flips(const MatchingGraph &graph, const std::vector<ShotRecord> &shots,
                                    int threads) {
    std::vector<uint8_t> out(shots.size(), 0);
    auto work = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; i++) {
            out[i] = static_cast<uint8_t>(graph.decode_bits(shots[i].detectors) & 1);
        }
    };
    if (threads <= 1) {
        work(0, shots.size());
    } else {
        // Warm the shared shortest-path cache, then fan out read-only.
        for (int i = 0; i < graph.num_detectors; i++) graph.dijkstra(i);
        std::vector<std::thread> pool;
        size_t chunk = (shots.size() + threads - 1) / threads;
        for (int t = 0; t < threads; t++) {
            size_t begin = std::min(shots.size(), t * chunk);
            size_t end = std::min(shots.size(), begin + chunk);
            if (begin < end) pool.emplace_back(work, begin, end);
        }
        for (auto &th : pool) th.join();
    }
    return out;
}

struct CommonMlArgs {
    ExperimentConfig cfg;
    std::string profile = "toy";
    std::vector<std::string> ckpts;
    std::string out_prefix = "qsurf";
};

Decoder<float> make_decoder(const CommonMlArgs &args, const CodeLayout &layout) {
    Decoder<float> dec(layout, profile_from(args.profile, layout.distance), args.cfg.leakage_inputs);
    dec.init(args.cfg.seed);
    return dec;
}

int cmd_train(const std::string &name, const std::vector<std::string> &argv) {
    CommonMlArgs args;
    std::string train_cfg_path, init_ckpt, out_ckpt = "model.ckpt", log_path, pretrain_dem, data_path;
    std::string eval_durations = "3,5";
    int eval_shots = 2000;
    double ft_wd = 0.01;
    TrainConfig tcfg;
    tcfg.sample_budget = 100000;
    tcfg.batch_initial = 64;
    tcfg.batch_final = 64;
    tcfg.batch_change_step = std::numeric_limits<int64_t>::max();
    tcfg.warmup_steps = 100;
    tcfg.decay_steps = {};

    CLI::App app{name == "train" ? "train a decoder" : "fine-tune a pretrained decoder"};
    add_experiment_flags(&app, args.cfg);
    app.add_option("--profile", args.profile, "network profile: toy or paper");
    app.add_option("--train-config", train_cfg_path, "flat key-value training config file");
    app.add_option("--budget", tcfg.sample_budget, "training sample budget");
    app.add_option("--lr", tcfg.lr, "peak learning rate");
    app.add_option("--batch", tcfg.batch_initial, "initial batch size");
    app.add_option("--eval-durations", eval_durations, "dev-eval cycle counts (csv)");
    app.add_option("--eval-shots", eval_shots, "dev-eval shots per duration");
    app.add_option("--pretrain-dem", pretrain_dem, "DEM file: pretrain on curriculum-scaled DEM samples");
    app.add_option("--data", data_path, "dataset file to replay (fine-tuning)");
    app.add_option("--init", init_ckpt, "initial checkpoint");
    app.add_option("--ft-wd", ft_wd, "fine-tuning weight decay toward the pretrained parameters");
    app.add_option("-o,--out", out_ckpt, "output checkpoint");
    app.add_option("--log", log_path, "training log file");
    try {
        std::vector<std::string> rev(argv.rbegin(), argv.rend());
        app.parse(rev);
    } catch (const CLI::ParseError &e) {
        return app.exit(e);
    }
    if (!train_cfg_path.empty()) apply_kv_config(tcfg, parse_kv_file(train_cfg_path));
    if (tcfg.batch_final < tcfg.batch_initial) tcfg.batch_final = tcfg.batch_initial;

    auto layout = layout_from(args.cfg);
    auto dec = make_decoder(args, layout);
    if (!init_ckpt.empty()) dec.load(init_ckpt);
    if (name == "fine-tune" && init_ckpt.empty()) {
        std::cerr << "fine-tune requires --init\n";
        return 1;
    }

    auto circuit = build_memory_circuit(layout, args.cfg.cycles, noise_from(args.cfg));
    std::unique_ptr<DataSource> source;
    DetectorErrorModel dem;
    if (!pretrain_dem.empty()) {
        std::ifstream in(pretrain_dem);
        if (!in) {
            std::cerr << "cannot open " << pretrain_dem << "\n";
            return 1;
        }
        std::stringstream buf;
        buf << in.rdbuf();
        dem = parse_dem(buf.str());
        tcfg.use_curriculum = true;
        source = std::make_unique<DemSource>(dem, circuit, layout, tcfg);
    } else if (!data_path.empty()) {
        auto ds = read_dataset(data_path);
        source = std::make_unique<ReplaySource>(std::move(ds.shots), ds.header.cycles, args.cfg.seed);
    } else {
        source = std::make_unique<SimulatorSource>(circuit, layout, options_from(args.cfg), args.cfg.seed);
    }

    auto eval_sets = make_eval_sets(args.cfg, layout, parse_int_list(eval_durations), eval_shots,
                                    args.cfg.seed ^ 0xdeadull);
    std::ofstream log_file;
    std::ostream *log_stream = &std::cout;
    if (!log_path.empty()) {
        log_file.open(log_path);
        log_stream = &log_file;
    }

    TrainResult result;
    if (name == "fine-tune") {
        result = fine_tune(dec, tcfg, *source, eval_sets, ft_wd, log_stream);
    } else {
        result = train(dec, tcfg, *source, eval_sets, nullptr, log_stream);
    }
    dec.params = result.best_params;
    dec.save(out_ckpt);
    std::cout << "saved " << out_ckpt << " (best dev ler " << result.best_ler << " at step "
              << result.best_step << ", " << result.samples_consumed << " samples)\n";
    return result.gated_checkpoint_found || eval_sets.empty() ? 0 : 2;
}

int cmd_evaluate(const std::vector<std::string> &argv) {
    CommonMlArgs args;
    std::string durations_csv = "5,10,25";
    std::string decoders_csv = "neural,matching";
    int shots = 10000;
    CLI::App app{"evaluate decoders on memory experiments"};
    add_experiment_flags(&app, args.cfg);
    app.add_option("--profile", args.profile, "network profile: toy or paper");
    app.add_option("--ckpt", args.ckpts, "checkpoint file (repeat to ensemble)");
    app.add_option("--durations", durations_csv, "cycle counts to evaluate (csv)");
    app.add_option("--shots", shots, "shots per duration");
    app.add_option("--decoders", decoders_csv, "csv of neural,matching,oracle");
    app.add_option("-o,--out", args.out_prefix, "output file prefix");
    try {
        std::vector<std::string> rev(argv.rbegin(), argv.rend());
        app.parse(rev);
    } catch (const CLI::ParseError &e) {
        return app.exit(e);
    }
    int threads = resolve_threads(args.cfg.threads);
    auto layout = layout_from(args.cfg);
    auto durations = parse_int_list(durations_csv);
    bool want_neural = decoders_csv.find("neural") != std::string::npos;
    bool want_matching = decoders_csv.find("matching") != std::string::npos;
    bool want_oracle = decoders_csv.find("oracle") != std::string::npos;
    if (want_neural && args.ckpts.empty()) {
        std::cerr << "neural evaluation requires --ckpt\n";
        return 1;
    }

    std::optional<Decoder<float>> dec;
    std::vector<TensorStore<float>> members;
    if (want_neural) {
        dec.emplace(make_decoder(args, layout));
        for (const auto &path : args.ckpts) {
            dec->load(path);
            members.push_back(dec->params);
        }
    }

    std::ofstream fid(args.out_prefix + "_fidelity.csv");
    fid << "# config_hash=" << std::hex << config_hash(args.cfg) << std::dec << "\n";
    fid << "decoder,n,shots,errors,error_rate,fidelity\n";
    std::map<std::string, std::vector<DurationStat>> stats;
    for (int n : durations) {
        auto circuit = build_memory_circuit(layout, n, noise_from(args.cfg));
        auto records = sample_dataset(circuit, layout, shots, options_from(args.cfg),
                                      args.cfg.seed ^ (0xabcdull * n));
        std::map<std::string, uint64_t> errors;
        if (want_neural) {
            auto probs = neural_probs(*dec, members, records);
            for (size_t i = 0; i < records.size(); i++) {
                errors["neural"] += (probs[i] > 0.5 ? 1 : 0) != records[i].labels[0];
            }
        }
        if (want_matching || want_oracle) {
            auto dem = extract_dem(circuit);
            if (want_matching) {
                auto graph = MatchingGraph::build(dem);
                auto flips = matching_flips(graph, records, threads);
                for (size_t i = 0; i < records.size(); i++) {
                    errors["matching"] += flips[i] != records[i].labels[0];
                }
            }
            if (want_oracle) {
                ExactMlDecoder oracle(dem, 0);
                std::map<std::vector<uint8_t>, int> cache;
                for (const auto &r : records) {
                    auto [it, fresh] = cache.try_emplace(r.detectors, -1);
                    if (fresh) it->second = oracle.decode(r.detectors).flip;
                    errors["oracle"] += it->second != r.labels[0];
                }
            }
        }
        for (const auto &[name, err] : errors) {
            double rate = static_cast<double>(err) / shots;
            fid << name << "," << n << "," << shots << "," << err << "," << rate << "," << fidelity(rate)
                << "\n";
            stats[name].push_back({n, err, static_cast<uint64_t>(shots)});
        }
    }
    std::ofstream fit_out(args.out_prefix + "_fit.csv");
    fit_out << "decoder,eps,eps_stderr,eps_lo,eps_hi,r2,intercept\n";
    for (const auto &[name, st] : stats) {
        try {
            auto fit = fit_ler(st, 1000, args.cfg.seed);
            fit_out << name << "," << fit.eps << "," << fit.eps_stderr << "," << fit.eps_lo << ","
                    << fit.eps_hi << "," << fit.r2 << "," << fit.log_f0 << "\n";
            std::cout << name << ": eps=" << fit.eps << " +- " << fit.eps_stderr << " (r2=" << fit.r2
                      << ")\n";
        } catch (const std::invalid_argument &e) {
            std::cout << name << ": fit rejected (" << e.what() << ")\n";
        }
    }
    std::cout << "wrote " << args.out_prefix << "_fidelity.csv and _fit.csv\n";
    return 0;
}

// Shared plumbing for calibrate/postselect: predictions + labels at one
// duration.
int cmd_confidence(const std::string &name, const std::vector<std::string> &argv) {
    CommonMlArgs args;
    int shots = 20000;
    int bins = 10;
    std::string fractions_csv = "0,0.01,0.02,0.05,0.1";
    CLI::App app{name == "calibrate" ? "calibration curve of a checkpoint" : "confidence-based postselection"};
    add_experiment_flags(&app, args.cfg);
    app.add_option("--profile", args.profile, "network profile: toy or paper");
    app.add_option("--ckpt", args.ckpts, "checkpoint file (repeat to ensemble)")->required();
    app.add_option("--shots", shots, "evaluation shots");
    app.add_option("--bins", bins, "calibration bins");
    app.add_option("--fractions", fractions_csv, "rejected fractions (csv)");
    app.add_option("-o,--out", args.out_prefix, "output file prefix");
    try {
        std::vector<std::string> rev(argv.rbegin(), argv.rend());
        app.parse(rev);
    } catch (const CLI::ParseError &e) {
        return app.exit(e);
    }
    auto layout = layout_from(args.cfg);
    auto dec = make_decoder(args, layout);
    std::vector<TensorStore<float>> members;
    for (const auto &path : args.ckpts) {
        dec.load(path);
        members.push_back(dec.params);
    }
    auto circuit = build_memory_circuit(layout, args.cfg.cycles, noise_from(args.cfg));
    auto records = sample_dataset(circuit, layout, shots, options_from(args.cfg), args.cfg.seed ^ 0xc0ffee);
    auto probs = neural_probs(dec, members, records);
    std::vector<uint8_t> labels;
    for (const auto &r : records) labels.push_back(r.labels[0]);

    if (name == "calibrate") {
        auto curve = calibration_curve(probs, labels, bins);
        std::ofstream out(args.out_prefix + "_calibration.csv");
        out << "# config_hash=" << std::hex << config_hash(args.cfg) << std::dec << "\n";
        out << "mean_prediction,empirical_frequency,count,freq_lo,freq_hi\n";
        for (const auto &b : curve) {
            out << b.mean_prediction << "," << b.empirical_frequency << "," << b.count << "," << b.freq_lo
                << "," << b.freq_hi << "\n";
        }
        std::cout << "wrote " << args.out_prefix << "_calibration.csv (" << curve.size() << " bins)\n";
    } else {
        auto pts = postselect(probs, labels, parse_double_list(fractions_csv), args.cfg.cycles);
        std::ofstream out(args.out_prefix + "_postselect.csv");
        out << "# config_hash=" << std::hex << config_hash(args.cfg) << std::dec << "\n";
        out << "rejected_fraction,kept,error_rate,error_stderr,eps\n";
        for (const auto &p : pts) {
            out << p.rejected_fraction << "," << p.kept << "," << p.error_rate << "," << p.error_stderr
                << "," << p.eps << "\n";
        }
        std::cout << "wrote " << args.out_prefix << "_postselect.csv (" << pts.size() << " points)\n";
    }
    return 0;
}

}  // namespace
}  // namespace qsurf

int qsurf_ml_main(const std::string &subcommand, const std::vector<std::string> &args) {
    using namespace qsurf;
    if (subcommand == "train" || subcommand == "fine-tune") return cmd_train(subcommand, args);
    if (subcommand == "evaluate") return cmd_evaluate(args);
    if (subcommand == "calibrate" || subcommand == "postselect") return cmd_confidence(subcommand, args);
    std::cerr << "unknown subcommand: " << subcommand << "\n";
    return 1;
}
