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

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cli_common.hpp"
#include "qsurf/dataset_io.hpp"
#include "qsurf/dem.hpp"

namespace qsurf {
namespace {

int cmd_simulate(const ExperimentConfig &cfg, size_t shots, const std::string &out_path) {
    auto layout = layout_from(cfg);
    auto circuit = build_memory_circuit(layout, cfg.cycles, noise_from(cfg));
    auto records = sample_dataset(circuit, layout, shots, options_from(cfg), cfg.seed);
    write_dataset(out_path, layout, circuit, options_from(cfg), records, config_hash(cfg));
    double events = 0;
    for (const auto &rec : records) {
        for (uint8_t e : rec.detectors) events += e;
    }
    std::cout << "wrote " << records.size() << " shots to " << out_path << " (event density "
              << events / (static_cast<double>(records.size()) * circuit.detectors.size()) << ")\n";
    return 0;
}

int cmd_extract_dem(const ExperimentConfig &cfg, const std::string &out_path) {
    auto layout = layout_from(cfg);
    auto circuit = build_memory_circuit(layout, cfg.cycles, noise_from(cfg));
    auto dem = extract_dem(circuit);
    if (dem.skipped_leakage) {
        std::cerr << "warning: leakage channels are outside the detector error model and were skipped\n";
    }
    std::ofstream out(out_path);
    if (!out) {
        std::cerr << "cannot open " << out_path << "\n";
        return 1;
    }
    out << serialize_dem(dem);
    std::cout << "wrote " << dem.mechanisms.size() << " mechanisms over " << dem.num_detectors
              << " detectors to " << out_path << "\n";
    return 0;
}

}  // namespace
}  // namespace qsurf

// Implemented in tools/qsurf_cli_ml.cc once the decoder stack is linked in.
int qsurf_ml_main(const std::string &subcommand, const std::vector<std::string> &args);

int main(int argc, char **argv) {
    using namespace qsurf;
    CLI::App app{"surface-code QEC workbench"};
    app.require_subcommand(1);

    ExperimentConfig cfg;
    size_t shots = 10000;
    std::string out_path = "shots.bin";

    auto *sim = app.add_subcommand("simulate", "sample memory-experiment shots to a dataset file");
    add_experiment_flags(sim, cfg);
    sim->add_option("--shots", shots, "number of shots");
    sim->add_option("-o,--out", out_path, "output file");

    auto *dem = app.add_subcommand("extract-dem", "extract and serialize the detector error model");
    add_experiment_flags(dem, cfg);
    dem->add_option("-o,--out", out_path, "output file");

    // Decoder-stack subcommands forward their arguments untouched.
    std::vector<std::string> ml_cmds = {"train", "fine-tune", "evaluate", "calibrate", "postselect"};
    for (const auto &name : ml_cmds) {
        auto *sub = app.add_subcommand(name);
        sub->allow_extras();
    }

    CLI11_PARSE(app, argc, argv);
    resolve_threads(cfg.threads);

    try {
        if (sim->parsed()) return cmd_simulate(cfg, shots, out_path);
        if (dem->parsed()) return cmd_extract_dem(cfg, out_path);
        for (const auto &name : ml_cmds) {
            auto *sub = app.get_subcommand(name);
            if (sub->parsed()) return qsurf_ml_main(name, sub->remaining());
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
