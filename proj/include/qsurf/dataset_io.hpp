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

#ifndef QSURF_DATASET_IO_HPP
#define QSURF_DATASET_IO_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qsurf/frame_sim.hpp"

namespace qsurf {

// Framed binary shot file.
//
// Header (little-endian):
//   char[8]  magic "QSURFSHT"
//   u32      version (1)
//   u32      distance
//   u32      cycles
//   u8       basis (0=X, 1=Z)
//   u8       variant (0=cnot_standard, 1=cz_xzzx)
//   u8       soft flag
//   u8       leakage flag
//   u32      stab_count
//   u32      on_basis_count
//   u32      detector_count
//   u32      observable_count
//   u64      shot_count
//   u64      config_hash (caller-provided provenance tag)
// Then shot_count fixed-width records:
//   f32[cycles*stab_count]      measurements
//   f32[cycles*stab_count]      events
//   f32[2*cycles*stab_count]    leak_post, leak_events  (leakage flag only)
//   u8[on_basis_count]          final_stabs
//   f32[on_basis_count]         final_events
//   u8[detector_count]          detectors
//   u8[observable_count]        labels
struct DatasetHeader {
    uint32_t version = 1;
    uint32_t distance = 0;
    uint32_t cycles = 0;
    uint8_t basis = 1;
    uint8_t variant = 0;
    uint8_t soft = 0;
    uint8_t leakage = 0;
    uint32_t stab_count = 0;
    uint32_t on_basis_count = 0;
    uint32_t detector_count = 0;
    uint32_t observable_count = 0;
    uint64_t shot_count = 0;
    uint64_t config_hash = 0;
};

namespace detail {

inline constexpr char kShotMagic[8] = {'Q', 'S', 'U', 'R', 'F', 'S', 'H', 'T'};

template <typename T>
void write_pod(std::ostream &out, const T &v) {
    out.write(reinterpret_cast<const char *>(&v), sizeof v);
}

template <typename T>
void read_pod(std::istream &in, T &v) {
    in.read(reinterpret_cast<char *>(&v), sizeof v);
    if (!in) {
        throw std::runtime_error("shot file truncated");
    }
}

template <typename T>
void write_vec(std::ostream &out, const std::vector<T> &v) {
    out.write(reinterpret_cast<const char *>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
void read_vec(std::istream &in, std::vector<T> &v, size_t n) {
    v.resize(n);
    in.read(reinterpret_cast<char *>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in) {
        throw std::runtime_error("shot file truncated");
    }
}

}  // namespace detail

inline void write_header(std::ostream &out, const DatasetHeader &h) {
    out.write(detail::kShotMagic, 8);
    detail::write_pod(out, h.version);
    detail::write_pod(out, h.distance);
    detail::write_pod(out, h.cycles);
    detail::write_pod(out, h.basis);
    detail::write_pod(out, h.variant);
    detail::write_pod(out, h.soft);
    detail::write_pod(out, h.leakage);
    detail::write_pod(out, h.stab_count);
    detail::write_pod(out, h.on_basis_count);
    detail::write_pod(out, h.detector_count);
    detail::write_pod(out, h.observable_count);
    detail::write_pod(out, h.shot_count);
    detail::write_pod(out, h.config_hash);
}

inline DatasetHeader read_header(std::istream &in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, detail::kShotMagic, 8) != 0) {
        throw std::runtime_error("not a qsurf shot file");
    }
    DatasetHeader h;
    detail::read_pod(in, h.version);
    if (h.version != 1) {
        throw std::runtime_error("unsupported shot file version " + std::to_string(h.version));
    }
    detail::read_pod(in, h.distance);
    detail::read_pod(in, h.cycles);
    detail::read_pod(in, h.basis);
    detail::read_pod(in, h.variant);
    detail::read_pod(in, h.soft);
    detail::read_pod(in, h.leakage);
    detail::read_pod(in, h.stab_count);
    detail::read_pod(in, h.on_basis_count);
    detail::read_pod(in, h.detector_count);
    detail::read_pod(in, h.observable_count);
    detail::read_pod(in, h.shot_count);
    detail::read_pod(in, h.config_hash);
    return h;
}

inline void write_shot(std::ostream &out, const DatasetHeader &h, const ShotRecord &rec) {
    size_t bulk = static_cast<size_t>(h.cycles) * h.stab_count;
    if (rec.measurements.size() != bulk || rec.final_stabs.size() != h.on_basis_count ||
        rec.detectors.size() != h.detector_count || rec.labels.size() != h.observable_count) {
        throw std::invalid_argument("shot record does not match header dimensions");
    }
    detail::write_vec(out, rec.measurements);
    detail::write_vec(out, rec.events);
    if (h.leakage) {
        if (rec.leak_post.size() != bulk) {
            throw std::invalid_argument("shot record missing leakage inputs");
        }
        detail::write_vec(out, rec.leak_post);
        detail::write_vec(out, rec.leak_events);
    }
    detail::write_vec(out, rec.final_stabs);
    detail::write_vec(out, rec.final_events);
    detail::write_vec(out, rec.detectors);
    detail::write_vec(out, rec.labels);
}

inline ShotRecord read_shot(std::istream &in, const DatasetHeader &h) {
    size_t bulk = static_cast<size_t>(h.cycles) * h.stab_count;
    ShotRecord rec;
    rec.cycles = static_cast<int>(h.cycles);
    rec.stab_count = static_cast<int>(h.stab_count);
    detail::read_vec(in, rec.measurements, bulk);
    detail::read_vec(in, rec.events, bulk);
    if (h.leakage) {
        detail::read_vec(in, rec.leak_post, bulk);
        detail::read_vec(in, rec.leak_events, bulk);
    }
    detail::read_vec(in, rec.final_stabs, h.on_basis_count);
    detail::read_vec(in, rec.final_events, h.on_basis_count);
    detail::read_vec(in, rec.detectors, h.detector_count);
    detail::read_vec(in, rec.labels, h.observable_count);
    return rec;
}

inline void write_dataset(const std::string &path, const CodeLayout &layout, const NoisyCircuit &circuit,
                          const DatasetOptions &opts, const std::vector<ShotRecord> &shots,
                          uint64_t config_hash = 0) {
    DatasetHeader h;
    h.distance = static_cast<uint32_t>(layout.distance);
    h.cycles = static_cast<uint32_t>(circuit.cycles);
    h.basis = layout.basis == Basis::Z ? 1 : 0;
    h.variant = layout.variant == Variant::cz_xzzx ? 1 : 0;
    h.soft = opts.readout.has_value() ? 1 : 0;
    h.leakage = opts.leakage_inputs ? 1 : 0;
    h.stab_count = static_cast<uint32_t>(circuit.stab_count);
    h.on_basis_count = static_cast<uint32_t>(layout.num_on_basis());
    h.detector_count = static_cast<uint32_t>(circuit.detectors.size());
    h.observable_count = static_cast<uint32_t>(circuit.observables.size());
    h.shot_count = shots.size();
    h.config_hash = config_hash;
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    write_header(out, h);
    for (const auto &rec : shots) {
        write_shot(out, h, rec);
    }
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

struct Dataset {
    DatasetHeader header;
    std::vector<ShotRecord> shots;
};

inline Dataset read_dataset(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    Dataset ds;
    ds.header = read_header(in);
    ds.shots.reserve(ds.header.shot_count);
    for (uint64_t i = 0; i < ds.header.shot_count; i++) {
        ds.shots.push_back(read_shot(in, ds.header));
    }
    return ds;
}

}  // namespace qsurf

#endif
