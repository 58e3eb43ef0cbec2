/*
 * Copyright 2026 The mavec-mapper Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/**
 * @file workload.hpp
 * @brief Layer chains: presets, JSON-lines files and seeded synthetic data.
 *
 * File format, one JSON object per line:
 *   {"workload": "name", "seed": 7}            optional header
 *   {"name": "1.1", "kind": "conv", "X": 224, "Y": 224, "C": 3,
 *    "R": 3, "S": 3, "Nf": 64, "stride": 1, "pad": 1, "pool": 2}
 * `pool` is an optional max-pool window (and stride) applied after the layer.
 * Blank lines and lines starting with '#' are skipped.
 */
#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mavec/layer.hpp"
#include "mavec/program.hpp"
#include "mavec/tensor.hpp"

namespace mavec {

struct WorkloadFile {
    std::string name;
    std::vector<LayerSpec> layers;
    std::vector<int> pool_after; // 0 = no pooling after layer i
    std::uint64_t seed = 1;

    /// Kind of the layer that consumes layer i's output.
    std::optional<LayerSpec> consumer_of(std::size_t i) const {
        if (pool_after[i] > 0) {
            const auto& l = layers[i];
            LayerSpec pool;
            pool.name = l.name + ".pool";
            pool.kind = LayerKind::MaxPool;
            pool.X = l.out_p();
            pool.Y = l.out_q();
            pool.C = l.out_channels();
            pool.Nf = pool.C;
            pool.R = pool.S = pool.stride = pool_after[i];
            return pool;
        }
        if (i + 1 < layers.size()) return layers[i + 1];
        return std::nullopt;
    }
};

inline void validate_chain(const WorkloadFile& w) {
    if (w.layers.empty()) throw WorkloadError("workload '" + w.name + "' has no layers");
    for (const auto& l : w.layers) {
        try {
            l.validate();
        } catch (const Error& e) {
            throw WorkloadError("layer '" + l.name + "': " + e.what());
        }
    }
    for (std::size_t i = 1; i < w.layers.size(); ++i) {
        const auto& a = w.layers[i - 1];
        const auto& b = w.layers[i];
        const int k = w.pool_after[i - 1] > 0 ? w.pool_after[i - 1] : 1;
        const int x = a.out_p() / k, y = a.out_q() / k;
        if (b.X != x || b.Y != y || b.C != a.out_channels()) {
            std::ostringstream os;
            os << "layers '" << a.name << "' -> '" << b.name << "' do not chain: output "
               << x << 'x' << y << 'x' << a.out_channels() << " vs input " << b.X << 'x' << b.Y
               << 'x' << b.C;
            throw WorkloadError(os.str());
        }
    }
}

inline LayerSpec conv_layer(std::string name, int xy, int c, int nf, int k = 3, int stride = 1,
                            int pad = 1) {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = LayerKind::Conv;
    l.X = l.Y = xy;
    l.C = c;
    l.R = l.S = k;
    l.Nf = nf;
    l.stride = stride;
    l.pad = pad;
    l.activation = Activation::Relu;
    return l;
}

inline WorkloadFile preset_vgg19_conv() {
    WorkloadFile w;
    w.name = "vgg19-conv";
    struct Row { const char* name; int xy, c, nf, pool; };
    static constexpr Row rows[] = {
        {"1.1", 224, 3, 64, 0},    {"1.2", 224, 64, 64, 2},   {"2.1", 112, 64, 128, 0},
        {"2.2", 112, 128, 128, 2}, {"3.1", 56, 128, 256, 0},  {"3.2", 56, 256, 256, 0},
        {"3.3", 56, 256, 256, 0},  {"3.4", 56, 256, 256, 2},  {"4.1", 28, 256, 512, 0},
        {"4.2", 28, 512, 512, 0},  {"4.3", 28, 512, 512, 0},  {"4.4", 28, 512, 512, 2},
        {"5.1", 14, 512, 512, 0},  {"5.2", 14, 512, 512, 0},  {"5.3", 14, 512, 512, 0},
        {"5.4", 14, 512, 512, 0},
    };
    for (const auto& r : rows) {
        w.layers.push_back(conv_layer(r.name, r.xy, r.c, r.nf));
        w.pool_after.push_back(r.pool);
    }
    validate_chain(w);
    return w;
}

inline WorkloadFile preset_case_study() {
    WorkloadFile w;
    w.name = "case-study";
    w.layers.push_back(conv_layer("case", 4, 4, 8));
    w.pool_after.push_back(0);
    validate_chain(w);
    return w;
}

inline WorkloadFile load_preset(const std::string& name) {
    if (name == "vgg19-conv") return preset_vgg19_conv();
    if (name == "case-study") return preset_case_study();
    throw WorkloadError("unknown preset '" + name + "' (expected vgg19-conv or case-study)");
}

inline WorkloadFile read_workload(std::istream& is, const std::string& origin = "<stream>") {
    WorkloadFile w;
    w.name = origin;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        auto where = [&] { return origin + ":" + std::to_string(lineno) + ": "; };
        if (j.is_discarded() || !j.is_object()) throw WorkloadError(where() + "not a JSON object");
        if (j.contains("workload")) {
            w.name = j["workload"].get<std::string>();
            w.seed = j.value("seed", std::uint64_t{1});
            continue;
        }
        try {
            auto l = layer_from_json(j);
            if (l.name.empty()) l.name = "L" + std::to_string(w.layers.size() + 1);
            w.layers.push_back(l);
            w.pool_after.push_back(j.value("pool", 0));
        } catch (const std::exception& e) {
            throw WorkloadError(where() + e.what());
        }
    }
    validate_chain(w);
    return w;
}

inline WorkloadFile load_workload_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw WorkloadError("cannot open workload '" + path + "'");
    return read_workload(in, path);
}

inline void write_workload(std::ostream& os, const WorkloadFile& w) {
    os << nlohmann::json{{"workload", w.name}, {"seed", w.seed}}.dump() << '\n';
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        auto j = layer_to_json(w.layers[i]);
        if (w.pool_after[i] > 0) j["pool"] = w.pool_after[i];
        os << j.dump() << '\n';
    }
}

// ---------------- synthetic data ----------------

/// Multiples of 1/16 in [-2, 2]; exactly representable, so most sums are exact.
inline float synthetic_value(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d(-32, 32);
    return static_cast<float>(d(rng)) / 16.0f;
}

inline Tensor synthetic_input(const LayerSpec& l, std::uint64_t seed) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 1);
    Tensor t(l.X, l.Y, l.C);
    for (auto& v : t.values) v = synthetic_value(rng);
    return t;
}

inline FilterBank synthetic_weights(const LayerSpec& l, std::uint64_t seed) {
    std::mt19937_64 rng(seed * 0xC2B2AE3D27D4EB4FULL + 2);
    FilterBank w(l.Nf, l.C, l.R, l.S);
    for (auto& v : w.values) v = synthetic_value(rng);
    return w;
}

} // namespace mavec
