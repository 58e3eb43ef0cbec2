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
 * @file verify.hpp
 * @brief Runs the simulator against the conv oracles on chosen or random layers.
 */
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mavec/fabric.hpp"
#include "mavec/reference.hpp"
#include "mavec/schedule.hpp"
#include "mavec/workload.hpp"

namespace mavec {

inline constexpr double kNaiveRelTol = 1e-5;

struct OracleCase {
    LayerSpec layer;
    ArrayGeom geom;
    std::uint64_t seed = 0;
};

/// X,Y <= 12; C,Nf <= 8; R=S in {1,3}; stride in {1,2}; pad in {0,1}.
/// The array gets one to three channel blocks plus a few spare columns.
inline OracleCase random_oracle_case(std::mt19937_64& rng, int index) {
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    OracleCase c;
    auto& l = c.layer;
    l.name = "rand" + std::to_string(index);
    l.kind = LayerKind::Conv;
    l.R = l.S = pick(0, 1) ? 3 : 1;
    l.stride = pick(1, 2);
    l.pad = pick(0, 1);
    l.X = pick(std::max(1, l.R - 2 * l.pad), 12);
    l.Y = pick(std::max(1, l.S - 2 * l.pad), 12);
    l.C = pick(1, 8);
    l.Nf = pick(1, 8);
    l.activation = pick(0, 1) ? Activation::Relu : Activation::None;
    c.geom = ArrayGeom{4 * pick(1, 3), (l.R + 1) * l.S * pick(1, 3) + pick(0, 3), 1.0};
    c.seed = rng();
    return c;
}

struct OracleVerdict {
    std::string layer;
    bool bit_exact = false;        // vs the staged oracle
    bool within_tolerance = false; // vs the naive oracle
    bool balanced = false;
    int mismatches = 0;
    double max_rel_naive = 0.0;
    std::uint64_t cycles = 0;
    std::string error;

    bool ok() const { return error.empty() && bit_exact && within_tolerance && balanced; }
};

inline double rel_diff(float a, float b) {
    if (a == b) return 0.0;
    const double d = std::abs(static_cast<double>(a) - static_cast<double>(b));
    return d / std::max(std::abs(static_cast<double>(b)), 1e-30);
}

/// Simulates one layer on synthetic data and compares the values left at
/// the output homes with both oracles (ReLU applied when the layer has it).
inline OracleVerdict check_layer(const LayerSpec& l, const ArrayGeom& g, std::uint64_t seed,
                                 const FabricConfig& cfg = {}) {
    OracleVerdict v;
    v.layer = l.name;
    try {
        const auto in = synthetic_input(l, seed);
        const auto w = synthetic_weights(l, seed + 1);
        const auto trace = simulate_layer(generate_program(l, g, w, in), cfg);
        auto staged = conv2d_staged(in, w, l, build_fold_plan(l, g));
        auto naive = conv2d_naive(in, w, l);
        if (l.activation == Activation::Relu) {
            staged = relu_ref(std::move(staged));
            naive = relu_ref(std::move(naive));
        }
        if (trace.output.values.size() != staged.values.size())
            throw SimulationError("simulated output has the wrong extent");
        for (std::size_t i = 0; i < staged.values.size(); ++i) {
            const float got = trace.output.values[i];
            if (std::bit_cast<std::uint32_t>(got) != std::bit_cast<std::uint32_t>(staged.values[i]))
                ++v.mismatches;
            v.max_rel_naive = std::max(v.max_rel_naive, rel_diff(got, naive.values[i]));
        }
        v.bit_exact = v.mismatches == 0;
        v.within_tolerance = v.max_rel_naive <= kNaiveRelTol;
        v.balanced = trace.ledger.balanced();
        v.cycles = trace.cycles;
    } catch (const Error& e) {
        v.error = std::string(e.kind()) + ": " + e.what();
    }
    return v;
}

struct VerifySummary {
    int total = 0;
    int bit_exact = 0;
    int within_tolerance = 0;
    std::vector<OracleVerdict> verdicts;

    bool ok() const { return total > 0 && bit_exact == total && within_tolerance == total; }
    std::string line() const {
        std::ostringstream os;
        os << bit_exact << '/' << total << " bit-exact vs staged oracle";
        return os.str();
    }
};

inline void tally(VerifySummary& s, OracleVerdict v) {
    ++s.total;
    if (v.error.empty() && v.bit_exact && v.balanced) ++s.bit_exact;
    if (v.error.empty() && v.within_tolerance) ++s.within_tolerance;
    s.verdicts.push_back(std::move(v));
}

inline VerifySummary verify_random_layers(int count, std::uint64_t seed, const FabricConfig& cfg = {}) {
    std::mt19937_64 rng(seed);
    VerifySummary s;
    for (int i = 0; i < count; ++i) {
        const auto c = random_oracle_case(rng, i);
        tally(s, check_layer(c.layer, c.geom, c.seed, cfg));
    }
    return s;
}

inline nlohmann::json verdict_to_json(const OracleVerdict& v) {
    nlohmann::json j = {{"layer", v.layer},         {"bit_exact", v.bit_exact},
                        {"within_tolerance", v.within_tolerance}, {"balanced", v.balanced},
                        {"mismatches", v.mismatches}, {"max_rel_naive", v.max_rel_naive},
                        {"cycles", v.cycles}};
    if (!v.error.empty()) j["error"] = v.error;
    return j;
}

inline nlohmann::json summary_to_json(const VerifySummary& s) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& v : s.verdicts) layers.push_back(verdict_to_json(v));
    return {{"total", s.total},
            {"bit_exact", s.bit_exact},
            {"within_tolerance", s.within_tolerance},
            {"naive_rel_tol", kNaiveRelTol},
            {"verdict", s.line()},
            {"layers", layers}};
}

} // namespace mavec
