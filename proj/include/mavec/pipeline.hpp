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
 * @file pipeline.hpp
 * @brief Exact-tier execution of a whole workload: each layer's simulated
 *        output (pooled where the workload says so) feeds the next layer.
 */
#pragma once

#include <cstdint>
#include <vector>

#include "mavec/fabric.hpp"
#include "mavec/perf_model.hpp"
#include "mavec/reference.hpp"
#include "mavec/schedule.hpp"
#include "mavec/workload.hpp"

namespace mavec {

struct ExactRun {
    NetworkReport report;
    std::vector<LayerTrace> traces;
};

inline FabricConfig fabric_for(const IoConfig& io, FabricConfig cfg = {}) {
    cfg.host_gbps = io.pcie.gbps();
    return cfg;
}

/// Weights of layer i are seeded with seed + 1 + i; the first input with seed.
inline ExactRun simulate_workload(const WorkloadFile& w, const ArrayGeom& geom, const IoConfig& io,
                                  FabricConfig cfg = {}) {
    validate_chain(w);
    cfg = fabric_for(io, cfg);
    ExactRun run;
    run.report.workload = w.name;
    run.report.geom = geom;
    run.report.io = io;
    Tensor input = synthetic_input(w.layers.front(), w.seed);
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        const auto& l = w.layers[i];
        const auto weights = synthetic_weights(l, w.seed + 1 + i);
        const auto prog = generate_program(l, geom, weights, input, {i == 0, w.consumer_of(i)});
        auto trace = simulate_layer(prog, cfg);
        auto metrics = collect(trace);
        run.report.layers.push_back(metrics);
        input = w.pool_after[i] > 0 ? maxpool_ref(trace.output, w.pool_after[i], w.pool_after[i])
                                    : trace.output;
        run.traces.push_back(std::move(trace));
    }
    return run;
}

} // namespace mavec
