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

#include <gtest/gtest.h>

#include <random>

#include "mavec/fabric.hpp"
#include "mavec/pipeline.hpp"
#include "mavec/verify.hpp"
#include "mavec/workload.hpp"

using namespace mavec;

namespace {

const ArrayGeom kCase{4, 24, 1.0};

MessageProgram case_program(std::optional<LayerSpec> next = {}) {
    const auto l = preset_case_study().layers[0];
    return generate_program(l, kCase, synthetic_weights(l, 2), synthetic_input(l, 1), {true, std::move(next)});
}

} // namespace

TEST(Fabric, CaseStudyMatchesOraclesWithRelu) {
    const auto l = preset_case_study().layers[0];
    ASSERT_EQ(l.activation, Activation::Relu);
    const auto v = check_layer(l, kCase, 42);
    EXPECT_TRUE(v.ok()) << v.error << " mismatches=" << v.mismatches;
}

TEST(Fabric, CaseStudyEventCounts) {
    const auto t = simulate_layer(case_program());
    EXPECT_EQ(t.products, 4608u); // P*Q*Nf*R*S*C
    // Two channel groups: each (filter, output) gets one C3 result per group.
    EXPECT_EQ(t.c3_outputs, 8u * 16 * 2);
    EXPECT_EQ(t.merges, 8u * 16 * 2);
    EXPECT_EQ(t.weights_loaded, 8u * 4 * 9);
    EXPECT_TRUE(t.ledger.balanced());
    EXPECT_EQ(t.breakdown.operation, t.fpu_ops);
}

TEST(Fabric, Deterministic) {
    const auto a = trace_to_json(simulate_layer(case_program()), true).dump();
    const auto b = trace_to_json(simulate_layer(case_program()), true).dump();
    EXPECT_EQ(a, b);
}

TEST(Fabric, OneOperationPerSitePerCycle) {
    FabricConfig cfg;
    cfg.cycle_log = true;
    const auto t = simulate_layer(case_program(conv_layer("n", 4, 8, 4)), cfg);
    ASSERT_EQ(t.samples.size(), t.cycles);
    std::uint64_t ops = 0;
    for (const auto& s : t.samples) {
        EXPECT_LE(s.fpu_ops, kCase.sites());
        ops += static_cast<std::uint64_t>(s.fpu_ops);
    }
    EXPECT_EQ(ops, t.fpu_ops);
    EXPECT_LE(t.utilization(), 1.0);
    EXPECT_GT(t.utilization(), 0.0);
}

TEST(Fabric, BitExactAcrossQueueDepths) {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 12; ++i) {
        const auto c = random_oracle_case(rng, i);
        for (auto [fifo, emit, buf] : {std::tuple{1, 2, 1}, std::tuple{2, 3, 2}, std::tuple{8, 4, 8}}) {
            FabricConfig cfg;
            cfg.fifo_depth = fifo;
            cfg.emit_depth = emit;
            cfg.buffer_depth = buf;
            const auto v = check_layer(c.layer, c.geom, c.seed, cfg);
            EXPECT_TRUE(v.ok()) << c.layer.name << " fifo=" << fifo << ' ' << v.error;
        }
    }
}

TEST(Fabric, SlowerHostNeverFinishesEarlier) {
    std::uint64_t prev = 0;
    for (double gbps : {126.0, 31.5, 7.88, 1.0}) {
        FabricConfig cfg;
        cfg.host_gbps = gbps;
        const auto t = simulate_layer(case_program(), cfg);
        EXPECT_GE(t.cycles, prev) << gbps;
        prev = t.cycles;
    }
}

TEST(Fabric, MissingPartialSumIsReported) {
    auto prog = case_program();
    // Drop every compute phase: merges then wait on partial sums that never come.
    std::erase_if(prog.phases, [](const Phase& p) { return p.kind == PhaseKind::Compute; });
    FabricConfig cfg;
    cfg.idle_limit = 200;
    try {
        simulate_layer(prog, cfg);
        FAIL();
    } catch (const SimulationError& e) {
        EXPECT_NE(std::string(e.what()).find("partial sum"), std::string::npos) << e.what();
    }
}

TEST(Fabric, RejectsBadConfig) {
    FabricConfig cfg;
    cfg.fifo_depth = 0;
    EXPECT_THROW(simulate_layer(case_program(), cfg), SimulationError);
    cfg = {};
    cfg.host_gbps = 0;
    EXPECT_THROW(simulate_layer(case_program(), cfg), SimulationError);
}

TEST(Fabric, PhasesAreOrdered) {
    const auto t = simulate_layer(case_program(conv_layer("n", 4, 8, 4)));
    ASSERT_FALSE(t.phases.empty());
    for (std::size_t i = 1; i < t.phases.size(); ++i) {
        EXPECT_LE(t.phases[i - 1].start, t.phases[i].start);
        // Barrier phases start only after everything before them has drained.
        if (is_barrier(t.phases[i].kind))
            for (std::size_t k = 0; k < i; ++k) EXPECT_LE(t.phases[k].end, t.phases[i].start);
    }
    EXPECT_EQ(t.phases.back().kind, PhaseKind::Handoff);
    EXPECT_EQ(t.phases.back().end, t.cycles);
}

TEST(Fabric, WorkloadChainMatchesReferenceChain) {
    WorkloadFile w;
    w.name = "chain";
    w.seed = 5;
    w.layers = {conv_layer("a", 6, 2, 4), conv_layer("b", 3, 4, 3, 3, 1, 1)};
    w.pool_after = {2, 0};
    const ArrayGeom g{4, 24, 1.0};
    const auto run = simulate_workload(w, g, IoConfig{});
    ASSERT_EQ(run.traces.size(), 2u);
    // Reference: staged conv + ReLU, pool, staged conv + ReLU.
    Tensor x = synthetic_input(w.layers[0], w.seed);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto& l = w.layers[i];
        x = relu_ref(conv2d_staged(x, synthetic_weights(l, w.seed + 1 + i), l, build_fold_plan(l, g)));
        EXPECT_EQ(run.traces[i].output, x) << l.name;
        if (w.pool_after[i]) x = maxpool_ref(x, 2, 2);
    }
    // Only the first layer reads the host for image data.
    EXPECT_GT(run.report.layers[0].host_image, 0u);
    EXPECT_EQ(run.report.layers[1].host_image, 0u);
}
