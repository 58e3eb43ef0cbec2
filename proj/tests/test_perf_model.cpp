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

#include <filesystem>
#include <random>
#include <sstream>

#include "mavec/perf_model.hpp"
#include "mavec/verify.hpp"
#include "mavec/workload.hpp"

using namespace mavec;

namespace {

Calibration unit_calibration() {
    Calibration c;
    c.latency.fill(1.0);
    c.transfer.fill(1.0);
    c.weight_load = 1.0;
    c.fit_layers = 1;
    return c;
}

LayerTrace run_exact(const LayerSpec& l, const ArrayGeom& g, bool first, std::optional<LayerSpec> next) {
    return simulate_layer(generate_program(l, g, synthetic_weights(l, 3), synthetic_input(l, 4), {first, next}));
}

LayerSpec pointwise_after(const LayerSpec& l) {
    LayerSpec n = l;
    n.name = l.name + ".next";
    n.X = l.out_p();
    n.Y = l.out_q();
    n.C = l.out_channels();
    n.R = n.S = 1;
    n.Nf = 2;
    n.stride = 1;
    n.pad = 0;
    return n;
}

} // namespace

TEST(IoTables, PcieMatchesTable) {
    const double want[6][4] = {
        {0.25, 1.0, 2.0, 4.0},    {0.5, 2.0, 4.0, 8.0},     {0.98, 3.94, 7.88, 15.8},
        {1.97, 7.88, 15.8, 31.5}, {3.94, 15.8, 31.5, 63.0}, {7.88, 31.5, 63.0, 126.0},
    };
    const auto pts = pcie_points();
    ASSERT_EQ(pts.size(), 24u);
    for (const auto& p : pts) {
        const int li = static_cast<int>(std::find(kPcieLanes.begin(), kPcieLanes.end(), p.lanes) - kPcieLanes.begin());
        EXPECT_EQ(p.gbps(), want[p.gen - 1][li]) << p.label();
    }
    EXPECT_EQ(parse_pcie("6x16").gbps(), 126.0);
    EXPECT_EQ(parse_pcie("3x8").label(), "Gen3x8");
    for (const char* bad : {"6", "x16", "6x", "7x16", "6x2", "6x16z", "ax4"})
        EXPECT_THROW(parse_pcie(bad), ModelError) << bad;
}

TEST(IoTables, DramMatchesTable) {
    const std::vector<std::pair<std::string, double>> want = {
        {"DDR", 0.05},     {"DDR2", 0.1},    {"DDR3", 0.2},     {"DDR4", 0.4},
        {"DDR5", 0.8},     {"LPDDR", 0.05},  {"LPDDR2", 0.13},  {"LPDDR3", 0.23},
        {"LPDDR4X", 0.53}, {"LPDDR5", 0.8},  {"LPDDR5X", 1.0},  {"GDDR3", 0.33},
        {"GDDR5", 1.13},   {"GDDR5X", 1.5},  {"GDDR6", 3.0},    {"GDDR7", 4.5},
    };
    ASSERT_EQ(dram_points().size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        EXPECT_EQ(dram_points()[i].name, want[i].first);
        EXPECT_EQ(dram_points()[i].gbps, want[i].second);
    }
    EXPECT_EQ(dram_lookup("baseline").name, "GDDR7");
    EXPECT_THROW(dram_lookup("HBM9"), ModelError);
}

TEST(Metrics, MacCounts) {
    EXPECT_EQ(preset_case_study().layers[0].macs(), 4608);
    EXPECT_EQ(preset_vgg19_conv().layers[0].macs(), 86'704'128);
}

TEST(Metrics, ExactFractionsSumToOne) {
    const auto l = preset_case_study().layers[0];
    const auto m = collect(run_exact(l, {4, 24, 1.0}, true, std::nullopt));
    EXPECT_NEAR(m.cyc_transfer() + m.cyc_operation() + m.cyc_host() + m.cyc_weight(), 1.0, 1e-12);
    EXPECT_GT(m.cyc_operation(), 0.0);
    EXPECT_EQ(m.fpu_ops, m.breakdown.operation);
}

TEST(Reuse, WorkedExamples) {
    // Every weight used exactly once: nothing is saved temporally.
    EXPECT_EQ(reuse_from_counts(9, 9, 0, 0, 0).temporal_mb, 0.0);
    // One value multicast to four rows: three copies not re-fetched.
    EXPECT_DOUBLE_EQ(reuse_from_counts(4, 4, 3, 0, 0).spatial_mb * kMB, 12.0);
    // Reduction counts every product and intermediate sum kept on chip.
    EXPECT_DOUBLE_EQ(reuse_from_counts(8, 2, 0, 3, 1).reduction_mb * kMB, 4.0 * 12);
}

TEST(Reuse, SingleOutputLayerHasNoTemporalReuse) {
    const auto l = conv_layer("one", 3, 2, 2, 3, 1, 0); // P = Q = 1
    const auto t = run_exact(l, {4, 12, 1.0}, true, std::nullopt);
    EXPECT_EQ(t.products, t.weights_loaded);
    EXPECT_EQ(reuse_accounting(t).temporal_mb, 0.0);
}

TEST(AnalyticCounts, MatchSimulatorOnRandomLayers) {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 40; ++i) {
        const auto c = random_oracle_case(rng, i);
        const bool first = i % 2 == 0;
        const bool consumer = i % 3 != 0;
        const auto plan = build_fold_plan(c.layer, c.geom);
        const auto n = analytic_counts(plan, first, consumer);
        const auto t = run_exact(c.layer, c.geom, first,
                                 consumer ? std::optional{pointwise_after(c.layer)} : std::nullopt);
        SCOPED_TRACE(c.layer.name);
        EXPECT_EQ(n.prog, t.host_weight);
        EXPECT_EQ(n.host_image, t.host_image);
        EXPECT_EQ(n.weights, t.weights_loaded);
        EXPECT_EQ(n.products, t.products);
        EXPECT_EQ(n.shifts, t.shifts);
        EXPECT_EQ(n.multicasts, t.multicasts);
        EXPECT_EQ(n.multicast_extra, t.ledger.multicast_extra);
        EXPECT_EQ(n.c1, t.c1_sums);
        EXPECT_EQ(n.c2, t.c2_sums);
        EXPECT_EQ(n.c3, t.c3_outputs);
        EXPECT_EQ(n.merges, t.merges);
        EXPECT_EQ(n.relus, t.relus);
        EXPECT_EQ(n.handoff, t.handoff_out);
        EXPECT_EQ(n.l1_injected(), t.l1_injected);
        EXPECT_EQ(n.on_chip(), t.on_chip_generated());
        EXPECT_EQ(n.fpu_ops(), t.fpu_ops);
        EXPECT_EQ(n.products, static_cast<std::uint64_t>(c.layer.macs()));
    }
}

TEST(Analytic, RefusesWithoutCalibration) {
    const auto l = preset_case_study().layers[0];
    EXPECT_THROW(analytic_layer(l, {4, 24, 1.0}, IoConfig{}, Calibration{}), ModelError);
    const auto missing = (std::filesystem::temp_directory_path() / "mavec-no-such-dir" / "calibration.json").string();
    try {
        load_calibration(missing);
        FAIL();
    } catch (const ModelError& e) {
        EXPECT_NE(std::string(e.what()).find("uncalibrated"), std::string::npos);
    }
}

TEST(Analytic, CalibrationJsonRoundTrip) {
    Calibration c = unit_calibration();
    c.latency = {1.0, 0.5, 12.75, 0.8125, 1.03, 0.0};
    c.transfer = {0.25, 2.0, 1.5};
    c.weight_load = 1.08;
    c.fit_layers = 48;
    c.seed = 9;
    c.max_latency_error = 0.021;
    c.max_holdout_error = 0.049;
    const auto path = (std::filesystem::temp_directory_path() / "mavec-calib-rt.json").string();
    save_calibration(c, path);
    const auto back = load_calibration(path);
    EXPECT_EQ(back.latency, c.latency);
    EXPECT_EQ(back.transfer, c.transfer);
    EXPECT_EQ(back.weight_load, c.weight_load);
    EXPECT_EQ(back.fit_layers, c.fit_layers);
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(calibration_to_json(back), calibration_to_json(c));
    std::filesystem::remove(path);
}

TEST(Analytic, FasterLinksNeverSlowTheNetwork) {
    const auto w = preset_vgg19_conv();
    const ArrayGeom g{16, 16, 1.0};
    const auto calib = unit_calibration();
    // PCIe points ordered by bandwidth within each lane count and generation.
    for (int lanes : kPcieLanes) {
        double prev = 0.0;
        for (int gen = 1; gen <= 6; ++gen) {
            const auto r = analytic_network("vgg", w.layers, g, IoConfig{{gen, lanes}}, calib);
            EXPECT_GE(r.throughput_inf_s(), prev) << gen << 'x' << lanes;
            prev = r.throughput_inf_s();
        }
    }
    auto drams = dram_points();
    std::stable_sort(drams.begin(), drams.end(), [](auto& a, auto& b) { return a.gbps < b.gbps; });
    double prev = 0.0;
    for (const auto& d : drams) {
        const auto r = analytic_network("vgg", w.layers, g, IoConfig{{}, d}, calib);
        EXPECT_GE(r.throughput_inf_s(), prev) << d.name;
        prev = r.throughput_inf_s();
    }
}

TEST(Analytic, AggregatesAreSums) {
    const auto w = preset_vgg19_conv();
    const auto r = analytic_network("vgg", w.layers, {32, 32, 1.0}, IoConfig{}, unit_calibration());
    std::uint64_t cycles = 0, msgs = 0, ops = 0;
    for (const auto& m : r.layers) {
        cycles += m.cycles;
        msgs += m.messages();
        ops += m.breakdown.operation;
    }
    EXPECT_EQ(r.cycles(), cycles);
    EXPECT_EQ(r.messages(), msgs);
    EXPECT_EQ(r.breakdown().operation, ops);
    EXPECT_DOUBLE_EQ(r.throughput_inf_s(), 1.0 / r.seconds());
}

TEST(Analytic, ArithmeticDoesNotDependOnArraySize) {
    const auto l = preset_vgg19_conv().layers[3];
    for (int s : {16, 32, 64}) {
        const auto n = analytic_counts(build_fold_plan(l, {s, s, 1.0}), false, true);
        EXPECT_EQ(n.products, static_cast<std::uint64_t>(l.macs())) << s;
    }
}

TEST(Analytic, SpillOnlyWhenL1Overflows) {
    const auto l = preset_vgg19_conv().layers[0];
    const auto small = l1_footprint(build_fold_plan(l, {16, 16, 1.0}), 96 * 1024);
    const auto big = l1_footprint(build_fold_plan(l, {64, 64, 1.0}), 96 * 1024);
    EXPECT_GT(small.spill_bytes, 0.0);
    EXPECT_EQ(big.spill_bytes, 0.0);
    EXPECT_EQ(small.spill_bytes, std::max(0.0, small.peak_bytes - small.capacity_bytes));
}

TEST(Sweep, EmptyWorkloadGivesNoRows) {
    EXPECT_TRUE(sweep_io({}, {16, 16, 1.0}, pcie_points(), dram_points(), unit_calibration()).empty());
}

TEST(Sweep, FullGridAndCsv) {
    const auto l = preset_case_study().layers;
    const auto pts = sweep_io(l, {4, 24, 1.0}, pcie_points(), dram_points(), unit_calibration());
    EXPECT_EQ(pts.size(), 24u * 16u);
    std::ostringstream os;
    write_sweep_csv(os, pts);
    std::istringstream is(os.str());
    std::string line;
    int n = 0;
    while (std::getline(is, line)) ++n;
    EXPECT_EQ(n, 1 + 24 * 16);
}

TEST(Report, CsvHasEveryColumn) {
    const auto l = preset_case_study().layers[0];
    NetworkReport r;
    r.workload = "case";
    r.geom = {4, 24, 1.0};
    r.layers.push_back(collect(run_exact(l, r.geom, true, std::nullopt)));
    std::ostringstream os;
    write_report_csv(os, r);
    const auto header = os.str().substr(0, os.str().find('\n'));
    for (const char* col : kReportColumns) EXPECT_NE(header.find(col), std::string::npos) << col;
}
