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
 * @file perf_model.hpp
 * @brief Layer metrics, reuse accounting, the calibrated analytic tier and
 *        I/O sensitivity sweeps.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mavec/fabric.hpp"
#include "mavec/fold_mapper.hpp"
#include "mavec/workload.hpp"

namespace mavec {

// ---------------------------------------------------------------------------
// I/O bandwidth tables (GB/s)
// ---------------------------------------------------------------------------

inline constexpr std::array<int, 4> kPcieLanes = {1, 4, 8, 16};

inline double pcie_gbps(int gen, int lanes) {
    static constexpr double table[6][4] = {
        {0.25, 1.0, 2.0, 4.0},    {0.5, 2.0, 4.0, 8.0},     {0.98, 3.94, 7.88, 15.8},
        {1.97, 7.88, 15.8, 31.5}, {3.94, 15.8, 31.5, 63.0}, {7.88, 31.5, 63.0, 126.0},
    };
    const auto it = std::find(kPcieLanes.begin(), kPcieLanes.end(), lanes);
    if (gen < 1 || gen > 6 || it == kPcieLanes.end())
        throw ModelError("PCIe configuration Gen" + std::to_string(gen) + " x" +
                         std::to_string(lanes) + " is not tabulated");
    return table[gen - 1][it - kPcieLanes.begin()];
}

struct PciePoint {
    int gen = 6;
    int lanes = 16;
    double gbps() const { return pcie_gbps(gen, lanes); }
    std::string label() const { return "Gen" + std::to_string(gen) + "x" + std::to_string(lanes); }
};

/// "6x16" -> {6, 16}
inline PciePoint parse_pcie(const std::string& s) {
    const auto x = s.find('x');
    PciePoint p;
    try {
        if (x == std::string::npos) throw std::invalid_argument(s);
        std::size_t used = 0;
        p.gen = std::stoi(s.substr(0, x), &used);
        if (used != x) throw std::invalid_argument(s);
        p.lanes = std::stoi(s.substr(x + 1), &used);
        if (used != s.size() - x - 1) throw std::invalid_argument(s);
    } catch (const std::exception&) {
        throw ModelError("PCIe setting '" + s + "' is not of the form <gen>x<lanes>");
    }
    (void)p.gbps();
    return p;
}

inline std::vector<PciePoint> pcie_points() {
    std::vector<PciePoint> v;
    for (int g = 1; g <= 6; ++g)
        for (int l : kPcieLanes) v.push_back({g, l});
    return v;
}

struct DramPoint {
    std::string name;
    double gbps = 0.0;
};

inline const std::vector<DramPoint>& dram_points() {
    static const std::vector<DramPoint> v = {
        {"DDR", 0.05},    {"DDR2", 0.1},     {"DDR3", 0.2},    {"DDR4", 0.4},
        {"DDR5", 0.8},    {"LPDDR", 0.05},   {"LPDDR2", 0.13}, {"LPDDR3", 0.23},
        {"LPDDR4X", 0.53}, {"LPDDR5", 0.8},  {"LPDDR5X", 1.0}, {"GDDR3", 0.33},
        {"GDDR5", 1.13},  {"GDDR5X", 1.5},   {"GDDR6", 3.0},   {"GDDR7", 4.5},
    };
    return v;
}

inline constexpr const char* kBaselineDram = "GDDR7";

inline DramPoint dram_lookup(const std::string& name) {
    const std::string key = name == "baseline" ? kBaselineDram : name;
    for (const auto& d : dram_points())
        if (d.name == key) return d;
    throw ModelError("unknown DRAM family '" + name + "'");
}

struct IoConfig {
    PciePoint pcie;
    DramPoint dram = dram_lookup(kBaselineDram);
};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline constexpr double kBytesPerValue = 4.0;
inline constexpr double kMB = 1e6;

struct LayerMetrics {
    std::string layer;
    std::string tier;
    std::uint64_t host_weight = 0;
    std::uint64_t host_image = 0;
    std::uint64_t on_chip_generated = 0;
    CycleBreakdown breakdown; // message-resource-cycles per class
    std::uint64_t cycles = 0;
    std::uint64_t fpu_ops = 0;
    long long macs = 0;
    int sites = 0;
    double clock_ghz = 1.0;
    double temporal_mb = 0.0;
    double spatial_mb = 0.0;
    double reduction_mb = 0.0;
    std::uint64_t spill_bytes = 0;

    std::uint64_t messages() const { return host_weight + host_image + on_chip_generated; }
    double host_fraction() const {
        const auto m = messages();
        return m ? static_cast<double>(host_weight + host_image) / static_cast<double>(m) : 0.0;
    }
    double frac(std::uint64_t part) const {
        const auto t = breakdown.total();
        return t ? static_cast<double>(part) / static_cast<double>(t) : 0.0;
    }
    double cyc_transfer() const { return frac(breakdown.transfer); }
    double cyc_operation() const { return frac(breakdown.operation); }
    double cyc_host() const { return frac(breakdown.host_to_offchip); }
    double cyc_weight() const { return frac(breakdown.weight_load); }
    double latency_kcc() const { return static_cast<double>(cycles) / 1e3; }
    double seconds() const { return static_cast<double>(cycles) / (clock_ghz * 1e9); }
    double gflops() const {
        return cycles ? 2.0 * static_cast<double>(macs) / seconds() / 1e9 : 0.0;
    }
    double utilization() const {
        return cycles ? static_cast<double>(fpu_ops) /
                            (static_cast<double>(cycles) * static_cast<double>(sites))
                      : 0.0;
    }
};

struct ReuseBytes {
    double temporal_mb = 0.0;
    double spatial_mb = 0.0;
    double reduction_mb = 0.0;
};

/// Byte savings from the event counts of one layer.
///  temporal:  every weight use after the first (products - weights loaded)
///  spatial:   every multicast copy after the first
///  reduction: partial results combined on chip instead of written out
inline ReuseBytes reuse_from_counts(std::uint64_t products, std::uint64_t weights_loaded,
                                    std::uint64_t multicast_extra, std::uint64_t c1,
                                    std::uint64_t c2) {
    ReuseBytes r;
    r.temporal_mb = kBytesPerValue * static_cast<double>(products - weights_loaded) / kMB;
    r.spatial_mb = kBytesPerValue * static_cast<double>(multicast_extra) / kMB;
    r.reduction_mb = kBytesPerValue * static_cast<double>(products + c1 + c2) / kMB;
    return r;
}

inline ReuseBytes reuse_accounting(const LayerTrace& t) {
    return reuse_from_counts(t.products, t.weights_loaded, t.ledger.multicast_extra, t.c1_sums,
                             t.c2_sums);
}

inline LayerMetrics collect(const LayerTrace& t) {
    if (t.cycles == 0 || !t.ledger.balanced())
        throw ModelError("trace is incomplete: the message ledger does not balance");
    LayerMetrics m;
    m.layer = t.layer.name;
    m.tier = "exact";
    m.host_weight = t.host_weight;
    m.host_image = t.host_image;
    m.on_chip_generated = t.on_chip_generated();
    m.breakdown = t.breakdown;
    m.cycles = t.cycles;
    m.fpu_ops = t.fpu_ops;
    m.macs = t.layer.macs();
    m.sites = t.geom.sites();
    m.clock_ghz = t.geom.clock_ghz;
    m.spill_bytes = t.spill_bytes;
    const auto r = reuse_accounting(t);
    m.temporal_mb = r.temporal_mb;
    m.spatial_mb = r.spatial_mb;
    m.reduction_mb = r.reduction_mb;
    return m;
}

// ---------------------------------------------------------------------------
// Closed-form event counts (match the exact tier one for one)
// ---------------------------------------------------------------------------

struct LayerCounts {
    std::uint64_t passes = 0;
    std::uint64_t prog = 0;
    std::uint64_t host_image = 0;
    std::uint64_t l1_image = 0;
    std::uint64_t staged = 0;
    std::uint64_t multicasts = 0;
    std::uint64_t multicast_extra = 0;
    std::uint64_t weights = 0;
    std::uint64_t products = 0;
    std::uint64_t shifts = 0;
    std::uint64_t c1 = 0, c2 = 0, c3 = 0;
    std::uint64_t c1_ops = 0, c2_ops = 0, c3_ops = 0;
    std::uint64_t merges = 0;
    std::uint64_t relus = 0;
    std::uint64_t handoff = 0;

    std::uint64_t generated() const {
        return products + shifts + staged + c1 + c2 + c3 + handoff;
    }
    std::uint64_t l1_injected() const { return l1_image + staged + merges + relus; }
    std::uint64_t on_chip() const { return generated() + l1_injected(); }
    std::uint64_t fpu_ops() const { return products + c1_ops + c2_ops + c3_ops + merges + relus; }
};

/// Image operands entering one C0 group per image fold.
inline std::uint64_t entering_per_group(const LayerSpec& l) {
    return static_cast<std::uint64_t>(l.R + (l.out_p() - 1) * std::min(l.stride, l.R));
}

/// In-group forwards spawned per C0 group per image fold (one row).
inline std::uint64_t forwards_per_group(const LayerSpec& l) {
    const int P = l.out_p();
    std::uint64_t n = 0;
    for (int j = 0; j < P; ++j)
        for (int k = 0; k < l.R; ++k)
            if (j == 0 || k < l.stride) n += static_cast<std::uint64_t>(remaining_forwards(l, k, P - 1 - j));
    return n;
}

inline LayerCounts analytic_counts(const FoldPlan& plan, bool first_layer, bool has_consumer) {
    const auto& l = plan.layer;
    LayerCounts n;
    const std::uint64_t PQ = static_cast<std::uint64_t>(l.out_p()) * l.out_q();
    const std::uint64_t Q = static_cast<std::uint64_t>(l.out_q());
    const std::uint64_t S = static_cast<std::uint64_t>(l.S), R = static_cast<std::uint64_t>(l.R);
    const std::uint64_t E = entering_per_group(l);
    const std::uint64_t F = forwards_per_group(l);
    const std::uint64_t new_groups = S + (Q - 1) * static_cast<std::uint64_t>(std::min(l.stride, l.S));
    const std::uint64_t staged_groups = (Q - 1) * static_cast<std::uint64_t>(std::max(0, l.S - l.stride));
    for (const auto& ff : plan.filter_folds) {
        const std::uint64_t rows = static_cast<std::uint64_t>(ff.rows_used());
        const std::uint64_t ch = static_cast<std::uint64_t>(ff.channels());
        ++n.passes;
        n.prog += rows * (ch * (R * S + S + 1) + 1);
        const std::uint64_t fresh = ch * E * new_groups;
        (first_layer && ff.band == 0 ? n.host_image : n.l1_image) += fresh;
        n.staged += ch * E * staged_groups;
        const std::uint64_t mc = ch * E * (new_groups + staged_groups);
        n.multicasts += mc;
        n.multicast_extra += mc * (rows - 1);
        n.weights += rows * ch * R * S;
        n.products += rows * ch * R * S * PQ;
        n.shifts += rows * ch * Q * S * F;
        n.c1 += rows * ch * S * PQ;
        n.c2 += rows * ch * PQ;
        n.c3 += rows * PQ;
        n.c1_ops += rows * ch * S * PQ * R;
        n.c2_ops += rows * ch * PQ * S;
        n.c3_ops += rows * PQ * ch;
        n.merges += rows * PQ;
    }
    if (l.activation == Activation::Relu) {
        n.relus = static_cast<std::uint64_t>(l.Nf) * PQ;
        if (has_consumer) n.handoff = n.relus;
    }
    return n;
}

// ---------------------------------------------------------------------------
// Structural latency terms
// ---------------------------------------------------------------------------

/// Steady-state cycles per output step of one pass: the slowest of the FPU
/// bottleneck SiteO, the busiest reduce-bus segment, the multicast grant of
/// the busiest SiteM and the host link.
inline double step_period(const FoldPlan& plan, const FilterFold& ff, bool host_fed,
                          double host_rate) {
    const auto& l = plan.layer;
    const auto& roles = plan.roles;
    const int cols = plan.geom.cols;
    const int ch = ff.channels();
    const int E = ArrayGeom::kSiteMEdge;
    std::vector<double> ops(static_cast<std::size_t>(cols), 0.0);
    std::vector<double> bus(static_cast<std::size_t>((cols + E - 1) / E), 0.0);
    auto path = [&](int from, int to) {
        if (from == to) return;
        for (int sgm = from / E; sgm <= to / E; ++sgm) bus[static_cast<std::size_t>(sgm)] += 1.0;
    };
    for (int b = 0; b < ch; ++b) {
        for (int g = 0; g < l.S; ++g) {
            for (int k = 0; k < l.R; ++k) ops[static_cast<std::size_t>(roles.c0_col(b, g, k))] += 1.0;
            ops[static_cast<std::size_t>(roles.c1_col(b, g))] += l.R;
            path(roles.c1_col(b, g), roles.c2_col(b));
        }
        ops[static_cast<std::size_t>(roles.c2_col(b))] += l.S;
        path(roles.c2_col(b), roles.c3_col);
    }
    ops[static_cast<std::size_t>(roles.c3_col)] += ch;
    const double fpu = *std::max_element(ops.begin(), ops.end());
    const double hbus = *std::max_element(bus.begin(), bus.end());
    // Multicasts per step, averaged over an image fold, per SiteM column group.
    const double enter = static_cast<double>(entering_per_group(l)) / l.out_p();
    std::vector<double> grants(bus.size(), 0.0);
    for (int b = 0; b < ch; ++b)
        for (int g = 0; g < l.S; ++g)
            grants[static_cast<std::size_t>(roles.c0_col(b, g, 0) / E)] += enter;
    const double vbus = *std::max_element(grants.begin(), grants.end());
    const double host =
        host_fed ? ch * enter * std::min(l.stride, l.S) / host_rate : 0.0;
    return std::max({fpu, hbus, vbus, host});
}

/// Largest per-SiteM share of `per_filter` words spread over output homes.
inline double busiest_sitem_homes(const LayerSpec& l, const ArrayGeom& g, int f_lo, int f_hi) {
    const int PQ = l.out_p() * l.out_q();
    std::vector<double> rows(static_cast<std::size_t>(g.sitem_rows()), 0.0);
    std::vector<double> cols(static_cast<std::size_t>(g.sitem_cols()), 0.0);
    for (int f = f_lo; f < f_hi; ++f) rows[static_cast<std::size_t>((f % g.rows) / ArrayGeom::kSiteMEdge)] += 1.0;
    for (int n = 0; n < PQ; ++n) cols[static_cast<std::size_t>((n % g.cols) / ArrayGeom::kSiteMEdge)] += 1.0;
    return *std::max_element(rows.begin(), rows.end()) * *std::max_element(cols.begin(), cols.end());
}

/// Named regressors of the latency model. Each is a structural cycle
/// estimate; calibration scales them.
struct LatencyFeatures {
    static constexpr std::size_t kCount = 6;
    static constexpr std::array<const char*, kCount> kNames = {
        "compute", "prog", "passes", "pass_depth", "handoff", "layer"};
    std::array<double, kCount> v{};
};

inline LatencyFeatures latency_features(const FoldPlan& plan, bool first_layer, double host_rate,
                                        int l1_port_msgs = FabricConfig{}.l1_port_msgs) {
    const auto& l = plan.layer;
    const auto& g = plan.geom;
    const double PQ = static_cast<double>(l.out_p()) * l.out_q();
    LatencyFeatures f;
    for (const auto& ff : plan.filter_folds) {
        const double rows = ff.rows_used();
        const double ch = ff.channels();
        f.v[0] += PQ * step_period(plan, ff, first_layer && ff.band == 0, host_rate);
        const double prog = rows * (ch * (l.R * l.S + l.S + 1) + 1);
        f.v[1] += prog / host_rate;
        f.v[2] += 1.0;
        f.v[3] += rows + g.sitem_cols() + l.out_q();
    }
    if (l.activation == Activation::Relu)
        f.v[4] = busiest_sitem_homes(l, g, 0, l.Nf) / l1_port_msgs;
    f.v[5] = 1.0;
    return f;
}

/// Regressors of the transfer class (message-cycles outside Prog). Queued
/// waiting dominates hop counts: forwarded operands wait out a step period
/// and the handoff drains through the L1 ports.
struct TransferFeatures {
    static constexpr std::size_t kCount = 3;
    std::array<double, kCount> v{};
};

inline TransferFeatures transfer_features(const LayerSpec& l, const LayerCounts& n,
                                          const LatencyFeatures& lat) {
    TransferFeatures t;
    const double steps = static_cast<double>(l.out_p()) * l.out_q() * static_cast<double>(n.passes);
    const double period = steps > 0 ? lat.v[0] / steps : 0.0;
    t.v[0] = static_cast<double>(n.shifts) * period;
    t.v[1] = static_cast<double>(n.relus) * lat.v[4];
    t.v[2] = static_cast<double>(n.multicasts + n.multicast_extra + n.products + n.shifts +
                                 n.staged + n.c1 + n.c2 + n.c3 + n.merges + n.relus + n.handoff);
    return t;
}

// ---------------------------------------------------------------------------
// Calibration constants
// ---------------------------------------------------------------------------

struct Calibration {
    std::array<double, LatencyFeatures::kCount> latency{};
    std::array<double, TransferFeatures::kCount> transfer{};
    double weight_load = 0.0; // message-cycles per Prog word
    int fit_layers = 0;
    std::uint64_t seed = 0;
    double max_latency_error = 0.0;  // over the fit set
    double max_holdout_error = 0.0;  // over the held-out set

    bool calibrated() const { return fit_layers > 0; }
};

inline nlohmann::json calibration_to_json(const Calibration& c) {
    nlohmann::json lat = nlohmann::json::object();
    for (std::size_t i = 0; i < LatencyFeatures::kCount; ++i) lat[LatencyFeatures::kNames[i]] = c.latency[i];
    return {{"latency", lat},
            {"transfer", c.transfer},
            {"weight_load", c.weight_load},
            {"fit_layers", c.fit_layers},
            {"seed", c.seed},
            {"max_latency_error", c.max_latency_error},
            {"max_holdout_error", c.max_holdout_error}};
}

inline Calibration calibration_from_json(const nlohmann::json& j) {
    try {
        Calibration c;
        for (std::size_t i = 0; i < LatencyFeatures::kCount; ++i)
            c.latency[i] = j.at("latency").at(LatencyFeatures::kNames[i]).get<double>();
        const auto tr = j.at("transfer").get<std::vector<double>>();
        if (tr.size() != TransferFeatures::kCount) throw ModelError("calibration transfer block has the wrong arity");
        std::copy(tr.begin(), tr.end(), c.transfer.begin());
        c.weight_load = j.at("weight_load").get<double>();
        c.fit_layers = j.at("fit_layers").get<int>();
        c.seed = j.value("seed", std::uint64_t{0});
        c.max_latency_error = j.value("max_latency_error", 0.0);
        c.max_holdout_error = j.value("max_holdout_error", 0.0);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("malformed calibration file: ") + e.what());
    }
}

inline Calibration load_calibration(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ModelError("analytic tier is uncalibrated: '" + path +
                         "' not found; run `mavec calibrate --out <dir>` first");
    try {
        return calibration_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ModelError("calibration file '" + path + "' is not JSON: " + e.what());
    }
}

inline void save_calibration(const Calibration& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ModelError("cannot write calibration file '" + path + "'");
    out << calibration_to_json(c).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// L1 residency
// ---------------------------------------------------------------------------

struct L1Footprint {
    double peak_bytes = 0.0;
    double capacity_bytes = 0.0;
    double spill_bytes = 0.0;
};

/// Input values are released at their last read and outputs land as they
/// are produced. A single filter band reads the input once, so the two
/// trade places linearly; several bands keep the input until the last one.
inline L1Footprint l1_footprint(const FoldPlan& plan, std::size_t bytes_per_sitem) {
    const auto& l = plan.layer;
    const double in = kBytesPerValue * l.X * l.Y * l.C;
    const double out = kBytesPerValue * l.out_p() * l.out_q() * l.Nf;
    L1Footprint f;
    f.peak_bytes = plan.bands == 1 ? std::max(in, out) : in + out;
    f.capacity_bytes = static_cast<double>(bytes_per_sitem) * plan.geom.sitems();
    f.spill_bytes = std::max(0.0, f.peak_bytes - f.capacity_bytes);
    return f;
}

// ---------------------------------------------------------------------------
// Analytic tier
// ---------------------------------------------------------------------------

struct AnalyticOptions {
    bool first_layer = false;
    bool has_consumer = false;
    FabricConfig fabric;
};

/// Closed-form metrics for one layer. Spilled bytes are written to and read
/// back from DRAM serially with the layer.
inline LayerMetrics analytic_layer(const LayerSpec& layer, const ArrayGeom& geom, const IoConfig& io,
                                   const Calibration& calib, const AnalyticOptions& opt = {}) {
    if (!calib.calibrated())
        throw ModelError("analytic tier is uncalibrated; run `mavec calibrate --out <dir>` first");
    const auto plan = build_fold_plan(layer, geom);
    const double host_rate = io.pcie.gbps() / 8.0 / geom.clock_ghz;
    const auto n = analytic_counts(plan, opt.first_layer, opt.has_consumer);
    const auto lat = latency_features(plan, opt.first_layer, host_rate, opt.fabric.l1_port_msgs);
    double cycles = 0.0;
    for (std::size_t i = 0; i < LatencyFeatures::kCount; ++i) cycles += calib.latency[i] * lat.v[i];
    const auto mem = l1_footprint(plan, opt.fabric.l1_bytes_per_sitem);
    cycles += 2.0 * mem.spill_bytes / io.dram.gbps * geom.clock_ghz;
    const auto tf = transfer_features(layer, n, lat);
    double transfer = 0.0;
    for (std::size_t i = 0; i < TransferFeatures::kCount; ++i) transfer += calib.transfer[i] * tf.v[i];

    LayerMetrics m;
    m.layer = layer.name;
    m.tier = "analytic";
    m.host_weight = n.prog;
    m.host_image = n.host_image;
    m.on_chip_generated = n.on_chip();
    m.cycles = static_cast<std::uint64_t>(std::llround(std::max(1.0, cycles)));
    m.fpu_ops = n.fpu_ops();
    m.breakdown.operation = m.fpu_ops;
    m.breakdown.host_to_offchip = n.prog + n.host_image;
    m.breakdown.weight_load = static_cast<std::uint64_t>(std::llround(calib.weight_load * static_cast<double>(n.prog)));
    m.breakdown.transfer = static_cast<std::uint64_t>(std::llround(std::max(0.0, transfer)));
    m.macs = layer.macs();
    m.sites = geom.sites();
    m.clock_ghz = geom.clock_ghz;
    m.spill_bytes = static_cast<std::uint64_t>(mem.spill_bytes);
    const auto r = reuse_from_counts(n.products, n.weights, n.multicast_extra, n.c1, n.c2);
    m.temporal_mb = r.temporal_mb;
    m.spatial_mb = r.spatial_mb;
    m.reduction_mb = r.reduction_mb;
    return m;
}

// ---------------------------------------------------------------------------
// Network aggregation
// ---------------------------------------------------------------------------

struct NetworkReport {
    std::string workload;
    ArrayGeom geom;
    IoConfig io;
    std::vector<LayerMetrics> layers;

    std::uint64_t host_weight() const { return sum([](const LayerMetrics& m) { return m.host_weight; }); }
    std::uint64_t host_image() const { return sum([](const LayerMetrics& m) { return m.host_image; }); }
    std::uint64_t on_chip_generated() const {
        return sum([](const LayerMetrics& m) { return m.on_chip_generated; });
    }
    std::uint64_t messages() const { return host_weight() + host_image() + on_chip_generated(); }
    std::uint64_t cycles() const { return sum([](const LayerMetrics& m) { return m.cycles; }); }
    CycleBreakdown breakdown() const {
        CycleBreakdown b;
        for (const auto& m : layers) {
            b.operation += m.breakdown.operation;
            b.weight_load += m.breakdown.weight_load;
            b.host_to_offchip += m.breakdown.host_to_offchip;
            b.transfer += m.breakdown.transfer;
        }
        return b;
    }
    double seconds() const { return static_cast<double>(cycles()) / (geom.clock_ghz * 1e9); }
    double throughput_inf_s() const { return cycles() ? 1.0 / seconds() : 0.0; }
    double throughput_msg_s() const { return cycles() ? static_cast<double>(messages()) / seconds() : 0.0; }

private:
    template <class F>
    std::uint64_t sum(F f) const {
        std::uint64_t s = 0;
        for (const auto& m : layers) s += f(m);
        return s;
    }
};

/// Whole-workload estimate. Layer i hands its activations to layer i+1.
inline NetworkReport analytic_network(const std::string& name, const std::vector<LayerSpec>& layers,
                                      const ArrayGeom& geom, const IoConfig& io, const Calibration& calib,
                                      const FabricConfig& fabric = {}) {
    NetworkReport r;
    r.workload = name;
    r.geom = geom;
    r.io = io;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        AnalyticOptions opt{i == 0, i + 1 < layers.size(), fabric};
        r.layers.push_back(analytic_layer(layers[i], geom, io, calib, opt));
    }
    return r;
}

/// One row per (PCIe, DRAM) point.
struct SweepPoint {
    PciePoint pcie;
    DramPoint dram;
    double throughput_inf_s = 0.0;
    double throughput_msg_s = 0.0;
    double latency_kcc = 0.0;
};

inline std::vector<SweepPoint> sweep_io(const std::vector<LayerSpec>& layers, const ArrayGeom& geom,
                                        const std::vector<PciePoint>& pcie_set,
                                        const std::vector<DramPoint>& dram_set, const Calibration& calib,
                                        const FabricConfig& fabric = {}) {
    std::vector<SweepPoint> out;
    if (layers.empty()) return out;
    for (const auto& p : pcie_set)
        for (const auto& d : dram_set) {
            const auto r = analytic_network("sweep", layers, geom, IoConfig{p, d}, calib, fabric);
            out.push_back({p, d, r.throughput_inf_s(), r.throughput_msg_s(),
                           static_cast<double>(r.cycles()) / 1e3});
        }
    return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline constexpr std::array<const char*, 12> kReportColumns = {
    "msg_host_weight_pct", "cyc_transfer_pct", "util_pct",   "latency_kcc",
    "gflops",              "temporal_mb",      "spatial_mb", "reduction_mb",
    "pcie_gbps",           "dram_gbps",        "throughput_inf_s", "throughput_msg_s"};

namespace detail {
inline double pct_of(std::uint64_t part, std::uint64_t whole) {
    return whole ? 100.0 * static_cast<double>(part) / static_cast<double>(whole) : 0.0;
}
} // namespace detail

/// One row per layer; throughput columns hold the network figures.
inline void write_report_csv(std::ostream& os, const NetworkReport& r) {
    os << "layer,tier,array,msg_host_image_pct,msg_on_chip_pct";
    for (const char* c : kReportColumns) os << ',' << c;
    os << '\n';
    for (const auto& m : r.layers) {
        const auto msgs = m.messages();
        os << m.layer << ',' << m.tier << ',' << r.geom.rows << 'x' << r.geom.cols << ','
           << detail::pct_of(m.host_image, msgs) << ',' << detail::pct_of(m.on_chip_generated, msgs) << ','
           << detail::pct_of(m.host_weight, msgs) << ',' << 100.0 * m.cyc_transfer() << ','
           << 100.0 * m.utilization() << ',' << m.latency_kcc() << ',' << m.gflops() << ','
           << m.temporal_mb << ',' << m.spatial_mb << ',' << m.reduction_mb << ',' << r.io.pcie.gbps()
           << ',' << r.io.dram.gbps << ',' << r.throughput_inf_s() << ',' << r.throughput_msg_s() << '\n';
    }
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepPoint>& pts) {
    os << "pcie,dram,pcie_gbps,dram_gbps,latency_kcc,throughput_inf_s,throughput_msg_s\n";
    for (const auto& p : pts)
        os << p.pcie.label() << ',' << p.dram.name << ',' << p.pcie.gbps() << ',' << p.dram.gbps << ','
           << p.latency_kcc << ',' << p.throughput_inf_s << ',' << p.throughput_msg_s << '\n';
}

inline nlohmann::json metrics_to_json(const LayerMetrics& m) {
    const auto msgs = m.messages();
    return {{"layer", m.layer},
            {"tier", m.tier},
            {"messages", {{"host_weight", m.host_weight}, {"host_image", m.host_image},
                          {"on_chip_generated", m.on_chip_generated}}},
            {"msg_host_weight_pct", detail::pct_of(m.host_weight, msgs)},
            {"msg_host_image_pct", detail::pct_of(m.host_image, msgs)},
            {"cycle_breakdown", {{"message_transfer", m.cyc_transfer()}, {"operation", m.cyc_operation()},
                                 {"host_to_offchip", m.cyc_host()}, {"weight_load", m.cyc_weight()}}},
            {"cyc_transfer_pct", 100.0 * m.cyc_transfer()},
            {"util_pct", 100.0 * m.utilization()},
            {"latency_kcc", m.latency_kcc()},
            {"gflops", m.gflops()},
            {"macs", m.macs},
            {"fpu_ops", m.fpu_ops},
            {"spill_bytes", m.spill_bytes},
            {"temporal_mb", m.temporal_mb},
            {"spatial_mb", m.spatial_mb},
            {"reduction_mb", m.reduction_mb}};
}

inline nlohmann::json report_to_json(const NetworkReport& r) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& m : r.layers) layers.push_back(metrics_to_json(m));
    const auto b = r.breakdown();
    const auto msgs = r.messages();
    const double total = static_cast<double>(b.total());
    auto f = [&](std::uint64_t x) { return total > 0 ? static_cast<double>(x) / total : 0.0; };
    return {{"workload", r.workload},
            {"array", std::to_string(r.geom.rows) + "x" + std::to_string(r.geom.cols)},
            {"clock_ghz", r.geom.clock_ghz},
            {"pcie", r.io.pcie.label()},
            {"pcie_gbps", r.io.pcie.gbps()},
            {"dram", r.io.dram.name},
            {"dram_gbps", r.io.dram.gbps},
            {"messages", {{"host_weight", r.host_weight()}, {"host_image", r.host_image()},
                          {"on_chip_generated", r.on_chip_generated()}, {"total", msgs}}},
            {"msg_host_weight_pct", detail::pct_of(r.host_weight(), msgs)},
            {"msg_host_image_pct", detail::pct_of(r.host_image(), msgs)},
            {"cycle_breakdown", {{"message_transfer", f(b.transfer)}, {"operation", f(b.operation)},
                                 {"host_to_offchip", f(b.host_to_offchip)}, {"weight_load", f(b.weight_load)}}},
            {"latency_kcc", static_cast<double>(r.cycles()) / 1e3},
            {"throughput_inf_s", r.throughput_inf_s()},
            {"throughput_msg_s", r.throughput_msg_s()},
            {"layers", layers}};
}

} // namespace mavec
