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
 * @file calibration.hpp
 * @brief Fits the analytic tier against exact simulations of small layers.
 *
 * The calibration set is drawn from the shape family of the full networks
 * the analytic tier is meant for: 3x3 kernels, stride 1, pad 1, ReLU. A
 * second, disjoint draw from the same generator is held out and scored.
 */
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

#include "mavec/fabric.hpp"
#include "mavec/perf_model.hpp"
#include "mavec/schedule.hpp"
#include "mavec/workload.hpp"

namespace mavec {

struct CalibrationCase {
    LayerSpec layer;
    ArrayGeom geom;
    LayerSpec next; // consumer, so the handoff phase is exercised
    PciePoint pcie; // host link; varied so host-bound terms are identified
};

inline std::vector<CalibrationCase> calibration_cases(std::uint64_t seed, int count) {
    std::mt19937_64 rng(seed);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    std::vector<CalibrationCase> v;
    for (int i = 0; i < count; ++i) {
        CalibrationCase c;
        c.layer = conv_layer("cal" + std::to_string(i), pick(4, 20), pick(1, 16), pick(1, 32));
        const int width = (c.layer.R + 1) * c.layer.S;
        c.geom = ArrayGeom{4 * pick(1, 4), width * pick(1, 4) + pick(0, 3), 1.0};
        c.next = conv_layer("next", c.layer.out_p(), c.layer.Nf, 4, c.layer.R);
        // Half at the default link, the rest over links of at least Gen5 x4.
        if (pick(0, 1)) c.pcie = PciePoint{pick(5, 6), kPcieLanes[static_cast<std::size_t>(pick(1, 3))]};
        v.push_back(c);
    }
    return v;
}

struct CaseResult {
    CalibrationCase c;
    LayerMetrics exact;
    LayerCounts counts;
    LatencyFeatures latency;
    TransferFeatures transfer;
};

inline CaseResult run_case(const CalibrationCase& c, std::uint64_t seed, FabricConfig cfg = {}) {
    cfg.host_gbps = c.pcie.gbps();
    const auto plan = build_fold_plan(c.layer, c.geom);
    const auto prog = generate_program(c.layer, c.geom, synthetic_weights(c.layer, seed),
                                       synthetic_input(c.layer, seed + 1), {true, c.next});
    CaseResult r{c, collect(simulate_layer(prog, cfg)), analytic_counts(plan, true, true), {}, {}};
    r.latency = latency_features(plan, true, cfg.host_msgs_per_cycle(c.geom.clock_ghz), cfg.l1_port_msgs);
    r.transfer = transfer_features(c.layer, r.counts, r.latency);
    return r;
}

namespace detail {

/// Least squares on relative residuals (rows scaled by 1/target) with
/// non-negative coefficients: the most negative term is pinned to zero and
/// the rest refitted until none is negative. Every regressor is a cycle or
/// message-cycle estimate, so a negative weight would only be overfit.
template <std::size_t N, class Get>
std::array<double, N> relative_fit(const std::vector<CaseResult>& rs, Get get, const char* what) {
    const auto rows = static_cast<Eigen::Index>(rs.size());
    Eigen::MatrixXd A(rows, static_cast<Eigen::Index>(N));
    const Eigen::VectorXd b = Eigen::VectorXd::Ones(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto [x, y] = get(rs[static_cast<std::size_t>(i)]);
        if (!(y > 0.0)) throw ModelError(std::string("calibration target for ") + what + " is zero");
        for (std::size_t j = 0; j < N; ++j) A(i, static_cast<Eigen::Index>(j)) = x[j] / y;
    }
    std::vector<Eigen::Index> active;
    for (std::size_t j = 0; j < N; ++j)
        if (A.col(static_cast<Eigen::Index>(j)).cwiseAbs().maxCoeff() > 0.0) active.push_back(static_cast<Eigen::Index>(j));
    std::array<double, N> out{};
    while (!active.empty()) {
        Eigen::MatrixXd sub(rows, static_cast<Eigen::Index>(active.size()));
        for (std::size_t k = 0; k < active.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = A.col(active[k]);
        const auto qr = sub.colPivHouseholderQr();
        if (qr.rank() < sub.cols())
            throw ModelError(std::string("calibration set does not determine the ") + what + " model");
        const Eigen::VectorXd th = qr.solve(b);
        Eigen::Index worst = 0;
        if (th.minCoeff(&worst) >= 0.0) {
            for (std::size_t k = 0; k < active.size(); ++k)
                out[static_cast<std::size_t>(active[k])] = th(static_cast<Eigen::Index>(k));
            return out;
        }
        active.erase(active.begin() + worst);
    }
    throw ModelError(std::string("no non-negative ") + what + " model fits the calibration set");
}

} // namespace detail

inline double predicted_cycles(const Calibration& c, const LatencyFeatures& f) {
    double y = 0.0;
    for (std::size_t i = 0; i < LatencyFeatures::kCount; ++i) y += c.latency[i] * f.v[i];
    return y;
}

inline double latency_error(const Calibration& c, const CaseResult& r) {
    const double y = static_cast<double>(r.exact.cycles);
    return std::abs(predicted_cycles(c, r.latency) - y) / y;
}

inline Calibration fit_calibration(const std::vector<CaseResult>& rs) {
    if (rs.size() < LatencyFeatures::kCount + 1)
        throw ModelError("calibration needs more layers than latency terms");
    Calibration c;
    c.latency = detail::relative_fit<LatencyFeatures::kCount>(
        rs, [](const CaseResult& r) { return std::pair{r.latency.v, static_cast<double>(r.exact.cycles)}; },
        "latency");
    c.transfer = detail::relative_fit<TransferFeatures::kCount>(
        rs,
        [](const CaseResult& r) {
            return std::pair{r.transfer.v, static_cast<double>(r.exact.breakdown.transfer)};
        },
        "transfer");
    const auto wl = detail::relative_fit<1>(
        rs,
        [](const CaseResult& r) {
            return std::pair{std::array<double, 1>{static_cast<double>(r.counts.prog)},
                             static_cast<double>(r.exact.breakdown.weight_load)};
        },
        "weight-load");
    c.weight_load = wl[0];
    c.fit_layers = static_cast<int>(rs.size());
    for (const auto& r : rs) c.max_latency_error = std::max(c.max_latency_error, latency_error(c, r));
    return c;
}

struct CalibrationRun {
    Calibration calib;
    std::vector<CaseResult> fit;
    std::vector<CaseResult> holdout;
};

inline CalibrationRun calibrate(std::uint64_t seed = 9, int fit_layers = 48, int holdout_layers = 24,
                                const FabricConfig& cfg = {}) {
    CalibrationRun run;
    const auto cases = calibration_cases(seed, fit_layers + holdout_layers);
    for (std::size_t i = 0; i < cases.size(); ++i) {
        auto r = run_case(cases[i], seed * 1000 + i, cfg);
        (static_cast<int>(i) < fit_layers ? run.fit : run.holdout).push_back(std::move(r));
    }
    run.calib = fit_calibration(run.fit);
    run.calib.seed = seed;
    for (const auto& r : run.holdout)
        run.calib.max_holdout_error = std::max(run.calib.max_holdout_error, latency_error(run.calib, r));
    return run;
}

} // namespace mavec
