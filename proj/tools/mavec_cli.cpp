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

// Command-line front end: map, schedule, simulate, estimate, sweep-io,
// verify and calibrate. Every flag can also come from a MAVEC_* variable.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mavec/calibration.hpp"
#include "mavec/fold_mapper.hpp"
#include "mavec/perf_model.hpp"
#include "mavec/pipeline.hpp"
#include "mavec/schedule.hpp"
#include "mavec/verify.hpp"
#include "mavec/workload.hpp"

namespace fs = std::filesystem;
using namespace mavec;

namespace {

struct UsageError : Error {
    using Error::Error;
    const char* kind() const noexcept override { return "usage"; }
};

struct Options {
    std::string preset;
    std::string workload;
    std::string array = "64x64";
    double clock_ghz = 1.0;
    std::string pcie = "6x16";
    std::string dram = "baseline";
    std::string tier;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string calib;
    std::string layer;
    int random_layers = 0;
    bool calibrate_now = false;
    bool cycle_log = false;
};

ArrayGeom parse_array(const std::string& s, double ghz) {
    int r = 0, c = 0;
    char x = 0, extra = 0;
    if (std::sscanf(s.c_str(), "%d%c%d%c", &r, &x, &c, &extra) != 3 || (x != 'x' && x != 'X'))
        throw UsageError("--array expects RxC, got '" + s + "'");
    ArrayGeom g{r, c, ghz};
    g.validate();
    return g;
}

IoConfig io_of(const Options& o) { return IoConfig{parse_pcie(o.pcie), dram_lookup(o.dram)}; }

WorkloadFile workload_of(const Options& o) {
    if (!o.preset.empty() && !o.workload.empty())
        throw UsageError("pass either --preset or --workload, not both");
    WorkloadFile w;
    if (!o.workload.empty())
        w = load_workload_file(o.workload);
    else if (!o.preset.empty())
        w = load_preset(o.preset);
    else
        throw UsageError("no workload: pass --preset <vgg19-conv|case-study> or --workload <file>");
    if (o.seed) w.seed = *o.seed;
    if (!o.layer.empty()) {
        for (std::size_t i = 0; i < w.layers.size(); ++i) {
            if (w.layers[i].name != o.layer) continue;
            WorkloadFile one;
            one.name = w.name;
            one.seed = w.seed;
            one.layers = {w.layers[i]};
            one.pool_after = {0};
            return one;
        }
        throw UsageError("workload '" + w.name + "' has no layer named '" + o.layer + "'");
    }
    return w;
}

/// Writes `body` to <out>/<name>, or to stdout when no --out was given.
void emit(const Options& o, const std::string& name, const std::string& body) {
    if (o.out.empty()) {
        std::cout << body;
        return;
    }
    fs::create_directories(o.out);
    const auto path = fs::path(o.out) / name;
    std::ofstream f(path);
    if (!f) throw Error("cannot write '" + path.string() + "'");
    f << body;
    std::cerr << "wrote " << path.string() << '\n';
}

std::string calib_path(const Options& o) {
    if (!o.calib.empty()) return o.calib;
    return (fs::path(o.out.empty() ? "." : o.out) / "calibration.json").string();
}

Calibration calibration_of(const Options& o) {
    const auto path = calib_path(o);
    if (o.calibrate_now) {
        auto run = calibrate(o.seed.value_or(9));
        if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
        save_calibration(run.calib, path);
        return run.calib;
    }
    return load_calibration(path);
}

std::string tier_of(const Options& o, const std::string& fallback) {
    const auto t = o.tier.empty() ? fallback : o.tier;
    if (t != "exact" && t != "analytic") throw UsageError("--tier must be exact or analytic");
    return t;
}

std::string slug(std::string s) {
    for (auto& ch : s)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '-') ch = '_';
    return s;
}

void emit_report(const Options& o, const NetworkReport& r) {
    std::ostringstream csv;
    write_report_csv(csv, r);
    if (o.out.empty()) {
        std::cout << csv.str() << report_to_json(r).dump(2) << '\n';
        return;
    }
    emit(o, "report.csv", csv.str());
    emit(o, "summary.json", report_to_json(r).dump(2) + "\n");
}

// ---------------------------------------------------------------- commands

int cmd_map(const Options& o) {
    const auto w = workload_of(o);
    const auto g = parse_array(o.array, o.clock_ghz);
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : w.layers) {
        const auto plan = build_fold_plan(l, g);
        if (auto v = coverage_check(plan, l); !v) throw MappingError("coverage check failed: " + v.message);
        layers.push_back(plan_to_json(plan));
    }
    const nlohmann::json doc = {{"workload", w.name}, {"layers", layers}};
    emit(o, "map.json", doc.dump(2) + "\n");
    return 0;
}

int cmd_schedule(const Options& o) {
    const auto w = workload_of(o);
    const auto g = parse_array(o.array, o.clock_ghz);
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        const auto& l = w.layers[i];
        const auto prog = generate_program(l, g, synthetic_weights(l, w.seed + 1 + i),
                                           synthetic_input(l, w.seed), {i == 0, w.consumer_of(i)});
        emit(o, "schedule_" + slug(l.name) + ".txt", program_to_string(prog));
    }
    return 0;
}

int run_exact(const Options& o) {
    const auto w = workload_of(o);
    const auto g = parse_array(o.array, o.clock_ghz);
    FabricConfig cfg;
    cfg.cycle_log = o.cycle_log;
    const auto run = simulate_workload(w, g, io_of(o), cfg);
    if (!o.out.empty()) {
        for (const auto& t : run.traces) {
            emit(o, "trace_" + slug(t.layer.name) + ".json", trace_to_json(t).dump(2) + "\n");
            if (o.cycle_log) {
                std::ostringstream os;
                write_cycle_csv(os, t);
                emit(o, "cycles_" + slug(t.layer.name) + ".csv", os.str());
            }
        }
    }
    emit_report(o, run.report);
    return 0;
}

int run_analytic(const Options& o) {
    const auto w = workload_of(o);
    const auto g = parse_array(o.array, o.clock_ghz);
    const auto calib = calibration_of(o);
    emit_report(o, analytic_network(w.name, w.layers, g, io_of(o), calib));
    return 0;
}

int cmd_simulate(const Options& o) {
    return tier_of(o, "exact") == "exact" ? run_exact(o) : run_analytic(o);
}

int cmd_estimate(const Options& o) {
    return tier_of(o, "analytic") == "exact" ? run_exact(o) : run_analytic(o);
}

int cmd_sweep(const Options& o) {
    if (tier_of(o, "analytic") != "analytic") throw UsageError("sweep-io runs on the analytic tier only");
    const auto w = workload_of(o);
    const auto g = parse_array(o.array, o.clock_ghz);
    const auto pts = sweep_io(w.layers, g, pcie_points(), dram_points(), calibration_of(o));
    std::ostringstream os;
    write_sweep_csv(os, pts);
    emit(o, "sweep.csv", os.str());
    return 0;
}

int cmd_verify(const Options& o) {
    if (tier_of(o, "exact") != "exact") throw UsageError("verify compares the exact tier only");
    VerifySummary s;
    if (o.random_layers > 0) {
        if (!o.preset.empty() || !o.workload.empty())
            throw UsageError("--random-layers replaces --preset/--workload");
        s = verify_random_layers(o.random_layers, o.seed.value_or(1));
    } else {
        const auto w = workload_of(o);
        const auto g = parse_array(o.array, o.clock_ghz);
        for (std::size_t i = 0; i < w.layers.size(); ++i) tally(s, check_layer(w.layers[i], g, w.seed + i));
    }
    if (!o.out.empty()) emit(o, "verify.json", summary_to_json(s).dump(2) + "\n");
    std::cout << s.line() << '\n';
    if (!s.ok()) {
        for (const auto& v : s.verdicts)
            if (!v.ok()) std::cerr << verdict_to_json(v).dump() << '\n';
        std::cerr << nlohmann::json{{"error", {{"kind", "verify"}, {"message", s.line()}}}}.dump() << '\n';
        return 3;
    }
    return 0;
}

int cmd_calibrate(const Options& o) {
    const auto run = calibrate(o.seed.value_or(9));
    const auto path = calib_path(o);
    if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    save_calibration(run.calib, path);
    std::cout << "calibrated on " << run.fit.size() << " layers; max latency error "
              << run.calib.max_latency_error << " (fit), " << run.calib.max_holdout_error << " ("
              << run.holdout.size() << " held out) -> " << path << '\n';
    return 0;
}

void print_error(const std::string& kind, const std::string& msg, const std::string& command) {
    std::cerr << nlohmann::json{{"error", {{"kind", kind}, {"message", msg}, {"command", command}}}}.dump()
              << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Message-driven SiteO array mapper, scheduler and simulator"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    std::uint64_t seed = 0;
    app.add_option("--preset", o.preset, "Built-in workload: vgg19-conv or case-study")->envname("MAVEC_PRESET");
    app.add_option("--workload", o.workload, "JSON-lines workload file")->envname("MAVEC_WORKLOAD");
    app.add_option("--array", o.array, "SiteO array as RxC")->envname("MAVEC_ARRAY")->capture_default_str();
    app.add_option("--clock-ghz", o.clock_ghz, "Clock in GHz")->envname("MAVEC_CLOCK_GHZ")->capture_default_str();
    app.add_option("--pcie", o.pcie, "Host link <gen>x<lanes>")->envname("MAVEC_PCIE")->capture_default_str();
    app.add_option("--dram", o.dram, "Off-chip memory family or 'baseline'")->envname("MAVEC_DRAM")->capture_default_str();
    app.add_option("--tier", o.tier, "exact or analytic")->envname("MAVEC_TIER");
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed for synthetic data")->envname("MAVEC_SEED");
    app.add_option("--out", o.out, "Output directory (stdout when omitted)")->envname("MAVEC_OUT");
    app.add_option("--calib", o.calib, "Calibration file (default <out>/calibration.json)")->envname("MAVEC_CALIB");
    app.add_option("--layer", o.layer, "Restrict to one layer by name")->envname("MAVEC_LAYER");

    app.add_subcommand("map", "Fold plan as JSON");
    app.add_subcommand("schedule", "Message program dump per layer");
    auto* sim = app.add_subcommand("simulate", "Cycle-level simulation (exact tier)");
    sim->add_flag("--cycle-log", o.cycle_log, "Also write per-cycle class counts");
    auto* est = app.add_subcommand("estimate", "Network report (analytic tier)");
    auto* sweep = app.add_subcommand("sweep-io", "Throughput over PCIe x DRAM points");
    for (auto* c : {est, sweep})
        c->add_flag("--calibrate", o.calibrate_now, "Fit the analytic tier first and save it");
    auto* ver = app.add_subcommand("verify", "Compare the simulator with the conv oracles");
    ver->add_option("--random-layers", o.random_layers, "Number of random layers")->check(CLI::PositiveNumber);
    app.add_subcommand("calibrate", "Fit the analytic tier on exact simulations");

    std::string command = "?";
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what(), command);
        return 2;
    }
    if (seed_opt->count() > 0) o.seed = seed;
    command = app.get_subcommands().front()->get_name();
    const std::map<std::string, int (*)(const Options&)> commands = {
        {"map", cmd_map},           {"schedule", cmd_schedule}, {"simulate", cmd_simulate},
        {"estimate", cmd_estimate}, {"sweep-io", cmd_sweep},    {"verify", cmd_verify},
        {"calibrate", cmd_calibrate}};
    try {
        return commands.at(command)(o);
    } catch (const UsageError& e) {
        print_error(e.kind(), e.what(), command);
        return 2;
    } catch (const Error& e) {
        print_error(e.kind(), e.what(), command);
        return 1;
    } catch (const std::exception& e) {
        print_error("internal", e.what(), command);
        return 1;
    }
}
