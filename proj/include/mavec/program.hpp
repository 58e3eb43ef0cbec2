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
 * @file program.hpp
 * @brief MessageProgram: the phase-structured message stream for one layer,
 *        and its text dump format.
 *
 * Each scheduled message carries a small sideband next to the 64-bit word.
 * The sideband holds what the fabric's fixed timing makes implicit in
 * hardware (which logical role of a multi-role SiteO a word is for, the
 * operand lane inside a reduction, the step index of an image operand, the
 * L1 slot behind an offload address). It never changes the word itself.
 */
#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mavec/layer.hpp"
#include "mavec/message.hpp"

namespace mavec {

enum class Target : std::uint8_t { None, C0, C1, C2, C3, Oa };

inline std::string_view to_string(Target t) {
    switch (t) {
        case Target::None: return "-";
        case Target::C0: return "C0";
        case Target::C1: return "C1";
        case Target::C2: return "C2";
        case Target::C3: return "C3";
        case Target::Oa: return "OA";
    }
    return "?";
}

inline Target target_from(std::string_view s) {
    if (s == "C0") return Target::C0;
    if (s == "C1") return Target::C1;
    if (s == "C2") return Target::C2;
    if (s == "C3") return Target::C3;
    if (s == "OA") return Target::Oa;
    return Target::None;
}

struct Sideband {
    Target target = Target::None;
    int lane = 0;     // operand lane at a reserved-column reduction
    int expected = 0; // Prog: operands the armed reduction waits for
    int out_lane = 0; // Prog: lane this SiteO feeds downstream
    int seq = 0;      // image operand: step index within the pass
    int rows = 0;     // image operand: multicast fan-out (0 = unicast)
    int slot = 0;     // offload messages: L1 slot behind the address
    int key = -1;     // offload messages: flattened output index f*P*Q + p*Q + q
    PatternBits out_pattern; // handoff: tail of the emitted next-layer message

    friend bool operator==(const Sideband&, const Sideband&) = default;
};

enum class Source : std::uint8_t { Host, L1, OnChip };

inline std::string_view to_string(Source s) {
    switch (s) {
        case Source::Host: return "host";
        case Source::L1: return "l1";
        case Source::OnChip: return "on-chip";
    }
    return "?";
}

struct ScheduledMessage {
    Message msg;
    Source source = Source::Host;
    Sideband sb;

    friend bool operator==(const ScheduledMessage&, const ScheduledMessage&) = default;
};

enum class PhaseKind : std::uint8_t { Prog, Compute, Merge, Handoff };

inline std::string_view to_string(PhaseKind k) {
    switch (k) {
        case PhaseKind::Prog: return "prog";
        case PhaseKind::Compute: return "compute";
        case PhaseKind::Merge: return "merge";
        case PhaseKind::Handoff: return "handoff";
    }
    return "?";
}

/// Phases that must wait for the fabric to drain before they start. Merge
/// streams behind its pass: each merge word waits for its partial sum.
constexpr bool is_barrier(PhaseKind k) { return k == PhaseKind::Prog || k == PhaseKind::Handoff; }

struct Phase {
    PhaseKind kind = PhaseKind::Prog;
    int pass = 0;      // filter fold index (0-based); -1 for the handoff
    int image_fold = -1;
    std::vector<ScheduledMessage> messages;
};

/// What the layer after this one needs from the handoff.
enum class NextKind : std::uint8_t { None, Conv, Pointwise, MaxPool };

inline std::string_view to_string(NextKind k) {
    switch (k) {
        case NextKind::None: return "none";
        case NextKind::Conv: return "conv";
        case NextKind::Pointwise: return "pointwise";
        case NextKind::MaxPool: return "maxpool";
    }
    return "?";
}

inline NextKind next_kind_from(std::string_view s) {
    if (s == "none") return NextKind::None;
    if (s == "conv") return NextKind::Conv;
    if (s == "pointwise") return NextKind::Pointwise;
    if (s == "maxpool") return NextKind::MaxPool;
    throw ScheduleError("unknown next-layer kind '" + std::string(s) + "'");
}

struct MessageProgram {
    LayerSpec layer;
    ArrayGeom geom;
    bool first_layer = true;
    NextKind next = NextKind::None;
    std::vector<Phase> phases;

    std::size_t message_count() const {
        std::size_t n = 0;
        for (const auto& p : phases) n += p.messages.size();
        return n;
    }
};

// ---------------------------------------------------------------------------
// Dump format
//
//   # program {"layer":{...},"geom":{...},"first_layer":true,"next":"conv"}
//   # phase 0 prog pass=0 if=-1 n=96
//   1...  # Prog @0,0 -> A_ADDS@0,3  payload=0.5  [host C0 lane=0 ...]
// ---------------------------------------------------------------------------

inline nlohmann::json layer_to_json(const LayerSpec& l) {
    return {{"name", l.name},   {"kind", std::string(to_string(l.kind))},
            {"X", l.X},         {"Y", l.Y},
            {"C", l.C},         {"R", l.R},
            {"S", l.S},         {"Nf", l.Nf},
            {"stride", l.stride}, {"pad", l.pad},
            {"activation", l.activation == Activation::Relu ? "relu" : "none"}};
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
    LayerSpec l;
    try {
        l.name = j.value("name", std::string{});
        l.kind = layer_kind_from(j.value("kind", std::string("conv")));
        l.X = j.at("X").get<int>();
        l.Y = j.at("Y").get<int>();
        l.C = j.at("C").get<int>();
        l.R = j.value("R", 1);
        l.S = j.value("S", 1);
        l.Nf = j.value("Nf", l.kind == LayerKind::MaxPool ? l.C : 1);
        l.stride = j.value("stride", 1);
        l.pad = j.value("pad", 0);
        const auto act = j.value("activation", std::string("relu"));
        if (act != "relu" && act != "none")
            throw WorkloadError("unknown activation '" + act + "'");
        l.activation = act == "relu" ? Activation::Relu : Activation::None;
    } catch (const nlohmann::json::exception& e) {
        throw WorkloadError(std::string("layer field: ") + e.what());
    }
    return l;
}

inline void write_program(std::ostream& os, const MessageProgram& prog) {
    nlohmann::json header = {
        {"layer", layer_to_json(prog.layer)},
        {"geom", {{"rows", prog.geom.rows}, {"cols", prog.geom.cols}, {"clock_ghz", prog.geom.clock_ghz}}},
        {"first_layer", prog.first_layer},
        {"next", std::string(to_string(prog.next))},
    };
    os << "# program " << header.dump() << '\n';
    const int cols = prog.geom.cols;
    for (std::size_t i = 0; i < prog.phases.size(); ++i) {
        const auto& ph = prog.phases[i];
        os << "# phase " << i << ' ' << to_string(ph.kind) << " pass=" << ph.pass
           << " if=" << ph.image_fold << " n=" << ph.messages.size() << '\n';
        for (const auto& sm : ph.messages) {
            const bool raw = sm.msg.op == Opcode::Prog && sm.sb.target != Target::C0;
            os << annotate(sm.msg, cols, raw) << "  [" << to_string(sm.source) << ' '
               << to_string(sm.sb.target) << " lane=" << sm.sb.lane << " exp=" << sm.sb.expected
               << " out=" << sm.sb.out_lane << " seq=" << sm.sb.seq << " rows=" << sm.sb.rows
               << " slot=" << sm.sb.slot << " key=" << sm.sb.key
               << " op=" << sm.sb.out_pattern.pack() << "]\n";
        }
    }
}

inline std::string program_to_string(const MessageProgram& prog) {
    std::ostringstream os;
    write_program(os, prog);
    return os.str();
}

inline MessageProgram read_program(std::istream& is) {
    MessageProgram prog;
    std::string line;
    int lineno = 0;
    bool have_header = false;
    auto fail = [&](const std::string& why) {
        throw ScheduleError("program line " + std::to_string(lineno) + ": " + why);
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            if (line.rfind("# program ", 0) == 0) {
                auto j = nlohmann::json::parse(line.substr(10), nullptr, false);
                if (j.is_discarded()) fail("malformed program header");
                prog.layer = layer_from_json(j.at("layer"));
                prog.geom.rows = j["geom"].at("rows").get<int>();
                prog.geom.cols = j["geom"].at("cols").get<int>();
                prog.geom.clock_ghz = j["geom"].value("clock_ghz", 1.0);
                prog.first_layer = j.value("first_layer", true);
                prog.next = next_kind_from(j.value("next", std::string("none")));
                have_header = true;
                continue;
            }
            if (line.rfind("# phase ", 0) == 0) {
                std::istringstream ls(line.substr(8));
                int idx = 0;
                std::string kind, pass, fold;
                ls >> idx >> kind >> pass >> fold;
                Phase ph;
                if (kind == "prog") ph.kind = PhaseKind::Prog;
                else if (kind == "compute") ph.kind = PhaseKind::Compute;
                else if (kind == "merge") ph.kind = PhaseKind::Merge;
                else if (kind == "handoff") ph.kind = PhaseKind::Handoff;
                else fail("unknown phase kind '" + kind + "'");
                if (pass.rfind("pass=", 0) != 0 || fold.rfind("if=", 0) != 0) fail("bad phase header");
                ph.pass = std::stoi(pass.substr(5));
                ph.image_fold = std::stoi(fold.substr(3));
                prog.phases.push_back(std::move(ph));
                continue;
            }
            if (line[0] == '#') continue;
            if (prog.phases.empty()) fail("message before any phase header");
            ScheduledMessage sm;
            std::uint64_t word = 0;
            try {
                word = std::stoull(line.substr(0, 16), nullptr, 16);
            } catch (const std::exception&) {
                fail("expected 16 hex digits");
            }
            sm.msg = decode(word);
            const auto lb = line.find('[');
            const auto rb = line.find(']', lb == std::string::npos ? 0 : lb);
            if (lb == std::string::npos || rb == std::string::npos)
                fail("missing sideband annotation");
            std::istringstream ss(line.substr(lb + 1, rb - lb - 1));
            std::string src, tgt, field;
            ss >> src >> tgt;
            if (src == "host") sm.source = Source::Host;
            else if (src == "l1") sm.source = Source::L1;
            else if (src == "on-chip") sm.source = Source::OnChip;
            else fail("unknown source '" + src + "'");
            sm.sb.target = target_from(tgt);
            while (ss >> field) {
                const auto eq = field.find('=');
                if (eq == std::string::npos) fail("bad sideband field '" + field + "'");
                const auto name = field.substr(0, eq);
                const int value = std::stoi(field.substr(eq + 1));
                if (name == "lane") sm.sb.lane = value;
                else if (name == "exp") sm.sb.expected = value;
                else if (name == "out") sm.sb.out_lane = value;
                else if (name == "seq") sm.sb.seq = value;
                else if (name == "rows") sm.sb.rows = value;
                else if (name == "slot") sm.sb.slot = value;
                else if (name == "key") sm.sb.key = value;
                else if (name == "op")
                    sm.sb.out_pattern = PatternBits::unpack(static_cast<std::uint16_t>(value));
                else fail("unknown sideband field '" + name + "'");
            }
            prog.phases.back().messages.push_back(sm);
        } catch (const ScheduleError&) {
            throw;
        } catch (const std::exception& e) {
            fail(e.what());
        }
    }
    if (!have_header) throw ScheduleError("program header missing");
    return prog;
}

} // namespace mavec
