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
 * @file fabric.hpp
 * @brief Cycle-level simulator of the SiteO mesh executing a MessageProgram.
 *
 * Transport: each SiteO has a top and a left input FIFO and forwards on a
 * down and a right port, one hop per cycle, column-first routing. A per-
 * column multicast bus drops image operands into the band rows one SiteM
 * (4 rows) per cycle. Partial sums leaving C1 and C2 ride a per-row reduce
 * bus that advances one SiteM (4 columns) per cycle. Each SiteO runs one FPU
 * operation per cycle.
 *
 * Cycle accounting is in message-resource-cycles: every cycle each resident
 * message adds one unit to its class, and each FPU operation adds one unit
 * to `operation`.
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mavec/fold_mapper.hpp"
#include "mavec/program.hpp"
#include "mavec/reference.hpp"
#include "mavec/schedule.hpp"

namespace mavec {

struct FabricConfig {
    int fifo_depth = 4;
    int emit_depth = 2;
    int buffer_depth = 4;
    double host_gbps = 126.0;   // PCIe 6.0 x16
    int l1_port_msgs = 4;       // per SiteM per cycle, each direction
    int l1_write_depth = 16;    // per SiteM
    std::size_t l1_bytes_per_sitem = 96 * 1024;
    std::uint64_t idle_limit = 20000;
    bool cycle_log = false;

    double host_msgs_per_cycle(double clock_ghz) const { return host_gbps / 8.0 / clock_ghz; }

    void validate() const {
        if (fifo_depth < 1 || emit_depth < 2 || buffer_depth < 1 || l1_port_msgs < 1 ||
            l1_write_depth < 1)
            throw SimulationError("fabric queue depths and port budgets must be positive");
        if (!(host_gbps > 0.0)) throw SimulationError("host bandwidth must be positive");
    }
};

struct CycleBreakdown {
    std::uint64_t operation = 0;
    std::uint64_t weight_load = 0;
    std::uint64_t host_to_offchip = 0;
    std::uint64_t transfer = 0;
    std::uint64_t total() const { return operation + weight_load + host_to_offchip + transfer; }
};

/// Every message instance is either injected or generated on chip; each ends
/// up consumed by a SiteO or absorbed into L1. A multicast injection delivers
/// `rows` copies.
struct MessageLedger {
    std::uint64_t injected = 0;
    std::uint64_t generated = 0;
    std::uint64_t multicast_extra = 0;
    std::uint64_t consumed = 0;
    bool balanced() const { return injected + generated + multicast_extra == consumed; }
};

struct PhaseSpan {
    PhaseKind kind = PhaseKind::Prog;
    int pass = 0;
    int image_fold = -1;
    std::uint64_t start = 0;
    std::uint64_t end = 0;
};

struct CycleSample {
    std::uint64_t cycle = 0;
    int fpu_ops = 0;
    int weight_load = 0;
    int host_to_offchip = 0;
    int transfer = 0;
};

struct LayerTrace {
    LayerSpec layer;
    ArrayGeom geom;
    std::uint64_t cycles = 0;
    std::uint64_t fpu_ops = 0;
    CycleBreakdown breakdown;
    MessageLedger ledger;

    std::uint64_t host_weight = 0;
    std::uint64_t host_image = 0;
    std::uint64_t l1_injected = 0;
    std::uint64_t weights_loaded = 0;
    std::uint64_t multicasts = 0;
    std::uint64_t products = 0;
    std::uint64_t shifts = 0;
    std::uint64_t tstream_copies = 0;
    std::uint64_t c1_sums = 0;
    std::uint64_t c2_sums = 0;
    std::uint64_t c3_outputs = 0;
    std::uint64_t merges = 0;
    std::uint64_t relus = 0;
    std::uint64_t handoff_out = 0;
    std::uint64_t stalls = 0;
    std::size_t l1_peak_bytes = 0;   // largest single-SiteM footprint
    std::uint64_t spill_bytes = 0;

    std::vector<PhaseSpan> phases;
    std::vector<CycleSample> samples;
    /// Generated messages by "OPCODE@destination-role".
    std::map<std::string, std::uint64_t> generated_mix;
    Tensor output; // values held at the output homes when the layer ends

    std::uint64_t on_chip_generated() const { return ledger.generated + l1_injected; }
    double utilization() const {
        return cycles ? static_cast<double>(fpu_ops) / (static_cast<double>(cycles) * geom.sites())
                      : 0.0;
    }
    double seconds() const { return static_cast<double>(cycles) / (geom.clock_ghz * 1e9); }
    double tflops() const {
        const double s = seconds();
        return s > 0 ? 2.0 * static_cast<double>(layer.macs()) / s / 1e12 : 0.0;
    }
};

namespace detail {

struct Flit {
    Message msg;
    Sideband sb;
    int from_site = -1; // producer of a reduction operand, for credit return
    Target from_role = Target::None;
};

struct Operand {
    float value = 0.0f;
    int site = -1;
    Target role = Target::None;
};

struct Slot {
    bool armed = false;
    NextFields next;
    int expected = 0;
    int out_lane = 0;
    int next_lane = 0;
    int emitted = 0;
    int credits = 0; // free entries in the downstream lane
    float acc = 0.0f;
    std::vector<std::deque<Operand>> lanes;

    bool idle() const {
        if (next_lane != 0) return false;
        for (const auto& l : lanes)
            if (!l.empty()) return false;
        return true;
    }
};

struct Site {
    int row = 0, col = 0, sitem = 0;
    std::deque<Flit> top, left, out_right, out_down, out_reduce;
    bool top_deq = false, left_deq = false;

    bool c0_armed = false;
    float weight = 0.0f;
    NextFields c0_next;
    int c0_lane = 0;
    int c0_seq = 0;
    int c0_credits = 0;
    std::map<int, Flit> c0_buf;
    Slot c1, c2, c3;
    std::deque<Flit> oa_ops;

    bool idle() const {
        return top.empty() && left.empty() && out_right.empty() && out_down.empty() &&
               out_reduce.empty() &&
               c0_buf.empty() && oa_ops.empty() && c1.idle() && c2.idle() && c3.idle();
    }
};

struct Pending {
    Flit flit;
    int phase = 0;
    bool program = true;
    Source src = Source::Host;
};

enum class Port { Down, Right, Local };

} // namespace detail

class FabricSim {
public:
    explicit FabricSim(MessageProgram prog, FabricConfig cfg = {})
        : prog_(std::move(prog)), cfg_(cfg) {
        cfg_.validate();
        prog_.geom.validate();
        plan_ = build_fold_plan(prog_.layer, prog_.geom);
        const auto& g = prog_.geom;
        sites_.resize(static_cast<std::size_t>(g.sites()));
        for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) {
                auto& s = site(r, c);
                s.row = r;
                s.col = c;
                s.sitem = g.sitem_of(r, c);
            }
        segs_ = g.sitem_rows();
        hsegs_ = g.sitem_cols();
        hbus_.assign(static_cast<std::size_t>(g.rows),
                     std::vector<std::optional<detail::Flit>>(static_cast<std::size_t>(hsegs_)));
        bus_.assign(static_cast<std::size_t>(g.cols),
                    std::vector<std::optional<detail::Flit>>(static_cast<std::size_t>(segs_)));
        l1_q_.resize(static_cast<std::size_t>(g.sitems()));
        l1_oa_q_.resize(static_cast<std::size_t>(g.sitems()));
        l1_w_.resize(static_cast<std::size_t>(g.sitems()));
        l1_bytes_.assign(static_cast<std::size_t>(g.sitems()), 0);
        remaining_.assign(prog_.phases.size(), 0);
        for (std::size_t i = 0; i < prog_.phases.size(); ++i) {
            const auto& ph = prog_.phases[i];
            if (ph.kind == PhaseKind::Compute)
                compute_phase_[{ph.pass, ph.image_fold}] = static_cast<int>(i);
        }
        host_rate_ = cfg_.host_msgs_per_cycle(g.clock_ghz);
        trace_.layer = prog_.layer;
        trace_.geom = g;
    }

    LayerTrace run() {
        if (prog_.phases.empty()) throw SimulationError("program has no phases");
        start_phase(0);
        advance_phases();
        std::uint64_t idle = 0;
        while (!finished()) {
            progress_ = false;
            step();
            ++cycle_;
            advance_phases();
            idle = progress_ ? 0 : idle + 1;
            if (idle > cfg_.idle_limit) {
                for (const auto& q : l1_oa_q_)
                    if (!q.empty() &&
                        q.front().flit.msg.op != Opcode::Relu &&
                        !ps_store_.count(q.front().flit.sb.key))
                        throw SimulationError("merge references a partial sum missing from L1");
                throw SimulationError("no progress for " + std::to_string(idle) +
                                      " cycles at cycle " + std::to_string(cycle_) +
                                      " (phase " + std::to_string(cur_) + ")");
            }
        }
        if (!trace_.phases.empty()) trace_.phases.back().end = cycle_;
        trace_.cycles = cycle_;
        collect_output();
        return trace_;
    }

private:
    using Flit = detail::Flit;
    using Site = detail::Site;
    using Port = detail::Port;

    detail::Site& site(int r, int c) {
        return sites_[static_cast<std::size_t>(r * prog_.geom.cols + c)];
    }
    detail::Site& site(Address a) { return site(a.row(prog_.geom.cols), a.col(prog_.geom.cols)); }

    Port route(const Site& s, Address dst) const {
        const int cols = prog_.geom.cols;
        const int r = dst.row(cols), c = dst.col(cols);
        if (r == s.row && c == s.col) return Port::Local;
        if (c > s.col && r >= s.row) return Port::Right;
        if (c == s.col && r > s.row) return Port::Down;
        throw SimulationError("message for " + std::to_string(r) + ',' + std::to_string(c) +
                              " cannot be routed from " + std::to_string(s.row) + ',' +
                              std::to_string(s.col) + " on a right/down mesh");
    }

    // ---------------- phase control ----------------

    bool needs_drain(std::size_t i) const {
        const auto k = prog_.phases[i].kind;
        return is_barrier(k) || (i > 0 && prog_.phases[i - 1].kind == PhaseKind::Prog);
    }

    void start_phase(std::size_t i) {
        if (!trace_.phases.empty()) trace_.phases.back().end = cycle_;
        const auto& ph = prog_.phases[i];
        trace_.phases.push_back({ph.kind, ph.pass, ph.image_fold, cycle_, cycle_});
        cur_ = i;
        remaining_[i] = ph.messages.size();
        for (const auto& sm : ph.messages) {
            detail::Pending p{{sm.msg, sm.sb}, static_cast<int>(i), true, sm.source};
            if (sm.source == Source::Host) {
                host_q_.push_back(p);
            } else {
                l1_queue(p.flit)[static_cast<std::size_t>(inject_sitem(p.flit))].push_back(p);
            }
        }
    }

    void advance_phases() {
        while (cur_ + 1 < prog_.phases.size() && remaining_[cur_] == 0 &&
               (!needs_drain(cur_ + 1) || quiescent()))
            start_phase(cur_ + 1);
    }

    bool finished() const {
        return cur_ + 1 == prog_.phases.size() && remaining_[cur_] == 0 && quiescent();
    }

    bool quiescent() const {
        if (!host_q_.empty()) return false;
        for (const auto& q : l1_q_)
            if (!q.empty()) return false;
        for (const auto& q : l1_oa_q_)
            if (!q.empty()) return false;
        for (const auto& q : l1_w_)
            if (!q.empty()) return false;
        for (const auto& col : bus_)
            for (const auto& e : col)
                if (e) return false;
        for (const auto& row : hbus_)
            for (const auto& e : row)
                if (e) return false;
        for (const auto& s : sites_)
            if (!s.idle()) return false;
        return true;
    }

    const FilterFold& pass_fold() const {
        return plan_.filter_folds[static_cast<std::size_t>(prog_.phases[cur_].pass)];
    }

    // ---------------- one cycle ----------------

    void step() {
        cyc_fpu_ = 0;
        cyc_host_ = 0;
        for (auto& s : sites_) s.top_deq = s.left_deq = false;
        for (auto it = sites_.rbegin(); it != sites_.rend(); ++it) process_site(*it);
        advance_bus();
        advance_hbus();
        inject();
        drain_l1();
        account();
    }

    bool fifo_has_space(const std::deque<Flit>& q) const {
        return static_cast<int>(q.size()) < cfg_.fifo_depth;
    }

    void process_site(Site& s) {
        const auto& g = prog_.geom;
        for (Port port : {Port::Down, Port::Right}) {
            std::deque<Flit>* dst = nullptr;
            if (port == Port::Down && s.row + 1 < g.rows) dst = &site(s.row + 1, s.col).top;
            if (port == Port::Right && s.col + 1 < g.cols) dst = &site(s.row, s.col + 1).left;
            std::deque<Flit>* cand = nullptr;
            bool* deq = nullptr;
            if (!s.top_deq && !s.top.empty() && route(s, s.top.front().msg.addr) == port) {
                cand = &s.top;
                deq = &s.top_deq;
            } else if (!s.left_deq && !s.left.empty() && route(s, s.left.front().msg.addr) == port) {
                cand = &s.left;
                deq = &s.left_deq;
            } else {
                auto& out = port == Port::Down ? s.out_down : s.out_right;
                if (!out.empty()) cand = &out;
            }
            if (!cand) continue;
            if (!dst) throw SimulationError("message routed off the array edge");
            if (!fifo_has_space(*dst)) {
                ++trace_.stalls;
                continue;
            }
            dst->push_back(cand->front());
            cand->pop_front();
            if (deq) *deq = true;
            progress_ = true;
        }
        if (!s.top_deq && !s.top.empty() && route(s, s.top.front().msg.addr) == Port::Local &&
            accept(s, s.top.front())) {
            s.top.pop_front();
            s.top_deq = true;
        }
        if (!s.left_deq && !s.left.empty() && route(s, s.left.front().msg.addr) == Port::Local &&
            accept(s, s.left.front())) {
            s.left.pop_front();
            s.left_deq = true;
        }
        if (exec_oa(s) || exec_slot(s, s.c3, Target::C3) || exec_slot(s, s.c2, Target::C2) ||
            exec_slot(s, s.c1, Target::C1) || exec_c0(s)) {
            ++cyc_fpu_;
            ++trace_.fpu_ops;
            progress_ = true;
        }
    }

    int index_of(const Site& s) const { return s.row * prog_.geom.cols + s.col; }

    /// Credit return to the producer of a consumed operand. Modelled as a
    /// dedicated zero-latency wire.
    void return_credit(const detail::Operand& op) {
        if (op.site < 0) return;
        auto& p = sites_[static_cast<std::size_t>(op.site)];
        if (op.role == Target::C0) ++p.c0_credits;
        else ++slot_of(p, op.role).credits;
    }

    detail::Slot& slot_of(Site& s, Target t) {
        switch (t) {
            case Target::C1: return s.c1;
            case Target::C2: return s.c2;
            case Target::C3: return s.c3;
            default: break;
        }
        throw SimulationError("no reduction slot for target");
    }

    bool accept(Site& s, const Flit& f) {
        const auto& sb = f.sb;
        if (f.msg.op == Opcode::Prog) {
            if (sb.target == Target::C0) {
                s.c0_armed = true;
                s.weight = bits_float(f.msg.payload);
                s.c0_next = *f.msg.next();
                s.c0_lane = sb.out_lane;
                s.c0_seq = 0;
                s.c0_credits = cfg_.buffer_depth;
                ++trace_.weights_loaded;
            } else {
                auto& sl = slot_of(s, sb.target);
                if (sb.expected < 1) throw SimulationError("reduction armed with no operands");
                sl = detail::Slot{};
                sl.armed = true;
                sl.next = *f.msg.next();
                sl.expected = sb.expected;
                sl.out_lane = sb.out_lane;
                sl.credits = cfg_.buffer_depth;
                sl.lanes.resize(static_cast<std::size_t>(sb.expected));
            }
        } else if (sb.target == Target::C0) {
            if (!s.c0_armed) throw SimulationError("image operand reached an unprogrammed SiteO");
            if (s.c0_buf.count(sb.seq)) throw SimulationError("duplicate image operand");
            if (static_cast<int>(s.c0_buf.size()) >= cfg_.buffer_depth && sb.seq != s.c0_seq)
                return false;
            s.c0_buf.emplace(sb.seq, f);
        } else if (sb.target == Target::Oa) {
            if (static_cast<int>(s.oa_ops.size()) >= cfg_.buffer_depth) return false;
            s.oa_ops.push_back(f);
        } else {
            auto& sl = slot_of(s, sb.target);
            if (!sl.armed) throw SimulationError("partial sum reached an unprogrammed SiteO");
            if (sb.lane < 0 || sb.lane >= sl.expected)
                throw SimulationError("partial sum lane out of range");
            auto& lane = sl.lanes[static_cast<std::size_t>(sb.lane)];
            if (static_cast<int>(lane.size()) >= cfg_.buffer_depth)
                throw SimulationError("reduction lane overrun despite credits");
            lane.push_back({bits_float(f.msg.payload), f.from_site, f.from_role});
        }
        ++trace_.ledger.consumed;
        progress_ = true;
        return true;
    }

    /// Room for `n` emissions towards `dst` from `s`.
    bool can_emit(Site& s, const Flit& f) {
        switch (route(s, f.msg.addr)) {
            case Port::Right: return static_cast<int>(s.out_right.size()) < cfg_.emit_depth;
            case Port::Down: return static_cast<int>(s.out_down.size()) < cfg_.emit_depth;
            case Port::Local: return slot_of(s, f.sb.target).armed;
        }
        return false;
    }

    void tally(const Message& m, std::string_view dest) {
        ++trace_.generated_mix[std::string(opcode_name(m.op)) + "@" + std::string(dest)];
    }

    void emit(Site& s, const Flit& f) {
        ++trace_.ledger.generated;
        switch (route(s, f.msg.addr)) {
            case Port::Right: s.out_right.push_back(f); break;
            case Port::Down: s.out_down.push_back(f); break;
            case Port::Local:
                if (!accept(s, f)) throw SimulationError("local emission rejected");
                break;
        }
    }

    bool l1_write_space(const Site& s) const {
        return static_cast<int>(l1_w_[static_cast<std::size_t>(s.sitem)].size()) <
               cfg_.l1_write_depth;
    }

    void emit_l1(const Site& s, const Flit& f) {
        ++trace_.ledger.generated;
        l1_w_[static_cast<std::size_t>(s.sitem)].push_back(f);
    }

    bool exec_oa(Site& s) {
        if (s.oa_ops.empty()) return false;
        const Flit& f = s.oa_ops.front();
        const int key = f.sb.key;
        const bool handoff = f.msg.op == Opcode::Relu && f.msg.next()->op.has_value();
        if (handoff && !l1_write_space(s)) return false;
        const float v = bits_float(f.msg.payload);
        auto it = oa_store_.find(key);
        switch (f.msg.op) {
            case Opcode::Update:
                if (it == oa_store_.end()) {
                    oa_store_.emplace(key, v);
                    store_bytes(s.sitem, 4);
                } else {
                    it->second = v;
                }
                ++trace_.merges;
                break;
            case Opcode::AAdd:
            case Opcode::AAdds:
                if (it == oa_store_.end()) throw SimulationError("accumulate before UPDATE at output home");
                it->second += v;
                ++trace_.merges;
                break;
            case Opcode::Relu: {
                if (it == oa_store_.end()) throw SimulationError("RELU on an empty output home");
                it->second = relu(it->second);
                ++trace_.relus;
                if (handoff) {
                    const auto& n = *f.msg.next();
                    Flit out;
                    out.msg.op = *n.op;
                    out.msg.addr = n.addr;
                    out.msg.payload = float_bits(it->second);
                    out.msg.tail = carries_pattern(*n.op) ? Tail{f.sb.out_pattern} : Tail{NextFields{}};
                    out.sb.key = key;
                    tally(out.msg, "C0");
                    emit_l1(s, out);
                    ++trace_.handoff_out;
                }
                break;
            }
            default:
                throw SimulationError(std::string("unsupported opcode at output home: ") +
                                      std::string(opcode_name(f.msg.op)));
        }
        s.oa_ops.pop_front();
        return true;
    }

    bool exec_slot(Site& s, detail::Slot& sl, Target role) {
        if (!sl.armed) return false;
        auto& lane = sl.lanes[static_cast<std::size_t>(sl.next_lane)];
        if (lane.empty()) return false;
        const bool last = sl.next_lane + 1 == sl.expected;
        Flit out;
        if (last) {
            if (role == Target::C3) {
                if (!l1_write_space(s)) return false;
            } else {
                out.msg = {Opcode::AAdds, sl.next.addr, 0, NextFields{}};
                out.sb.target = role == Target::C1 ? Target::C2 : Target::C3;
                out.sb.lane = sl.out_lane;
                out.from_site = index_of(s);
                out.from_role = role;
                if (sl.credits == 0) return false;
                if (route(s, out.msg.addr) != Port::Local &&
                    static_cast<int>(s.out_reduce.size()) >= cfg_.emit_depth)
                    return false;
            }
        }
        const auto operand = lane.front();
        sl.acc += operand.value;
        lane.pop_front();
        return_credit(operand);
        if (!last) {
            ++sl.next_lane;
            return true;
        }
        if (role == Target::C3) {
            const auto& l = prog_.layer;
            const int P = l.out_p();
            const int f = pass_fold().filter_lo + s.row;
            const int i = sl.emitted;
            const int q = i / P, p = P - 1 - i % P;
            if (q >= l.out_q()) throw SimulationError("C3 produced more outputs than the layer has");
            const auto oa = offload_address(l, prog_.geom, f, p, q);
            out.msg = {*sl.next.op, oa.addr, float_bits(sl.acc), NextFields{}};
            out.sb.target = Target::Oa;
            out.sb.slot = oa.slot;
            out.sb.key = output_key(l, f, p, q);
            tally(out.msg, "OA");
            emit_l1(s, out);
            ++trace_.c3_outputs;
        } else {
            out.msg.payload = float_bits(sl.acc);
            tally(out.msg, role == Target::C1 ? "C2" : "C3");
            --sl.credits;
            ++trace_.ledger.generated;
            if (route(s, out.msg.addr) == Port::Local) {
                if (!accept(s, out)) throw SimulationError("local emission rejected");
            } else {
                s.out_reduce.push_back(out);
            }
            ++(role == Target::C1 ? trace_.c1_sums : trace_.c2_sums);
        }
        ++sl.emitted;
        sl.acc = 0.0f;
        sl.next_lane = 0;
        return true;
    }

    bool exec_c0(Site& s) {
        if (!s.c0_armed) return false;
        auto it = s.c0_buf.find(s.c0_seq);
        if (it == s.c0_buf.end()) return false;
        const Flit& in = it->second;
        const PatternBits pb = *in.msg.pattern();
        const auto& l = prog_.layer;
        const int cols = prog_.geom.cols;

        Flit prod;
        prod.msg = {*s.c0_next.op, s.c0_next.addr, 0, NextFields{}};
        prod.sb.target = Target::C1;
        prod.sb.lane = s.c0_lane;
        prod.from_site = index_of(s);
        prod.from_role = Target::C0;
        const bool fwd = pb.shift && pb.group_offset > 0;
        const bool stage = pb.tstream && s.row == 0;
        const int need = fwd ? 2 : 1;
        if (s.c0_credits == 0) return false;
        if (cfg_.emit_depth - static_cast<int>(s.out_right.size()) < need) return false;
        if (stage && !l1_write_space(s)) return false;

        prod.msg.payload = float_bits(s.weight * bits_float(in.msg.payload));
        --s.c0_credits;
        tally(prod.msg, "C1");
        emit(s, prod);
        ++trace_.products;
        if (fwd) {
            Flit sh;
            PatternBits np = pb;
            np.tstream = false;
            np.group_offset = pb.group_offset - 1;
            sh.msg = {Opcode::AMuls, Address::at(s.row, s.col + pb.shift_step, cols), in.msg.payload, np};
            sh.sb.target = Target::C0;
            sh.sb.seq = in.sb.seq + 1;
            tally(sh.msg, "SiteO_Next");
            emit(s, sh);
            ++trace_.shifts;
        }
        if (stage) {
            const auto& roles = plan_.roles;
            const int P = l.out_p();
            const int g = (s.col % roles.block_width) / (roles.R + 1);
            const int q = in.sb.seq / P;
            Flit st;
            PatternBits np = pb;
            np.tstream = g + 2 * l.stride <= l.S - 1 && q + 2 < l.out_q();
            st.msg = {Opcode::AMuls, Address::at(0, s.col + l.stride * (roles.R + 1), cols),
                      in.msg.payload, np};
            st.sb = in.sb;
            st.sb.seq = in.sb.seq + P;
            tally(st.msg, "Group_Next");
            emit_l1(s, st);
            ++trace_.tstream_copies;
        }
        s.c0_buf.erase(it);
        ++s.c0_seq;
        return true;
    }

    // ---------------- multicast bus ----------------

    void advance_bus() {
        const auto& g = prog_.geom;
        std::vector<char> granted(static_cast<std::size_t>(g.sitems()), 0);
        for (int seg = segs_ - 1; seg >= 0; --seg) {
            for (int c = 0; c < g.cols; ++c) {
                auto& e = bus_[static_cast<std::size_t>(c)][static_cast<std::size_t>(seg)];
                if (!e) continue;
                const int lo = seg * ArrayGeom::kSiteMEdge;
                const int hi = std::min(e->sb.rows, lo + ArrayGeom::kSiteMEdge);
                const bool final_seg = hi >= e->sb.rows;
                if (!final_seg && bus_[static_cast<std::size_t>(c)][static_cast<std::size_t>(seg + 1)])
                    continue;
                auto& grant = granted[static_cast<std::size_t>(g.sitem_of(lo, c))];
                if (grant) continue;
                bool room = true;
                for (int r = lo; r < hi; ++r) room = room && fifo_has_space(site(r, c).top);
                if (!room) {
                    ++trace_.stalls;
                    continue;
                }
                grant = 1;
                for (int r = lo; r < hi; ++r) {
                    Flit copy = *e;
                    copy.msg.addr = Address::at(r, c, g.cols);
                    site(r, c).top.push_back(copy);
                }
                if (!final_seg)
                    bus_[static_cast<std::size_t>(c)][static_cast<std::size_t>(seg + 1)] = std::move(e);
                e.reset();
                progress_ = true;
            }
        }
    }

    // ---------------- reduce bus ----------------

    void advance_hbus() {
        const auto& g = prog_.geom;
        const int E = ArrayGeom::kSiteMEdge;
        for (int r = 0; r < g.rows; ++r) {
            auto& row = hbus_[static_cast<std::size_t>(r)];
            for (int seg = hsegs_ - 1; seg >= 0; --seg) {
                auto& e = row[static_cast<std::size_t>(seg)];
                if (!e) continue;
                const int dc = e->msg.addr.col(g.cols);
                if (dc / E == seg) {
                    if (!accept(site(r, dc), *e)) throw SimulationError("reduce bus delivery rejected");
                    e.reset();
                    progress_ = true;
                } else if (!row[static_cast<std::size_t>(seg + 1)]) {
                    row[static_cast<std::size_t>(seg + 1)] = std::move(e);
                    e.reset();
                    progress_ = true;
                }
            }
            for (int c = 0; c < g.cols; ++c) {
                auto& s = site(r, c);
                auto& slot = row[static_cast<std::size_t>(c / E)];
                if (s.out_reduce.empty() || slot) continue;
                slot = s.out_reduce.front();
                s.out_reduce.pop_front();
                progress_ = true;
            }
        }
    }

    // ---------------- injection and L1 ----------------

    /// OA-bound words and image operands use separate L1 read queues so a
    /// merge waiting for its partial sum never blocks the operands feeding it.
    std::vector<std::deque<detail::Pending>>& l1_queue(const Flit& f) {
        return f.sb.target == Target::Oa ? l1_oa_q_ : l1_q_;
    }

    int inject_sitem(const Flit& f) const {
        const int cols = prog_.geom.cols;
        const int r = f.sb.rows > 0 ? 0 : f.msg.addr.row(cols);
        return prog_.geom.sitem_of(r, f.msg.addr.col(cols));
    }

    bool try_inject(detail::Pending& p) {
        auto& f = p.flit;
        const int cols = prog_.geom.cols;
        const int c = f.msg.addr.col(cols);
        if (f.sb.rows > 0) {
            auto& head = bus_[static_cast<std::size_t>(c)][0];
            if (head) return false;
            head = f;
            ++trace_.multicasts;
            trace_.ledger.multicast_extra += static_cast<std::uint64_t>(f.sb.rows - 1);
        } else {
            auto& dst = site(f.msg.addr).top;
            if (!fifo_has_space(dst)) return false;
            if (f.sb.target == Target::Oa && f.msg.op != Opcode::Relu) {
                auto it = ps_store_.find(f.sb.key);
                if (it == ps_store_.end()) return false; // not produced yet
                if (it->second.op != f.msg.op)
                    throw SimulationError("merge opcode disagrees with the stored partial sum");
                f.msg.payload = it->second.payload;
                ps_store_.erase(it);
                store_bytes(site(f.msg.addr).sitem, -4);
            }
            dst.push_back(f);
        }
        if (!p.program) store_bytes(inject_sitem(f), -4);
        if (p.program) --remaining_[static_cast<std::size_t>(p.phase)];
        ++trace_.ledger.injected;
        if (p.src == Source::Host) {
            ++cyc_host_;
            ++(f.msg.op == Opcode::Prog ? trace_.host_weight : trace_.host_image);
        } else {
            ++trace_.l1_injected;
        }
        progress_ = true;
        return true;
    }

    void inject() {
        host_budget_ = std::min(host_budget_ + host_rate_, host_rate_ + 1.0);
        while (host_budget_ >= 1.0 && !host_q_.empty() &&
               host_q_.front().phase <= static_cast<int>(cur_) && try_inject(host_q_.front())) {
            host_q_.pop_front();
            host_budget_ -= 1.0;
        }
        for (std::size_t m = 0; m < l1_q_.size(); ++m) {
            int budget = cfg_.l1_port_msgs;
            for (auto* q : {&l1_q_[m], &l1_oa_q_[m]}) {
                while (budget > 0 && !q->empty() && q->front().phase <= static_cast<int>(cur_) &&
                       try_inject(q->front())) {
                    q->pop_front();
                    --budget;
                }
            }
        }
    }

    void store_bytes(int sitem, long long delta) {
        auto& b = l1_bytes_[static_cast<std::size_t>(sitem)];
        b = static_cast<std::size_t>(static_cast<long long>(b) + delta);
        if (delta > 0 && b > cfg_.l1_bytes_per_sitem) trace_.spill_bytes += static_cast<std::uint64_t>(delta);
        trace_.l1_peak_bytes = std::max(trace_.l1_peak_bytes, b);
    }

    void drain_l1() {
        const int cols = prog_.geom.cols;
        for (std::size_t m = 0; m < l1_w_.size(); ++m) {
            auto& q = l1_w_[m];
            for (int n = 0; n < cfg_.l1_port_msgs && !q.empty(); ++n) {
                Flit f = q.front();
                q.pop_front();
                ++trace_.ledger.consumed;
                progress_ = true;
                if (f.sb.target == Target::Oa) {
                    ps_store_[f.sb.key] = f.msg;
                    store_bytes(site(f.msg.addr).sitem, 4);
                } else if (f.sb.target == Target::C0) {
                    const int P = prog_.layer.out_p();
                    const auto it = compute_phase_.find({prog_.phases[cur_].pass, f.sb.seq / P});
                    if (it == compute_phase_.end()) throw SimulationError("staged operand has no image fold");
                    detail::Pending p{f, it->second, false, Source::L1};
                    const int sm = prog_.geom.sitem_of(0, f.msg.addr.col(cols));
                    l1_q_[static_cast<std::size_t>(sm)].push_back(p);
                    store_bytes(sm, 4);
                } else {
                    handoff_.push_back(f.msg);
                    store_bytes(static_cast<int>(m), 4);
                }
            }
        }
    }

    void account() {
        int prog = 0, other = 0;
        auto count = [&](const std::deque<Flit>& q) {
            for (const auto& f : q) (f.msg.op == Opcode::Prog ? prog : other)++;
        };
        for (const auto& s : sites_) {
            count(s.top);
            count(s.left);
            count(s.out_right);
            count(s.out_down);
            count(s.out_reduce);
        }
        for (const auto& col : bus_)
            for (const auto& e : col)
                if (e) ++other;
        for (const auto& row : hbus_)
            for (const auto& e : row)
                if (e) ++other;
        for (const auto& q : l1_w_) other += static_cast<int>(q.size());
        auto& b = trace_.breakdown;
        b.operation += static_cast<std::uint64_t>(cyc_fpu_);
        b.weight_load += static_cast<std::uint64_t>(prog);
        b.host_to_offchip += static_cast<std::uint64_t>(cyc_host_);
        b.transfer += static_cast<std::uint64_t>(other);
        if (cfg_.cycle_log) trace_.samples.push_back({cycle_, cyc_fpu_, prog, cyc_host_, other});
    }

    void collect_output() {
        const auto& l = prog_.layer;
        trace_.output = Tensor(l.out_p(), l.out_q(), l.Nf);
        for (int f = 0; f < l.Nf; ++f)
            for (int p = 0; p < l.out_p(); ++p)
                for (int q = 0; q < l.out_q(); ++q) {
                    auto it = oa_store_.find(output_key(l, f, p, q));
                    if (it == oa_store_.end()) throw SimulationError("output element never written");
                    trace_.output.at(p, q, f) = it->second;
                }
    }

    MessageProgram prog_;
    FabricConfig cfg_;
    FoldPlan plan_;
    std::vector<Site> sites_;
    int segs_ = 0;
    int hsegs_ = 0;
    std::vector<std::vector<std::optional<Flit>>> hbus_;
    std::vector<std::vector<std::optional<Flit>>> bus_;
    std::deque<detail::Pending> host_q_;
    std::vector<std::deque<detail::Pending>> l1_q_;
    std::vector<std::deque<detail::Pending>> l1_oa_q_;
    std::vector<std::deque<Flit>> l1_w_;
    std::vector<std::size_t> l1_bytes_;
    std::map<std::pair<int, int>, int> compute_phase_;
    std::vector<std::size_t> remaining_;
    std::unordered_map<int, Message> ps_store_;
    std::unordered_map<int, float> oa_store_;
    std::vector<Message> handoff_;
    double host_rate_ = 0.0;
    double host_budget_ = 0.0;
    std::size_t cur_ = 0;
    std::uint64_t cycle_ = 0;
    bool progress_ = false;
    int cyc_fpu_ = 0;
    int cyc_host_ = 0;
    LayerTrace trace_;

public:
    /// Messages emitted by the handoff, ready for the next layer.
    const std::vector<Message>& handoff() const { return handoff_; }
};

inline LayerTrace simulate_layer(const MessageProgram& prog, const FabricConfig& cfg = {}) {
    return FabricSim(prog, cfg).run();
}

// ---------------- trace output ----------------

inline nlohmann::json trace_to_json(const LayerTrace& t, bool with_output = false) {
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& p : t.phases)
        phases.push_back({{"kind", std::string(to_string(p.kind))},
                          {"pass", p.pass},
                          {"image_fold", p.image_fold},
                          {"start", p.start},
                          {"end", p.end}});
    nlohmann::json j = {
        {"layer", layer_to_json(t.layer)},
        {"array", {{"rows", t.geom.rows}, {"cols", t.geom.cols}, {"clock_ghz", t.geom.clock_ghz}}},
        {"cycles", t.cycles},
        {"fpu_ops", t.fpu_ops},
        {"utilization", t.utilization()},
        {"seconds", t.seconds()},
        {"tflops", t.tflops()},
        {"cycle_breakdown",
         {{"operation", t.breakdown.operation},
          {"weight_load", t.breakdown.weight_load},
          {"host_to_offchip", t.breakdown.host_to_offchip},
          {"transfer", t.breakdown.transfer}}},
        {"msg_counts",
         {{"host_weight", t.host_weight},
          {"host_image", t.host_image},
          {"on_chip_generated", t.on_chip_generated()}}},
        {"events",
         {{"weights_loaded", t.weights_loaded},
          {"multicasts", t.multicasts},
          {"products", t.products},
          {"shifts", t.shifts},
          {"tstream_copies", t.tstream_copies},
          {"c1_sums", t.c1_sums},
          {"c2_sums", t.c2_sums},
          {"c3_outputs", t.c3_outputs},
          {"merges", t.merges},
          {"relus", t.relus},
          {"handoff_out", t.handoff_out},
          {"l1_injected", t.l1_injected},
          {"stalls", t.stalls}}},
        {"generated_mix", t.generated_mix},
        {"ledger",
         {{"injected", t.ledger.injected},
          {"generated", t.ledger.generated},
          {"multicast_extra", t.ledger.multicast_extra},
          {"consumed", t.ledger.consumed},
          {"balanced", t.ledger.balanced()}}},
        {"l1_peak_bytes", t.l1_peak_bytes},
        {"spill_bytes", t.spill_bytes},
        {"phases", phases},
    };
    if (with_output) j["output"] = {{"shape", {t.output.d0, t.output.d1, t.output.d2}}, {"values", t.output.values}};
    return j;
}

inline void write_cycle_csv(std::ostream& os, const LayerTrace& t) {
    os << "cycle,fpu_ops,weight_load,host_to_offchip,transfer\n";
    for (const auto& s : t.samples)
        os << s.cycle << ',' << s.fpu_ops << ',' << s.weight_load << ',' << s.host_to_offchip << ','
           << s.transfer << '\n';
}

} // namespace mavec
