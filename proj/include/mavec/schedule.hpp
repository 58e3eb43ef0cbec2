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
 * @file schedule.hpp
 * @brief Turns a fold plan plus weights and input into a MessageProgram.
 *
 * Per filter fold (pass) the program holds a prog phase, one compute phase
 * per image fold and a merge phase that folds the pass's PS tile into the
 * layer output. A handoff phase closes the layer.
 *
 * Image operands are streamed in descending output row order inside an
 * image fold, so the in-group forward of a pixel always moves it to the
 * right (k -> k + stride) and the whole fabric only carries right/down
 * traffic.
 */
#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "mavec/fold_mapper.hpp"
#include "mavec/program.hpp"
#include "mavec/reference.hpp"

namespace mavec {

/// Output home of one element: a SiteO address plus the L1 slot behind it.
/// The address alone repeats once P*Q or Nf outgrow the array.
struct OffloadAddress {
    Address addr;
    int slot = 0;
    friend bool operator==(const OffloadAddress&, const OffloadAddress&) = default;
};

inline OffloadAddress offload_address(const LayerSpec& l, const ArrayGeom& g, int f, int p, int q) {
    const int pq = l.out_p() * l.out_q();
    const int n = p * l.out_q() + q;
    const int per_band = (pq + g.cols - 1) / g.cols;
    return {Address::at(f % g.rows, n % g.cols, g.cols), (f / g.rows) * per_band + n / g.cols};
}

inline int output_key(const LayerSpec& l, int f, int p, int q) {
    return (f * l.out_p() + p) * l.out_q() + q;
}

/// Successor column of a role inside its channel block.
inline int next_column(Role role, int col, const ColumnRoleMap& roles) {
    const int within = col % roles.block_width;
    const int block = col / roles.block_width;
    switch (role) {
        case Role::C0: return roles.c1_col(block, within / (roles.R + 1));
        case Role::C1: return roles.c2_col(block);
        case Role::C2: return roles.c3_col;
        case Role::C3: break;
    }
    throw ScheduleError("C3 has no successor column inside the array");
}

inline Address next_address(Role role, int row, int col, const ColumnRoleMap& roles) {
    return Address::at(row, next_column(role, col, roles), roles.cols);
}

inline Opcode merge_opcode(FoldPosition pos) {
    switch (pos) {
        case FoldPosition::First: return Opcode::Update;
        case FoldPosition::Rest: return Opcode::AAdds;
        case FoldPosition::Last: return Opcode::AAdd;
    }
    return Opcode::AAdd;
}

/// Remaining in-group forwards of a pixel that enters SiteO k at output row p.
inline int remaining_forwards(const LayerSpec& l, int k, int p) {
    if (l.R <= 1) return 0;
    return std::min((l.R - 1 - k) / l.stride, p);
}

/// Tail of an image operand. Zero for pointwise layers.
inline PatternBits image_pattern(const LayerSpec& l, int group, int k, int p, int q) {
    if (l.R * l.S == 1) return {};
    PatternBits pb;
    pb.shift = l.R > 1;
    pb.shift_step = l.stride;
    pb.group_offset = remaining_forwards(l, k, p);
    pb.tstream = group + l.stride <= l.S - 1 && q + 1 < l.out_q();
    return pb;
}

// ---------------------------------------------------------------------------

/// Prog messages for one pass, row-major. Weight payloads are float bits when
/// a filter bank is given and the flattened filter index otherwise.
inline std::vector<ScheduledMessage> gen_prog_phase(const FoldPlan& plan, const FilterFold& ff,
                                                    const FilterBank* weights) {
    const auto& roles = plan.roles;
    const auto& l = plan.layer;
    const int cols = plan.geom.cols;
    const Opcode out_op = merge_opcode(plan.position(ff));
    std::vector<ScheduledMessage> msgs;
    for (int row = 0; row < ff.rows_used(); ++row) {
        const int f = ff.filter_lo + row;
        for (int col = 0; col < cols; ++col) {
            const int block = col / roles.block_width;
            const bool in_block = block < ff.channels();
            const int within = col % roles.block_width;
            const int g = within / (roles.R + 1);
            const int k = within % (roles.R + 1);
            auto prog = [&](std::uint32_t payload, NextFields next, Target t, int expected,
                            int out_lane) {
                ScheduledMessage sm;
                sm.msg = {Opcode::Prog, Address::at(row, col, cols), payload, next};
                sm.source = Source::Host;
                sm.sb.target = t;
                sm.sb.expected = expected;
                sm.sb.out_lane = out_lane;
                msgs.push_back(sm);
            };
            if (in_block && k < roles.R) {
                const int c = ff.channel_lo + block;
                const int s = roles.kernel_col_of_group(g);
                const std::uint32_t payload =
                    weights ? float_bits(weights->at(f, c, k, s))
                            : static_cast<std::uint32_t>(((f * l.C + c) * l.R + k) * l.S + s);
                prog(payload, {Opcode::AAdds, next_address(Role::C0, row, col, roles)}, Target::C0,
                     0, k);
            }
            if (in_block && k == roles.R)
                prog(0, {Opcode::AAdds, next_address(Role::C1, row, col, roles)}, Target::C1, l.R,
                     g);
            if (in_block && within == roles.block_width - 1)
                prog(0, {Opcode::AAdds, next_address(Role::C2, row, col, roles)}, Target::C2, l.S,
                     block);
            if (col == roles.c3_col) {
                const auto oa = offload_address(l, plan.geom, f, 0, 0);
                prog(0, {out_op, oa.addr}, Target::C3, ff.channels(), 0);
            }
        }
    }
    return msgs;
}

/// Image operands of one image fold. Staged columns (those already seen by
/// the previous fold) are left out: the fabric re-injects them from L1.
inline std::vector<ScheduledMessage> gen_compute_phase(const FoldPlan& plan, const FilterFold& ff,
                                                       int q, const Tensor& input, bool first_layer) {
    const auto& l = plan.layer;
    const auto& roles = plan.roles;
    const int P = l.out_p();
    const int st = l.stride;
    const Source src = first_layer && ff.band == 0 ? Source::Host : Source::L1;
    std::vector<ScheduledMessage> msgs;
    for (int j = 0; j < P; ++j) {
        const int p = P - 1 - j;
        for (int b = 0; b < ff.channels(); ++b) {
            const int c = ff.channel_lo + b;
            for (int g = 0; g < l.S; ++g) {
                if (q > 0 && g >= st) continue; // staged from the previous fold
                const int s = roles.kernel_col_of_group(g);
                for (int k = 0; k < l.R; ++k) {
                    if (j > 0 && k >= st) continue; // arrives by in-group forward
                    ScheduledMessage sm;
                    const float v = detail::padded(input, l, c, p * st + k, q * st + s);
                    sm.msg = {Opcode::AMuls, Address::at(0, roles.c0_col(b, g, k), plan.geom.cols),
                              float_bits(v), image_pattern(l, g, k, p, q)};
                    sm.source = src;
                    sm.sb.target = Target::C0;
                    sm.sb.seq = q * P + j;
                    sm.sb.rows = ff.rows_used();
                    msgs.push_back(sm);
                }
            }
        }
    }
    return msgs;
}

/// Streams the PS tile of one pass from L1 into the output homes, in the
/// order C3 produces it (image fold, then descending output row, then filter).
/// Payloads are filled in by the fabric from the stored tile.
inline std::vector<ScheduledMessage> gen_merge_phase(const FoldPlan& plan, const FilterFold& ff) {
    const auto& l = plan.layer;
    const Opcode op = merge_opcode(plan.position(ff));
    std::vector<ScheduledMessage> msgs;
    for (int q = 0; q < l.out_q(); ++q)
        for (int p = l.out_p() - 1; p >= 0; --p)
            for (int f = ff.filter_lo; f < ff.filter_hi; ++f) {
                const auto oa = offload_address(l, plan.geom, f, p, q);
                ScheduledMessage sm;
                sm.msg = {op, oa.addr, 0, NextFields{}};
                sm.source = Source::L1;
                sm.sb.target = Target::Oa;
                sm.sb.slot = oa.slot;
                sm.sb.key = output_key(l, f, p, q);
                msgs.push_back(sm);
            }
    return msgs;
}

/// Entry point of channel c in the next layer.
inline Address next_layer_entry(NextKind next, const std::optional<LayerSpec>& nl, int c,
                                const ArrayGeom& g) {
    if (next == NextKind::Conv || next == NextKind::Pointwise) {
        const auto roles = column_roles(g, nl->R, nl->S);
        return Address::at(0, roles.c0_col(c % roles.channels_per_fold, 0, 0), g.cols);
    }
    return Address::at(0, c % g.cols, g.cols);
}

inline NextKind next_kind_of(const std::optional<LayerSpec>& nl) {
    if (!nl) return NextKind::None;
    if (nl->kind == LayerKind::MaxPool) return NextKind::MaxPool;
    return nl->R * nl->S > 1 ? NextKind::Conv : NextKind::Pointwise;
}

inline std::vector<ScheduledMessage> gen_handoff_phase(const FoldPlan& plan,
                                                       const std::optional<LayerSpec>& next_layer) {
    const auto& l = plan.layer;
    const NextKind nk = next_kind_of(next_layer);
    PatternBits out_pattern;
    if (nk == NextKind::Conv) {
        out_pattern.shift = next_layer->R > 1;
        out_pattern.tstream = next_layer->S > 1;
        out_pattern.shift_step = next_layer->stride;
    }
    std::vector<ScheduledMessage> msgs;
    for (int f = 0; f < l.Nf; ++f)
        for (int p = 0; p < l.out_p(); ++p)
            for (int q = 0; q < l.out_q(); ++q) {
                const auto oa = offload_address(l, plan.geom, f, p, q);
                NextFields next;
                if (nk != NextKind::None) {
                    next.op = nk == NextKind::MaxPool ? Opcode::Cmp : Opcode::AMuls;
                    next.addr = next_layer_entry(nk, next_layer, f, plan.geom);
                }
                ScheduledMessage sm;
                sm.msg = {Opcode::Relu, oa.addr, 0, next};
                sm.source = Source::L1;
                sm.sb.target = Target::Oa;
                sm.sb.slot = oa.slot;
                sm.sb.key = output_key(l, f, p, q);
                sm.sb.out_pattern = out_pattern;
                msgs.push_back(sm);
            }
    // Slot-major, then row-major over the array: consecutive words go to
    // different output homes.
    std::stable_sort(msgs.begin(), msgs.end(), [](const auto& a, const auto& b) {
        return a.sb.slot != b.sb.slot ? a.sb.slot < b.sb.slot : a.msg.addr.raw() < b.msg.addr.raw();
    });
    return msgs;
}

struct ProgramOptions {
    bool first_layer = true;
    std::optional<LayerSpec> next_layer;
};

inline MessageProgram generate_program(const LayerSpec& layer, const ArrayGeom& geom,
                                       const FilterBank& weights, const Tensor& input,
                                       const ProgramOptions& opts = {}) {
    if (layer.kind == LayerKind::MaxPool)
        throw ScheduleError("max-pool layers are evaluated by CMP handoff, not scheduled");
    detail::check_conv_dims(input, weights, layer);
    const auto plan = build_fold_plan(layer, geom);
    MessageProgram prog;
    prog.layer = layer;
    prog.geom = geom;
    prog.first_layer = opts.first_layer;
    prog.next = next_kind_of(opts.next_layer);
    for (std::size_t i = 0; i < plan.filter_folds.size(); ++i) {
        const auto& ff = plan.filter_folds[i];
        const int pass = static_cast<int>(i);
        prog.phases.push_back({PhaseKind::Prog, pass, -1, gen_prog_phase(plan, ff, &weights)});
        for (int q = 0; q < layer.out_q(); ++q)
            prog.phases.push_back(
                {PhaseKind::Compute, pass, q, gen_compute_phase(plan, ff, q, input, opts.first_layer)});
        prog.phases.push_back({PhaseKind::Merge, pass, -1, gen_merge_phase(plan, ff)});
    }
    if (layer.activation == Activation::Relu)
        prog.phases.push_back({PhaseKind::Handoff, -1, -1, gen_handoff_phase(plan, opts.next_layer)});
    return prog;
}

} // namespace mavec
