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
 * @file fold_mapper.hpp
 * @brief Decomposition of a conv/FC layer into Filter Folds, Image Blocks,
 *        Image Folds and partial-sum tiles, plus the reduction column roles.
 *
 * Column layout of one channel block (R=3, S=3, block width (R+1)*S = 12):
 * ```
 *   col:  0  1  2 | 3 | 4  5  6 | 7 | 8  9 10 | 11
 *         C0 C0 C0|C1 | C0 C0 C0|C1 | C0 C0 C0| C1+C2
 *         s=2     |   | s=1     |   | s=0     |
 * ```
 * Each C0 group holds one kernel column s (groups run s = S-1 .. 0 left to
 * right); position k inside the group holds kernel row r = k. Channel
 * blocks repeat floor(Cp / block width) times; column Cp-1 is the C3
 * (multi-channel) column.
 */
#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mavec/error.hpp"
#include "mavec/layer.hpp"

namespace mavec {

inline std::pair<int, int> pad_extents(const LayerSpec& layer) {
    return {layer.padded_x(), layer.padded_y()};
}

enum class Role { C0, C1, C2, C3 };

struct C0Group {
    int block = 0;
    int group = 0;
    int first_col = 0;
};

struct ColumnRoleMap {
    int R = 1, S = 1, cols = 1;
    int block_width = 2;
    int channels_per_fold = 1;
    std::vector<C0Group> c0_groups;
    std::vector<int> c1_cols;
    std::vector<int> c2_cols;
    int c3_col = 0;

    int block_base(int block) const { return block * block_width; }
    int c0_col(int block, int group, int k) const {
        return block_base(block) + group * (R + 1) + k;
    }
    int c1_col(int block, int group) const { return c0_col(block, group, R); }
    int c2_col(int block) const { return block_base(block) + block_width - 1; }
    int kernel_col_of_group(int group) const { return S - 1 - group; }

    /// Number of columns that carry at least one role.
    int mapped_columns(int channels) const {
        int used = channels * block_width;
        return used + (c3_col >= used ? 1 : 0);
    }
};

inline ColumnRoleMap column_roles(const ArrayGeom& geom, int R, int S) {
    if (R < 1 || S < 1) throw MappingError("kernel extents must be positive");
    const int width = (R + 1) * S;
    if (width > geom.cols) {
        std::ostringstream os;
        os << "kernel " << R << 'x' << S << " needs a channel block of " << width
           << " columns but the array has only " << geom.cols;
        throw MappingError(os.str());
    }
    ColumnRoleMap m;
    m.R = R;
    m.S = S;
    m.cols = geom.cols;
    m.block_width = width;
    m.channels_per_fold = geom.cols / width;
    for (int b = 0; b < m.channels_per_fold; ++b) {
        for (int g = 0; g < S; ++g) {
            m.c0_groups.push_back({b, g, m.c0_col(b, g, 0)});
            m.c1_cols.push_back(m.c1_col(b, g));
        }
        m.c2_cols.push_back(m.c2_col(b));
    }
    m.c3_col = geom.cols - 1;
    return m;
}

/// Kernel coordinate held by one C0 SiteO.
struct WeightSlot {
    int filter = 0;
    int channel = 0;
    int r = 0;
    int s = 0;
};

struct FilterFold {
    int id = 0;      // 1-based, execution order
    int band = 0;    // filter band index
    int group = 0;   // channel group index within the band
    int filter_lo = 0, filter_hi = 0;   // [lo, hi)
    int channel_lo = 0, channel_hi = 0; // [lo, hi)

    int rows_used() const { return filter_hi - filter_lo; }
    int channels() const { return channel_hi - channel_lo; }
};

struct ImageFold {
    int id = 0;  // 1-based
    int q = 0;   // output column produced by this fold
    std::vector<int> columns; // new padded input columns, ascending
};

struct ImageBlock {
    int id = 0;
    int channel_lo = 0, channel_hi = 0;
    std::vector<ImageFold> folds;
};

struct PsTile {
    int id = 0;
    int filter_lo = 0, filter_hi = 0;
    int output_lo = 0, output_hi = 0; // flattened p*Q+q, [lo, hi)
    int channel_lo = 0, channel_hi = 0;
};

/// Position of a fold among the channel groups of its filter band.
enum class FoldPosition { First, Rest, Last };

struct FoldPlan {
    LayerSpec layer;
    ArrayGeom geom;
    ColumnRoleMap roles;
    int bands = 0;
    int groups = 0;
    std::vector<FilterFold> filter_folds;
    std::vector<ImageBlock> image_blocks; // one per filter fold
    std::vector<PsTile> ps_tiles;         // one per filter fold

    /// First fold wins when a band has a single channel group.
    FoldPosition position(const FilterFold& ff) const {
        if (ff.group == 0) return FoldPosition::First;
        if (ff.group == groups - 1) return FoldPosition::Last;
        return FoldPosition::Rest;
    }

    /// Kernel coordinate at (row, col) for a fold, or nullopt if the SiteO
    /// holds no weight.
    std::optional<WeightSlot> weight_at(const FilterFold& ff, int row, int col) const {
        if (row >= ff.rows_used()) return std::nullopt;
        const int block = col / roles.block_width;
        if (block >= ff.channels()) return std::nullopt;
        const int within = col % roles.block_width;
        const int g = within / (roles.R + 1);
        const int k = within % (roles.R + 1);
        if (k == roles.R) return std::nullopt;
        return WeightSlot{ff.filter_lo + row, ff.channel_lo + block, k,
                          roles.kernel_col_of_group(g)};
    }
};

namespace detail {

/// Padded columns read by output column q.
inline std::vector<int> window_columns(const LayerSpec& l, int q) {
    std::vector<int> cols;
    for (int s = 0; s < l.S; ++s) cols.push_back(q * l.stride + s);
    return cols;
}

inline std::vector<ImageFold> build_image_folds(const LayerSpec& l) {
    std::vector<ImageFold> folds;
    std::set<int> seen;
    for (int q = 0; q < l.out_q(); ++q) {
        ImageFold f;
        f.id = q + 1;
        f.q = q;
        for (int c : window_columns(l, q)) {
            if (seen.insert(c).second) f.columns.push_back(c);
        }
        std::sort(f.columns.begin(), f.columns.end());
        folds.push_back(std::move(f));
    }
    return folds;
}

} // namespace detail

inline FoldPlan build_fold_plan(const LayerSpec& layer, const ArrayGeom& geom) {
    if (layer.kind == LayerKind::MaxPool)
        throw MappingError("max-pool layers are not folded onto the array");
    layer.validate();
    geom.validate();
    FoldPlan plan;
    plan.layer = layer;
    plan.geom = geom;
    plan.roles = column_roles(geom, layer.R, layer.S);
    const int cpf = plan.roles.channels_per_fold;
    plan.bands = (layer.Nf + geom.rows - 1) / geom.rows;
    plan.groups = (layer.C + cpf - 1) / cpf;
    const auto folds = detail::build_image_folds(layer);
    const int outputs = layer.out_p() * layer.out_q();
    int id = 1;
    for (int b = 0; b < plan.bands; ++b) {
        for (int g = 0; g < plan.groups; ++g, ++id) {
            FilterFold ff;
            ff.id = id;
            ff.band = b;
            ff.group = g;
            ff.filter_lo = b * geom.rows;
            ff.filter_hi = std::min(layer.Nf, ff.filter_lo + geom.rows);
            ff.channel_lo = g * cpf;
            ff.channel_hi = std::min(layer.C, ff.channel_lo + cpf);
            plan.filter_folds.push_back(ff);
            plan.image_blocks.push_back({id, ff.channel_lo, ff.channel_hi, folds});
            plan.ps_tiles.push_back(
                {id, ff.filter_lo, ff.filter_hi, 0, outputs, ff.channel_lo, ff.channel_hi});
        }
    }
    return plan;
}

struct Verdict {
    bool ok = true;
    std::string message;
    explicit operator bool() const { return ok; }
};

/// Checks that folds partition (filter, channel) space, image folds cover
/// every padded column read by the sliding window exactly once per block,
/// and partial-sum tiles tile the output tensor.
inline Verdict coverage_check(const FoldPlan& plan, const LayerSpec& layer) {
    auto fail = [](const std::string& s) { return Verdict{false, s}; };
    std::vector<int> owner(static_cast<std::size_t>(layer.Nf) * layer.C, 0);
    for (const auto& ff : plan.filter_folds) {
        for (int f = ff.filter_lo; f < ff.filter_hi; ++f) {
            for (int c = ff.channel_lo; c < ff.channel_hi; ++c) {
                if (f < 0 || f >= layer.Nf || c < 0 || c >= layer.C)
                    return fail("fold " + std::to_string(ff.id) + " covers out-of-range pair (f=" +
                                std::to_string(f) + ", c=" + std::to_string(c) + ")");
                int& o = owner[static_cast<std::size_t>(f) * layer.C + c];
                if (o != 0)
                    return fail("pair (f=" + std::to_string(f) + ", c=" + std::to_string(c) +
                                ") covered by folds " + std::to_string(o) + " and " +
                                std::to_string(ff.id));
                o = ff.id;
            }
        }
    }
    for (int f = 0; f < layer.Nf; ++f)
        for (int c = 0; c < layer.C; ++c)
            if (owner[static_cast<std::size_t>(f) * layer.C + c] == 0)
                return fail("pair (f=" + std::to_string(f) + ", c=" + std::to_string(c) +
                            ") not covered by any filter fold");

    std::set<int> touched;
    for (int q = 0; q < layer.out_q(); ++q)
        for (int s = 0; s < layer.S; ++s) touched.insert(q * layer.stride + s);
    for (const auto& ib : plan.image_blocks) {
        std::multiset<int> got;
        for (const auto& f : ib.folds) got.insert(f.columns.begin(), f.columns.end());
        for (int c : touched) {
            auto n = got.count(c);
            if (n == 0)
                return fail("image block " + std::to_string(ib.id) + " misses padded column " +
                            std::to_string(c));
            if (n > 1)
                return fail("image block " + std::to_string(ib.id) + " injects padded column " +
                            std::to_string(c) + " " + std::to_string(n) + " times");
        }
        for (int c : got)
            if (!touched.count(c))
                return fail("image block " + std::to_string(ib.id) + " injects unused column " +
                            std::to_string(c));
        // A fold may only inject columns that its own window reads.
        for (const auto& f : ib.folds) {
            for (int c : f.columns) {
                if (c < f.q * layer.stride || c >= f.q * layer.stride + layer.S)
                    return fail("image fold " + std::to_string(f.id) + " of block " +
                                std::to_string(ib.id) + " injects column " + std::to_string(c) +
                                " outside its window");
            }
        }
    }

    const int outputs = layer.out_p() * layer.out_q();
    std::vector<int> out_owner(static_cast<std::size_t>(layer.Nf) * outputs * layer.C, 0);
    for (const auto& t : plan.ps_tiles) {
        for (int f = t.filter_lo; f < t.filter_hi; ++f)
            for (int o = t.output_lo; o < t.output_hi; ++o)
                for (int c = t.channel_lo; c < t.channel_hi; ++c) {
                    if (f >= layer.Nf || o >= outputs || c >= layer.C)
                        return fail("ps tile " + std::to_string(t.id) + " exceeds the output");
                    int& w = out_owner[(static_cast<std::size_t>(f) * outputs + o) * layer.C + c];
                    if (w != 0)
                        return fail("output (f=" + std::to_string(f) + ", o=" + std::to_string(o) +
                                    ", c=" + std::to_string(c) + ") in two ps tiles");
                    w = t.id;
                }
    }
    for (std::size_t i = 0; i < out_owner.size(); ++i)
        if (out_owner[i] == 0) {
            const auto c = i % layer.C;
            const auto o = (i / layer.C) % outputs;
            const auto f = i / layer.C / outputs;
            return fail("output (f=" + std::to_string(f) + ", o=" + std::to_string(o) +
                        ", c=" + std::to_string(c) + ") not produced by any ps tile");
        }
    return {};
}

/// JSON report mirroring the mapping-construct table (one entry per fold).
inline nlohmann::json plan_to_json(const FoldPlan& plan) {
    using nlohmann::json;
    auto shape = [](int a, int b) { return std::to_string(a) + " X " + std::to_string(b); };
    json folds = json::array();
    for (std::size_t i = 0; i < plan.filter_folds.size(); ++i) {
        const auto& ff = plan.filter_folds[i];
        const auto& ib = plan.image_blocks[i];
        const auto& ps = plan.ps_tiles[i];
        json ifs = json::array();
        for (const auto& f : ib.folds) ifs.push_back({{"ID_IF", f.id}, {"Col_IF", f.columns}});
        folds.push_back({
            {"ID_FF", ff.id},
            {"FF_Shape", shape(plan.geom.rows, plan.geom.cols)},
            {"ID_IB", ib.id},
            {"IF", ifs},
            {"C_at_Cp", {ff.channel_lo, ff.channel_hi - 1}},
            {"NF_at_Rp", {ff.filter_lo, ff.filter_hi - 1}},
            {"ID_PS", ps.id},
            {"PS_Shape", shape(ps.filter_hi - ps.filter_lo, ps.output_hi - ps.output_lo)},
            {"O_slice",
             {{"filters", {ps.filter_lo, ps.filter_hi - 1}},
              {"outputs", {ps.output_lo, ps.output_hi - 1}},
              {"channels", {ps.channel_lo, ps.channel_hi - 1}}}},
        });
    }
    const auto& r = plan.roles;
    return {
        {"layer", plan.layer.name},
        {"array", shape(plan.geom.rows, plan.geom.cols)},
        {"padded_input", {plan.layer.padded_x(), plan.layer.padded_y(), plan.layer.C}},
        {"output", {plan.layer.out_p(), plan.layer.out_q(), plan.layer.Nf}},
        {"channels_per_fold", r.channels_per_fold},
        {"roles", {{"c1", r.c1_cols}, {"c2", r.c2_cols}, {"c3", r.c3_col}}},
        {"folds", folds},
    };
}

} // namespace mavec
