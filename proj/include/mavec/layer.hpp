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

#pragma once

#include <string>
#include <string_view>

#include "mavec/error.hpp"

namespace mavec {

enum class LayerKind { Conv, Fc, MaxPool };
enum class Activation { Relu, None };

inline std::string_view to_string(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Fc: return "fc";
        case LayerKind::MaxPool: return "maxpool";
    }
    return "?";
}

inline LayerKind layer_kind_from(std::string_view s) {
    if (s == "conv") return LayerKind::Conv;
    if (s == "fc") return LayerKind::Fc;
    if (s == "maxpool") return LayerKind::MaxPool;
    throw WorkloadError("unknown layer kind '" + std::string(s) + "'");
}

/// One network layer. X is the extent paired with R/P, Y the extent paired
/// with S/Q. Pool layers reuse R=S as the window.
struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::Conv;
    int X = 1, Y = 1, C = 1;
    int R = 1, S = 1;
    int Nf = 1;
    int stride = 1;
    int pad = 0;
    Activation activation = Activation::Relu;

    int padded_x() const { return X + 2 * pad; }
    int padded_y() const { return Y + 2 * pad; }
    int out_p() const { return (padded_x() - R) / stride + 1; }
    int out_q() const { return (padded_y() - S) / stride + 1; }
    int out_channels() const { return kind == LayerKind::MaxPool ? C : Nf; }

    /// Multiply-accumulate count P*Q*Nf*R*S*C.
    long long macs() const {
        if (kind == LayerKind::MaxPool) return 0;
        return 1LL * out_p() * out_q() * Nf * R * S * C;
    }

    void validate() const {
        auto fail = [&](const std::string& why) {
            throw WorkloadError("layer '" + name + "': " + why);
        };
        if (X < 1 || Y < 1 || C < 1 || R < 1 || S < 1 || Nf < 1) fail("extents must be positive");
        if (stride < 1) fail("stride must be positive");
        if (pad < 0) fail("pad must be non-negative");
        if (R > 8) fail("R exceeds the 8-word SiteO weight buffer");
        if (R > padded_x() || S > padded_y()) fail("kernel larger than padded input");
        if (kind == LayerKind::Fc && (R != 1 || S != 1 || pad != 0 || X != 1 || Y != 1))
            fail("fc layers must be 1x1 over a 1x1 extent with pad 0");
        if (out_p() < 1 || out_q() < 1) fail("output extent is not positive");
    }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// SiteO array geometry (Rp rows x Cp columns).
struct ArrayGeom {
    int rows = 64;
    int cols = 64;
    double clock_ghz = 1.0;
    static constexpr int kSiteMEdge = 4;

    int sites() const { return rows * cols; }
    int sitem_rows() const { return (rows + kSiteMEdge - 1) / kSiteMEdge; }
    int sitem_cols() const { return (cols + kSiteMEdge - 1) / kSiteMEdge; }
    int sitems() const { return sitem_rows() * sitem_cols(); }
    int sitem_of(int row, int col) const {
        return (row / kSiteMEdge) * sitem_cols() + col / kSiteMEdge;
    }

    void validate() const {
        if (rows < 1 || cols < 1) throw MappingError("array extents must be positive");
        if (rows * cols > 4096) throw MappingError("array exceeds 4096 SiteOs (12-bit addresses)");
        if (clock_ghz <= 0) throw MappingError("clock must be positive");
    }

    static ArrayGeom square(int n, double ghz = 1.0) { return ArrayGeom{n, n, ghz}; }
};

} // namespace mavec
