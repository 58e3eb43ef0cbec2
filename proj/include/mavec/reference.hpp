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
 * @file reference.hpp
 * @brief Functional ground truth for conv / ReLU / max-pool.
 *
 * conv2d_naive follows the textbook loop nest. conv2d_staged performs the
 * same float additions in the order the fabric performs them: kernel rows
 * inside a group, then groups (kernel columns S-1 .. 0), then the channels
 * of a fold, then the fold merge across channel groups.
 */
#pragma once

#include <algorithm>
#include <limits>

#include "mavec/fold_mapper.hpp"
#include "mavec/layer.hpp"
#include "mavec/tensor.hpp"

namespace mavec {

namespace detail {

inline void check_conv_dims(const Tensor& in, const FilterBank& w, const LayerSpec& l) {
    if (in.d0 != l.X || in.d1 != l.Y || in.d2 != l.C)
        throw MappingError("input tensor does not match layer extents");
    if (w.Nf != l.Nf || w.C != l.C || w.R != l.R || w.S != l.S)
        throw MappingError("filter bank does not match layer extents");
}

inline float padded(const Tensor& in, const LayerSpec& l, int c, int x, int y) {
    const int ux = x - l.pad;
    const int uy = y - l.pad;
    if (ux < 0 || uy < 0 || ux >= l.X || uy >= l.Y) return 0.0f;
    return in.at(ux, uy, c);
}

} // namespace detail

inline float relu(float v) { return v > 0.0f ? v : 0.0f; }

inline Tensor conv2d_naive(const Tensor& in, const FilterBank& w, const LayerSpec& l) {
    detail::check_conv_dims(in, w, l);
    Tensor out(l.out_p(), l.out_q(), l.Nf);
    for (int f = 0; f < l.Nf; ++f)
        for (int p = 0; p < l.out_p(); ++p)
            for (int q = 0; q < l.out_q(); ++q) {
                float acc = 0.0f;
                for (int c = 0; c < l.C; ++c)
                    for (int r = 0; r < l.R; ++r)
                        for (int s = 0; s < l.S; ++s)
                            acc += w.at(f, c, r, s) *
                                   detail::padded(in, l, c, p * l.stride + r, q * l.stride + s);
                out.at(p, q, f) = acc;
            }
    return out;
}

/// Pre-activation output in fabric addition order.
inline Tensor conv2d_staged(const Tensor& in, const FilterBank& w, const LayerSpec& l,
                            const FoldPlan& plan) {
    detail::check_conv_dims(in, w, l);
    if (!(plan.layer == l)) throw MappingError("fold plan was built for a different layer");
    Tensor out(l.out_p(), l.out_q(), l.Nf);
    for (int f = 0; f < l.Nf; ++f)
        for (int p = 0; p < l.out_p(); ++p)
            for (int q = 0; q < l.out_q(); ++q) {
                float merged = 0.0f;
                const int band = f / plan.geom.rows;
                for (const auto& ff : plan.filter_folds) {
                    if (ff.band != band) continue;
                    float sum_c = 0.0f;
                    for (int c = ff.channel_lo; c < ff.channel_hi; ++c) {
                        float sum_s = 0.0f;
                        for (int g = 0; g < l.S; ++g) {
                            const int s = l.S - 1 - g;
                            float sum_r = 0.0f;
                            for (int r = 0; r < l.R; ++r)
                                sum_r += w.at(f, c, r, s) * detail::padded(in, l, c, p * l.stride + r,
                                                                            q * l.stride + s);
                            sum_s += sum_r;
                        }
                        sum_c += sum_s;
                    }
                    merged = ff.group == 0 ? sum_c : merged + sum_c;
                }
                out.at(p, q, f) = merged;
            }
    return out;
}

inline Tensor relu_ref(Tensor t) {
    for (auto& v : t.values) v = relu(v);
    return t;
}

inline Tensor maxpool_ref(const Tensor& in, int window, int stride) {
    if (window < 1 || stride < 1 || window > in.d0 || window > in.d1)
        throw MappingError("pool window does not fit the input");
    Tensor out((in.d0 - window) / stride + 1, (in.d1 - window) / stride + 1, in.d2);
    for (int i = 0; i < out.d0; ++i)
        for (int j = 0; j < out.d1; ++j)
            for (int c = 0; c < in.d2; ++c) {
                float m = -std::numeric_limits<float>::infinity();
                for (int a = 0; a < window; ++a)
                    for (int b = 0; b < window; ++b)
                        m = std::max(m, in.at(i * stride + a, j * stride + b, c));
                out.at(i, j, c) = m;
            }
    return out;
}

} // namespace mavec
