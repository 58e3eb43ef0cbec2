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

#include <cstddef>
#include <vector>

#include "mavec/error.hpp"

namespace mavec {

/// Dense rank-3 float tensor, row-major over (d0, d1, d2). Activations use
/// (X, Y, C) for inputs and (P, Q, Nf) for outputs.
struct Tensor {
    int d0 = 0, d1 = 0, d2 = 0;
    std::vector<float> values;

    Tensor() = default;
    Tensor(int a, int b, int c, float fill = 0.0f)
        : d0(a), d1(b), d2(c), values(static_cast<std::size_t>(a) * b * c, fill) {}

    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * d1 + j) * d2 + k;
    }
    float& at(int i, int j, int k) { return values[index(i, j, k)]; }
    float at(int i, int j, int k) const { return values[index(i, j, k)]; }
    std::size_t size() const { return values.size(); }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Filter weights indexed [f][c][r][s].
struct FilterBank {
    int Nf = 0, C = 0, R = 0, S = 0;
    std::vector<float> values;

    FilterBank() = default;
    FilterBank(int nf, int c, int r, int s, float fill = 0.0f)
        : Nf(nf), C(c), R(r), S(s), values(static_cast<std::size_t>(nf) * c * r * s, fill) {}

    std::size_t index(int f, int c, int r, int s) const {
        return ((static_cast<std::size_t>(f) * C + c) * R + r) * S + s;
    }
    float& at(int f, int c, int r, int s) { return values[index(f, c, r, s)]; }
    float at(int f, int c, int r, int s) const { return values[index(f, c, r, s)]; }
};

} // namespace mavec
