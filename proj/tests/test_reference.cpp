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

#include <gtest/gtest.h>

#include <random>

#include "mavec/reference.hpp"
#include "mavec/verify.hpp"
#include "mavec/workload.hpp"

using namespace mavec;

TEST(Reference, HandComputedConvolution) {
    // 3x3 input, one channel, 2x2 kernel of ones, stride 1, no pad.
    LayerSpec l = conv_layer("h", 3, 1, 1, 2, 1, 0);
    Tensor in(3, 3, 1);
    for (int x = 0; x < 3; ++x)
        for (int y = 0; y < 3; ++y) in.at(x, y, 0) = static_cast<float>(x * 3 + y);
    FilterBank w(1, 1, 2, 2);
    for (auto& v : w.values) v = 1.0f;
    const auto out = conv2d_naive(in, w, l);
    ASSERT_EQ(out.d0, 2);
    EXPECT_EQ(out.at(0, 0, 0), 0 + 1 + 3 + 4);
    EXPECT_EQ(out.at(1, 1, 0), 4 + 5 + 7 + 8);
    EXPECT_EQ(out.at(0, 1, 0), 1 + 2 + 4 + 5);
}

TEST(Reference, PaddingAndStride) {
    LayerSpec l = conv_layer("p", 4, 1, 1, 3, 2, 1);
    Tensor in(4, 4, 1);
    for (auto& v : in.values) v = 1.0f;
    FilterBank w(1, 1, 3, 3);
    for (auto& v : w.values) v = 1.0f;
    const auto out = conv2d_naive(in, w, l);
    ASSERT_EQ(out.d0, 2);
    ASSERT_EQ(out.d1, 2);
    EXPECT_EQ(out.at(0, 0, 0), 4.0f); // corner window sees a 2x2 patch
    EXPECT_EQ(out.at(1, 1, 0), 9.0f);
}

TEST(Reference, StagedAgreesWithNaive) {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 60; ++i) {
        const auto c = random_oracle_case(rng, i);
        const auto in = synthetic_input(c.layer, c.seed);
        const auto w = synthetic_weights(c.layer, c.seed + 1);
        const auto a = conv2d_naive(in, w, c.layer);
        const auto b = conv2d_staged(in, w, c.layer, build_fold_plan(c.layer, c.geom));
        for (std::size_t k = 0; k < a.values.size(); ++k)
            EXPECT_LE(rel_diff(b.values[k], a.values[k]), kNaiveRelTol);
    }
}

TEST(Reference, StagedUsesFabricAdditionOrder) {
    // 2^24 + 1 is not representable, so the grouping decides the result.
    LayerSpec l = conv_layer("o", 3, 1, 1, 3, 1, 0);
    Tensor in(3, 3, 1, 1.0f);
    FilterBank w(1, 1, 3, 3);
    w.at(0, 0, 0, 2) = 16777216.0f;
    w.at(0, 0, 0, 0) = 1.0f;
    w.at(0, 0, 1, 0) = -16777216.0f;
    const auto plan = build_fold_plan(l, ArrayGeom{1, 12, 1.0});
    // Loop-nest order: 1 + 2^24 rounds to 2^24, then cancels.
    EXPECT_EQ(conv2d_naive(in, w, l).at(0, 0, 0), 0.0f);
    // Kernel column 2 is reduced first, then column 0 (1 - 2^24 is exact).
    EXPECT_EQ(conv2d_staged(in, w, l, plan).at(0, 0, 0), 1.0f);
    EXPECT_THROW(conv2d_staged(in, w, l, build_fold_plan(conv_layer("z", 4, 1, 1, 3, 1, 0), ArrayGeom{1, 12, 1.0})),
                 MappingError);
}

TEST(Reference, ReluAndMaxPool) {
    Tensor t(2, 2, 1);
    t.values = {-1.0f, 2.0f, -0.0f, 3.0f};
    const auto r = relu_ref(t);
    EXPECT_EQ(r.values, (std::vector<float>{0.0f, 2.0f, 0.0f, 3.0f}));
    Tensor p(4, 4, 2);
    for (std::size_t i = 0; i < p.values.size(); ++i) p.values[i] = static_cast<float>(i);
    const auto m = maxpool_ref(p, 2, 2);
    ASSERT_EQ(m.d0, 2);
    for (int c = 0; c < 2; ++c) EXPECT_EQ(m.at(1, 1, c), p.at(3, 3, c));
    EXPECT_THROW(maxpool_ref(p, 5, 1), MappingError);
}

TEST(Reference, ShapeMismatchIsRejected) {
    const auto l = conv_layer("s", 4, 2, 2);
    EXPECT_THROW(conv2d_naive(Tensor(4, 4, 3), FilterBank(2, 2, 3, 3), l), MappingError);
    EXPECT_THROW(conv2d_naive(Tensor(4, 4, 2), FilterBank(2, 2, 1, 3), l), MappingError);
}
