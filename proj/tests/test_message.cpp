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
#include <set>

#include "mavec/message.hpp"

using namespace mavec;

namespace {

Message sample(Opcode op, std::uint16_t addr, float v) {
    Message m;
    m.op = op;
    m.addr = Address(addr);
    m.payload = float_bits(v);
    if (carries_pattern(op))
        m.tail = PatternBits{true, false, false, 1, 2};
    else
        m.tail = NextFields{Opcode::AAdds, Address(7)};
    return m;
}

} // namespace

TEST(Codec, OpcodeNibblesAreDistinctAndNamed) {
    std::set<int> seen;
    for (Opcode op : kAllOpcodes) {
        EXPECT_TRUE(seen.insert(opcode_bits(op)).second);
        EXPECT_EQ(opcode_from_name(opcode_name(op)), op);
        EXPECT_EQ(opcode_from_bits(opcode_bits(op)), op);
    }
    EXPECT_EQ(seen.size(), 13u);
    for (int unused : {0b0000, 0b1110, 0b1111}) EXPECT_FALSE(opcode_from_bits(static_cast<std::uint8_t>(unused)));
}

TEST(Codec, FieldPlacement) {
    Message m;
    m.op = Opcode::Prog;
    m.addr = Address(0xabc);
    m.payload = 0x12345678u;
    m.tail = NextFields{Opcode::AAdds, Address(0x003)};
    const auto w = encode(m);
    EXPECT_EQ(w >> 60, 0b0001u);
    EXPECT_EQ((w >> 48) & 0xfff, 0xabcu);
    EXPECT_EQ((w >> 16) & 0xffffffffu, 0x12345678u);
    EXPECT_EQ((w >> 12) & 0xf, 0b0111u);
    EXPECT_EQ(w & 0xfff, 0x003u);
}

TEST(Codec, RoundTripEveryOpcode) {
    for (Opcode op : kAllOpcodes) {
        const auto m = sample(op, 123, -1.5f);
        EXPECT_EQ(decode(encode(m)), m) << opcode_name(op);
    }
}

TEST(Codec, DanglingNextAddressRejected) {
    // Next nibble 0000 with a nonzero next address.
    EXPECT_THROW(decode(0x4001'0000'0000'0005ULL), CodecError);
}

TEST(Codec, RoundTripRandomWords) {
    std::mt19937_64 rng(5);
    int checked = 0;
    for (int i = 0; i < 20000; ++i) {
        const std::uint64_t w = rng();
        Message m;
        try {
            m = decode(w);
        } catch (const CodecError&) {
            continue;
        }
        EXPECT_EQ(encode(m), w);
        ++checked;
    }
    EXPECT_GT(checked, 10000);
}

TEST(Codec, PatternBitsRoundTrip) {
    for (int step = -32; step <= 31; ++step)
        for (int off : {0, 1, 63, 127})
            for (int flags = 0; flags < 8; ++flags) {
                PatternBits p{(flags & 1) != 0, (flags & 2) != 0, (flags & 4) != 0, step, off};
                EXPECT_EQ(PatternBits::unpack(p.pack()), p);
            }
    EXPECT_THROW((PatternBits{false, false, false, 32, 0}.pack()), CodecError);
    EXPECT_THROW((PatternBits{false, false, false, 0, 128}.pack()), CodecError);
    EXPECT_EQ(PatternBits{}.pack(), 0);
}

TEST(Codec, RejectsMalformed) {
    EXPECT_THROW(Address(4096), CodecError);
    EXPECT_THROW(decode(0xe000000000000000ull), CodecError);
    try {
        decode(0x100000000000f000ull); // Prog with next nibble 1111
        FAIL();
    } catch (const CodecError& e) {
        EXPECT_EQ(e.nibble(), 0xf);
    }
    Message m;
    m.op = Opcode::AMuls; // needs pattern bits
    EXPECT_THROW(encode(m), CodecError);
    Message n;
    n.tail = NextFields{std::nullopt, Address(5)};
    EXPECT_THROW(encode(n), CodecError);
}

TEST(Codec, RewritePromotesNextFields) {
    const auto m = sample(Opcode::Prog, 1, 2.0f);
    const auto r = rewrite_for_next(m, float_bits(3.0f));
    EXPECT_EQ(r.op, Opcode::AAdds);
    EXPECT_EQ(r.addr, Address(7));
    EXPECT_EQ(bits_float(r.payload), 3.0f);
    const auto mul = rewrite_for_next(Message{Opcode::Relu, Address(0), 0, NextFields{Opcode::AMuls, Address(2)}}, 0);
    EXPECT_TRUE(mul.pattern());
    EXPECT_THROW(rewrite_for_next(sample(Opcode::AMuls, 0, 0), 0), CodecError);
    EXPECT_THROW(rewrite_for_next(Message{}, 0), CodecError);
}

TEST(Codec, AnnotationShowsRoles) {
    const auto m = sample(Opcode::Prog, 26, 0.5f);
    const auto s = annotate(m, 24);
    EXPECT_NE(s.find("Prog @1,2 -> A_ADDS@0,7"), std::string::npos) << s;
    EXPECT_NE(s.find("payload=0.5"), std::string::npos);
}
