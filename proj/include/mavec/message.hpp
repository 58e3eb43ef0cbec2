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
 * @file message.hpp
 * @brief The 64-bit co-packed message and the 13-opcode instruction set.
 *
 * Bit layout (most significant first):
 * ```
 *  63      60 59            48 47                    16 15     12 11          0
 * +----------+----------------+------------------------+---------+------------+
 * | present  | present addr   | payload (32 bit)       | next op | next addr  |
 * | opcode   | (12 bit)       |                        |  -- or 16 pattern bits|
 * +----------+----------------+------------------------+---------+------------+
 * ```
 * Compute-class messages (A_MULS, CMP) carry workload-pattern bits in the
 * tail; every other opcode carries next opcode / next address.
 */
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>

#include "mavec/error.hpp"

namespace mavec {

enum class Opcode : std::uint8_t {
    Prog = 0b0001,
    Update = 0b1101,
    AAdd = 0b0100,
    AAdds = 0b0111,
    ASub = 0b0101,
    ASubs = 0b1000,
    AMul = 0b0010,
    AMuls = 0b1001,
    ADiv = 0b0110,
    ADivs = 0b1010,
    AvAdd = 0b1011,
    Relu = 0b0011,
    Cmp = 0b1100,
};

inline constexpr std::array<Opcode, 13> kAllOpcodes = {
    Opcode::Prog,  Opcode::Update, Opcode::AAdd,  Opcode::AAdds, Opcode::ASub,
    Opcode::ASubs, Opcode::AMul,   Opcode::AMuls, Opcode::ADiv,  Opcode::ADivs,
    Opcode::AvAdd, Opcode::Relu,   Opcode::Cmp,
};

constexpr std::uint8_t opcode_bits(Opcode op) { return static_cast<std::uint8_t>(op); }

/// Returns nullopt for the three unassigned nibbles (0000, 1110, 1111).
constexpr std::optional<Opcode> opcode_from_bits(std::uint8_t nibble) {
    for (Opcode op : kAllOpcodes) {
        if (opcode_bits(op) == nibble) return op;
    }
    return std::nullopt;
}

constexpr std::string_view opcode_name(Opcode op) {
    switch (op) {
        case Opcode::Prog: return "Prog";
        case Opcode::Update: return "UPDATE";
        case Opcode::AAdd: return "A_ADD";
        case Opcode::AAdds: return "A_ADDS";
        case Opcode::ASub: return "A_SUB";
        case Opcode::ASubs: return "A_SUBS";
        case Opcode::AMul: return "A_MUL";
        case Opcode::AMuls: return "A_MULS";
        case Opcode::ADiv: return "A_DIV";
        case Opcode::ADivs: return "A_DIVS";
        case Opcode::AvAdd: return "Av_ADD";
        case Opcode::Relu: return "RELU";
        case Opcode::Cmp: return "CMP";
    }
    return "?";
}

inline std::optional<Opcode> opcode_from_name(std::string_view name) {
    for (Opcode op : kAllOpcodes) {
        if (opcode_name(op) == name) return op;
    }
    return std::nullopt;
}

/// Opcodes whose 16-bit tail is interpreted as workload-pattern bits.
constexpr bool carries_pattern(Opcode op) { return op == Opcode::AMuls || op == Opcode::Cmp; }

/// Streaming variants combine and forward the rewritten message once the
/// operand count is reached; the plain variants combine and hold.
constexpr bool is_streaming(Opcode op) {
    return op == Opcode::AAdds || op == Opcode::ASubs || op == Opcode::AMuls ||
           op == Opcode::ADivs;
}

/// 12-bit SiteO address, row-major over the configured array.
class Address {
public:
    static constexpr std::uint16_t kLimit = 4096;

    constexpr Address() = default;
    constexpr explicit Address(std::uint16_t raw) : raw_(raw) {
        if (raw >= kLimit) throw CodecError("present/next address exceeds 12 bits");
    }

    static constexpr Address at(int row, int col, int cols) {
        if (row < 0 || col < 0 || col >= cols)
            throw CodecError("address coordinates outside the array");
        return Address(static_cast<std::uint16_t>(row * cols + col));
    }

    constexpr std::uint16_t raw() const { return raw_; }
    constexpr int row(int cols) const { return raw_ / cols; }
    constexpr int col(int cols) const { return raw_ % cols; }

    friend constexpr bool operator==(Address, Address) = default;

private:
    std::uint16_t raw_ = 0;
};

/// Workload pattern carried by compute messages.
///  [15] shift  [14] tstream  [13] identity  [12:7] shift_step (signed)  [6:0] group_offset
struct PatternBits {
    bool shift = false;
    bool tstream = false;
    bool identity = false;
    int shift_step = 0;   // column delta for the in-group forward
    int group_offset = 0; // remaining in-group forwards for this operand

    constexpr bool empty() const {
        return !shift && !tstream && !identity && shift_step == 0 && group_offset == 0;
    }

    constexpr std::uint16_t pack() const {
        if (shift_step < -32 || shift_step > 31) throw CodecError("pattern shift_step out of range");
        if (group_offset < 0 || group_offset > 127)
            throw CodecError("pattern group_offset out of range");
        std::uint16_t bits = 0;
        bits |= static_cast<std::uint16_t>(shift) << 15;
        bits |= static_cast<std::uint16_t>(tstream) << 14;
        bits |= static_cast<std::uint16_t>(identity) << 13;
        bits |= static_cast<std::uint16_t>((shift_step & 0x3f) << 7);
        bits |= static_cast<std::uint16_t>(group_offset & 0x7f);
        return bits;
    }

    static constexpr PatternBits unpack(std::uint16_t bits) {
        PatternBits p;
        p.shift = (bits >> 15) & 1;
        p.tstream = (bits >> 14) & 1;
        p.identity = (bits >> 13) & 1;
        int step = (bits >> 7) & 0x3f;
        p.shift_step = step >= 32 ? step - 64 : step;
        p.group_offset = bits & 0x7f;
        return p;
    }

    friend constexpr bool operator==(const PatternBits&, const PatternBits&) = default;
};

/// Next-stage fields. An absent opcode encodes as nibble 0000 ("-" in schedules).
struct NextFields {
    std::optional<Opcode> op;
    Address addr;

    friend constexpr bool operator==(const NextFields&, const NextFields&) = default;
};

using Tail = std::variant<NextFields, PatternBits>;

struct Message {
    Opcode op = Opcode::Prog;
    Address addr;
    std::uint32_t payload = 0;
    Tail tail = NextFields{};

    const NextFields* next() const { return std::get_if<NextFields>(&tail); }
    const PatternBits* pattern() const { return std::get_if<PatternBits>(&tail); }

    friend bool operator==(const Message&, const Message&) = default;
};

inline std::uint32_t float_bits(float v) { return std::bit_cast<std::uint32_t>(v); }
inline float bits_float(std::uint32_t b) { return std::bit_cast<float>(b); }

inline std::uint64_t encode(const Message& m) {
    const bool want_pattern = carries_pattern(m.op);
    if (want_pattern != std::holds_alternative<PatternBits>(m.tail))
        throw CodecError(std::string("tail kind does not match opcode ") +
                         std::string(opcode_name(m.op)));
    std::uint16_t tail = 0;
    if (const auto* p = m.pattern()) {
        tail = p->pack();
    } else {
        const auto& n = *m.next();
        std::uint8_t nibble = n.op ? opcode_bits(*n.op) : 0;
        if (!n.op && n.addr.raw() != 0)
            throw CodecError("next address set without a next opcode");
        tail = static_cast<std::uint16_t>((nibble << 12) | n.addr.raw());
    }
    return (std::uint64_t{opcode_bits(m.op)} << 60) | (std::uint64_t{m.addr.raw()} << 48) |
           (std::uint64_t{m.payload} << 16) | tail;
}

inline Message decode(std::uint64_t word) {
    const auto nibble = static_cast<std::uint8_t>(word >> 60);
    auto op = opcode_from_bits(nibble);
    if (!op) throw CodecError("unknown present opcode nibble", nibble);
    Message m;
    m.op = *op;
    m.addr = Address(static_cast<std::uint16_t>((word >> 48) & 0xfff));
    m.payload = static_cast<std::uint32_t>(word >> 16);
    const auto tail = static_cast<std::uint16_t>(word & 0xffff);
    if (carries_pattern(m.op)) {
        m.tail = PatternBits::unpack(tail);
    } else {
        const auto next_nibble = static_cast<std::uint8_t>(tail >> 12);
        NextFields n;
        if (next_nibble != 0) {
            n.op = opcode_from_bits(next_nibble);
            if (!n.op) throw CodecError("unknown next opcode nibble", next_nibble);
        } else if ((tail & 0xfff) != 0) {
            throw CodecError("next address set without a next opcode");
        }
        n.addr = Address(static_cast<std::uint16_t>(tail & 0xfff));
        m.tail = n;
    }
    return m;
}

/// Promote the next fields into the present fields and attach `result`.
inline Message rewrite_for_next(const Message& m, std::uint32_t result, Tail tail = NextFields{}) {
    const auto* n = m.next();
    if (!n) throw CodecError("message carries pattern bits, not next fields");
    if (!n->op) throw CodecError("next opcode 0000 is unassigned", 0);
    Message out;
    out.op = *n->op;
    out.addr = n->addr;
    out.payload = result;
    out.tail = std::move(tail);
    if (carries_pattern(out.op) && !std::holds_alternative<PatternBits>(out.tail))
        out.tail = PatternBits{};
    return out;
}

/// `hex  # OPCODE @r,c -> NEXT@r,c  payload=<float|raw>`
inline std::string annotate(const Message& m, int cols, bool raw_payload = false) {
    char hex[24];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(encode(m)));
    std::ostringstream os;
    os << hex << "  # " << opcode_name(m.op) << " @" << m.addr.row(cols) << ',' << m.addr.col(cols);
    if (const auto* n = m.next()) {
        if (n->op)
            os << " -> " << opcode_name(*n->op) << '@' << n->addr.row(cols) << ','
               << n->addr.col(cols);
    } else {
        const auto& p = *m.pattern();
        os << " pattern=" << (p.empty() ? "0" : "");
        if (!p.empty()) {
            os << (p.shift ? "S" : "") << (p.tstream ? "T" : "") << (p.identity ? "I" : "") << '/'
               << p.shift_step << '/' << p.group_offset;
        }
    }
    if (raw_payload) {
        os << "  payload=" << m.payload;
    } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(bits_float(m.payload)));
        os << "  payload=" << buf;
    }
    return os.str();
}

} // namespace mavec
