#include <algorithm>
#include <array>

#include "bitio.hpp"
#include "huffman.hpp"
#include "kprobe/codec.hpp"

// Stream layout (all fields LSB-first through BitWriter):
//   varint   length
//   8 bits   flags (bit 0: BWT applied)
//   varint   primary index            (only when BWT applied and length > 0)
//   16 bits  group mask, then 16 bits per set group: byte-value usage bitmap
//   5 bits   first code length, then bzip2-style delta code per symbol
//   Huffman-coded MTF/zero-run symbols terminated by EOB
// Symbol alphabet: RUNA=0, RUNB=1, MTF index k>=1 -> k+1, EOB = used+1.

namespace kprobe::codec {

using detail::BitReader;
using detail::BitWriter;

namespace {

constexpr unsigned kRunA = 0;
constexpr unsigned kRunB = 1;
constexpr unsigned kMaxCodeLength = 17;

void put_varint(BitWriter& out, std::uint64_t v) {
    do {
        std::uint32_t byte = v & 0x7F;
        v >>= 7;
        if (v) byte |= 0x80;
        out.put(byte, 8);
    } while (v);
}

std::uint64_t get_varint(BitReader& in) {
    std::uint64_t v = 0;
    for (unsigned shift = 0; shift < 64; shift += 7) {
        const std::uint32_t byte = in.get(8);
        v |= std::uint64_t{byte & 0x7F} << shift;
        if (!(byte & 0x80)) return v;
    }
    throw Error(ErrorCode::CorruptData, "varint too long");
}

void put_zero_run(std::vector<std::uint16_t>& symbols, std::size_t run) {
    // Bijective base-2 with digits RUNA=1, RUNB=2, least significant first.
    while (run > 0) {
        if (run & 1) {
            symbols.push_back(kRunA);
            run = (run - 1) / 2;
        } else {
            symbols.push_back(kRunB);
            run = (run - 2) / 2;
        }
    }
}

} // namespace

BwtResult bwt_forward(std::span<const std::uint8_t> input) {
    BwtResult r;
    const std::size_t n = input.size();
    if (n == 0) return r;
    std::vector<std::uint32_t> symbols(input.begin(), input.end());
    const auto order = sort_rotations(symbols);
    r.last_column.resize(n);
    for (std::size_t row = 0; row < n; ++row) {
        const std::size_t start = order[row];
        r.last_column[row] = input[(start + n - 1) % n];
        if (start == 0) r.primary_index = row;
    }
    return r;
}

Bytes bwt_inverse(std::span<const std::uint8_t> last_column, std::size_t primary_index) {
    const std::size_t n = last_column.size();
    if (n == 0) return {};
    if (primary_index >= n) throw Error(ErrorCode::CorruptData, "BWT primary index out of range");

    std::array<std::size_t, 257> first{};
    for (auto c : last_column) ++first[std::size_t{c} + 1];
    for (std::size_t c = 1; c <= 256; ++c) first[c] += first[c - 1];

    std::vector<std::uint32_t> lf(n);
    std::array<std::size_t, 256> seen{};
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = last_column[i];
        lf[i] = static_cast<std::uint32_t>(first[c] + seen[c]++);
    }
    // Walking n steps (not "until back at the start") also reconstructs
    // periodic inputs, whose LF cycle is shorter than n.
    Bytes out(n);
    std::size_t row = primary_index;
    for (std::size_t k = n; k-- > 0;) {
        out[k] = last_column[row];
        row = lf[row];
    }
    return out;
}

Bytes blocksort_compress(std::span<const std::uint8_t> input, bool use_transform) {
    BitWriter out;
    put_varint(out, input.size());
    out.put(use_transform ? 1 : 0, 8);
    if (input.empty()) return out.finish();

    Bytes transformed;
    std::span<const std::uint8_t> block = input;
    if (use_transform) {
        auto bwt = bwt_forward(input);
        put_varint(out, bwt.primary_index);
        transformed = std::move(bwt.last_column);
        block = transformed;
    }

    std::array<bool, 256> used{};
    for (auto b : block) used[b] = true;
    std::vector<std::uint8_t> alphabet;
    for (unsigned v = 0; v < 256; ++v)
        if (used[v]) alphabet.push_back(static_cast<std::uint8_t>(v));

    std::uint32_t group_mask = 0;
    for (unsigned g = 0; g < 16; ++g)
        for (unsigned v = 0; v < 16; ++v)
            if (used[g * 16 + v]) group_mask |= 1u << g;
    out.put(group_mask, 16);
    for (unsigned g = 0; g < 16; ++g) {
        if (!(group_mask & (1u << g))) continue;
        std::uint32_t bits = 0;
        for (unsigned v = 0; v < 16; ++v)
            if (used[g * 16 + v]) bits |= 1u << v;
        out.put(bits, 16);
    }

    // Move-to-front with zero runs folded into RUNA/RUNB digits.
    const unsigned eob = static_cast<unsigned>(alphabet.size()) + 1;
    std::vector<std::uint16_t> symbols;
    symbols.reserve(block.size() + 1);
    std::vector<std::uint8_t> mtf = alphabet;
    std::size_t zero_run = 0;
    for (auto b : block) {
        const auto it = std::find(mtf.begin(), mtf.end(), b);
        const auto k = static_cast<std::size_t>(it - mtf.begin());
        if (k == 0) {
            ++zero_run;
            continue;
        }
        put_zero_run(symbols, zero_run);
        zero_run = 0;
        std::rotate(mtf.begin(), it, it + 1);
        symbols.push_back(static_cast<std::uint16_t>(k + 1));
    }
    put_zero_run(symbols, zero_run);
    symbols.push_back(static_cast<std::uint16_t>(eob));

    std::vector<std::uint32_t> freq(eob + 1, 0);
    for (auto s : symbols) ++freq[s];
    // Every alphabet symbol gets a code so lengths can be delta coded.
    for (auto& f : freq) f = f * 2 + 1;
    const auto lengths = detail::huffman_lengths(freq, kMaxCodeLength);
    const auto codes = detail::canonical_codes(lengths);

    unsigned cur = lengths[0];
    out.put(cur, 5);
    for (auto len : lengths) {
        while (cur < len) {
            out.put(0b01, 2); // '1' then '0': increment
            ++cur;
        }
        while (cur > len) {
            out.put(0b11, 2); // '1' then '1': decrement
            --cur;
        }
        out.put(0, 1);
    }
    for (auto s : symbols) out.put(codes[s], lengths[s]);
    return out.finish();
}

Bytes blocksort_decompress(std::span<const std::uint8_t> stream) {
    BitReader in(stream);
    const std::uint64_t n = get_varint(in);
    const std::uint32_t flags = in.get(8);
    if (flags > 1) throw Error(ErrorCode::CorruptData, "unknown block-sort flags");
    if (n == 0) return {};
    if (n > stream.size() * 8 * 64 + (std::uint64_t{1} << 24))
        throw Error(ErrorCode::CorruptData, "implausible block length");
    const bool transformed = flags & 1u;
    std::size_t primary = 0;
    if (transformed) primary = static_cast<std::size_t>(get_varint(in));

    const std::uint32_t group_mask = in.get(16);
    std::vector<std::uint8_t> alphabet;
    for (unsigned g = 0; g < 16; ++g) {
        if (!(group_mask & (1u << g))) continue;
        const std::uint32_t bits = in.get(16);
        for (unsigned v = 0; v < 16; ++v)
            if (bits & (1u << v)) alphabet.push_back(static_cast<std::uint8_t>(g * 16 + v));
    }
    if (alphabet.empty()) throw Error(ErrorCode::CorruptData, "empty alphabet");

    const unsigned eob = static_cast<unsigned>(alphabet.size()) + 1;
    std::vector<std::uint8_t> lengths(eob + 1);
    unsigned cur = in.get(5);
    for (auto& len : lengths) {
        while (in.bit()) {
            if (in.bit()) --cur;
            else ++cur;
            if (cur < 1 || cur > kMaxCodeLength) throw Error(ErrorCode::CorruptData, "bad code length");
        }
        len = static_cast<std::uint8_t>(cur);
    }
    const detail::HuffmanDecoder decoder(lengths);

    Bytes block;
    block.reserve(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> mtf = alphabet;
    std::size_t run = 0, weight = 1;
    auto flush_run = [&] {
        if (block.size() + run > n) throw Error(ErrorCode::CorruptData, "run overflows block");
        block.insert(block.end(), run, mtf[0]);
        run = 0;
        weight = 1;
    };
    for (;;) {
        const unsigned s = static_cast<unsigned>(decoder.decode(in));
        if (s == kRunA || s == kRunB) {
            run += (s == kRunA ? 1 : 2) * weight;
            weight <<= 1;
            if (run > n) throw Error(ErrorCode::CorruptData, "run too long");
            continue;
        }
        flush_run();
        if (s == eob) break;
        const std::size_t k = s - 1;
        if (k >= mtf.size()) throw Error(ErrorCode::CorruptData, "MTF index out of range");
        const std::uint8_t v = mtf[k];
        std::rotate(mtf.begin(), mtf.begin() + static_cast<std::ptrdiff_t>(k), mtf.begin() + static_cast<std::ptrdiff_t>(k) + 1);
        if (block.size() >= n) throw Error(ErrorCode::CorruptData, "block overflow");
        block.push_back(v);
    }
    if (block.size() != n) throw Error(ErrorCode::CorruptData, "block length mismatch");
    if (!transformed) return block;
    return bwt_inverse(block, primary);
}

} // namespace kprobe::codec
