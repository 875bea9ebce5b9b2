#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bitio.hpp"

namespace kprobe::codec::detail {

/// Code lengths for `freqs`, none longer than `max_len`. Symbols with zero
/// frequency get length 0. A single used symbol gets length 1.
std::vector<std::uint8_t> huffman_lengths(std::span<const std::uint32_t> freqs, unsigned max_len);

/// Canonical codes, already bit-reversed for LSB-first emission.
std::vector<std::uint32_t> canonical_codes(std::span<const std::uint8_t> lengths);

/// Canonical decoder in the style of zlib's puff: one bit at a time.
class HuffmanDecoder {
public:
    HuffmanDecoder() = default;
    /// Throws Error(CorruptData) if the lengths over-subscribe the code space.
    explicit HuffmanDecoder(std::span<const std::uint8_t> lengths);

    int decode(BitReader& in) const;

private:
    std::vector<std::uint16_t> count_;  // codes per length
    std::vector<std::uint16_t> symbol_; // symbols ordered by code
};

} // namespace kprobe::codec::detail
