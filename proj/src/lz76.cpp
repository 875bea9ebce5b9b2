#include <algorithm>

#include "kprobe/codec.hpp"
#include "kprobe/error.hpp"

namespace kprobe::codec {

Bytes unpack_bits(std::span<const std::uint8_t> bytes) {
    Bytes bits(bytes.size() * 8);
    for (std::size_t i = 0; i < bytes.size(); ++i)
        for (unsigned b = 0; b < 8; ++b) bits[i * 8 + b] = (bytes[i] >> (7 - b)) & 1u;
    return bits;
}

std::size_t lz76_phrase_count(std::span<const std::uint8_t> symbols) {
    // Each phrase is the longest prefix reproducible from the history
    // (copy source may overlap the phrase) plus one innovation symbol; the
    // final phrase may end without an innovation.
    const auto lpf = longest_previous_factor(symbols);
    std::size_t phrases = 0;
    for (std::size_t pos = 0; pos < symbols.size(); ++phrases)
        pos += std::min<std::size_t>(std::size_t{lpf[pos]} + 1, symbols.size() - pos);
    return phrases;
}

} // namespace kprobe::codec
