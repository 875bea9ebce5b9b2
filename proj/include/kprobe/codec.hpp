#pragma once

// Lossless codecs and transforms backing the compression-based estimators.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace kprobe::codec {

using Bytes = std::vector<std::uint8_t>;

// ---------------------------------------------------------------------------
// DEFLATE (raw RFC 1951 stream, no zlib/gzip container)
// ---------------------------------------------------------------------------

inline constexpr int kDeflateMinEffort = 0; // Huffman-only, no match search
inline constexpr int kDeflateMaxEffort = 9;
inline constexpr int kDeflateDefaultEffort = 6;

/// Compresses `input` into a raw DEFLATE stream. `effort` selects the match
/// search depth (0 disables LZ77 matching entirely).
Bytes deflate_compress(std::span<const std::uint8_t> input, int effort = kDeflateDefaultEffort);

/// Decodes a raw DEFLATE stream. Throws Error(CorruptData) on malformed input.
Bytes deflate_decompress(std::span<const std::uint8_t> stream);

// ---------------------------------------------------------------------------
// Block sorting (BWT -> MTF -> zero-run coding -> Huffman)
// ---------------------------------------------------------------------------

struct BwtResult {
    Bytes last_column;
    std::size_t primary_index = 0; // row of the original rotation in sorted order
};

BwtResult bwt_forward(std::span<const std::uint8_t> input);
Bytes bwt_inverse(std::span<const std::uint8_t> last_column, std::size_t primary_index);

/// `use_transform=false` skips the BWT stage (the low-effort setting).
Bytes blocksort_compress(std::span<const std::uint8_t> input, bool use_transform = true);
Bytes blocksort_decompress(std::span<const std::uint8_t> stream);

// ---------------------------------------------------------------------------
// Sorting primitives
// ---------------------------------------------------------------------------

/// Sorted order of all cyclic rotations of `symbols` (prefix doubling,
/// O(n log n)). Identical rotations keep an arbitrary but deterministic order.
std::vector<std::uint32_t> sort_rotations(std::span<const std::uint32_t> symbols);

/// Suffix array of a byte string.
std::vector<std::uint32_t> suffix_array(std::span<const std::uint8_t> text);

/// Longest previous factor: for each i, the length of the longest prefix of
/// text[i..] that also starts at some j < i (overlap allowed).
std::vector<std::uint32_t> longest_previous_factor(std::span<const std::uint8_t> text);

// ---------------------------------------------------------------------------
// LZ76
// ---------------------------------------------------------------------------

/// Expands bytes to one symbol (0/1) per bit, most significant bit first.
Bytes unpack_bits(std::span<const std::uint8_t> bytes);

/// Number of phrases in the exhaustive production history of `symbols`.
std::size_t lz76_phrase_count(std::span<const std::uint8_t> symbols);

// ---------------------------------------------------------------------------
// Spectral
// ---------------------------------------------------------------------------

/// In-place iterative radix-2 FFT. `data.size()` must be a power of two.
void fft_in_place(std::span<std::complex<double>> data);

} // namespace kprobe::codec
