#include <doctest.h>

#include <string>

#include "kprobe/codec.hpp"
#include "kprobe/error.hpp"
#include "test_support.hpp"

using namespace kprobe;
using testsupport::Bytes;

namespace {

Bytes as_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

} // namespace

TEST_CASE("deflate round-trips through its own decoder and through zlib") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const std::size_t n = 1 + (seed * 7919) % 70000;
        const Bytes input = seed % 3 == 0 ? testsupport::random_bytes(n, seed) : testsupport::fuzz_bytes(n, seed);
        for (int effort : {0, 1, 4, 6, 9}) {
            const auto packed = codec::deflate_compress(input, effort);
            CHECK(codec::deflate_decompress(packed) == input);
            CHECK(testsupport::zlib_inflate_raw(packed, input.size()) == input);
        }
    }
}

TEST_CASE("deflate handles empty and tiny inputs") {
    const Bytes empty;
    const auto packed = codec::deflate_compress(empty);
    CHECK(codec::deflate_decompress(packed).empty());
    CHECK(testsupport::zlib_inflate_raw(packed, 0).empty());
    const Bytes one{0x42};
    CHECK(codec::deflate_decompress(codec::deflate_compress(one)) == one);
}

TEST_CASE("deflate ratio tracks the zlib reference compressor") {
    // Frozen with the reference: zlib raw deflate of 4096 zero bytes is 20
    // bytes (ratio 0.0049).
    const Bytes zeros(4096, 0);
    CHECK(testsupport::zlib_deflate_raw_size(zeros) == 20);
    CHECK(codec::deflate_compress(zeros).size() * 8.0 / (4096 * 8) <= 0.05);

    for (std::uint64_t seed = 1; seed < 6; ++seed) {
        const Bytes text = testsupport::fuzz_bytes(32768, seed);
        const double ours = static_cast<double>(codec::deflate_compress(text, 9).size());
        const double ref = static_cast<double>(testsupport::zlib_deflate_raw_size(text, 9));
        CHECK(ours <= ref * 1.10 + 16);
    }
}

TEST_CASE("deflate decoder rejects malformed streams") {
    const Bytes reserved{0x07}; // final block, type 3
    CHECK_THROWS_AS(codec::deflate_decompress(reserved), Error);
    const Bytes truncated{0x01, 0x05, 0x00};
    CHECK_THROWS_AS(codec::deflate_decompress(truncated), Error);
}

TEST_CASE("higher deflate effort never loses to effort zero on structured data") {
    const Bytes data = testsupport::fuzz_bytes(65536, 77);
    CHECK(codec::deflate_compress(data, 9).size() <= codec::deflate_compress(data, 0).size());
}

TEST_CASE("BWT of banana and its inverse") {
    const Bytes banana = as_bytes("banana");
    const auto bwt = codec::bwt_forward(banana);
    // Sorted rotations: abanan, anaban, ananab, banana, nabana, nanaba.
    CHECK(bwt.last_column == as_bytes("nnbaaa"));
    CHECK(bwt.primary_index == 3);
    CHECK(codec::bwt_inverse(bwt.last_column, bwt.primary_index) == banana);
}

TEST_CASE("BWT inverts periodic and degenerate inputs") {
    for (const std::string s : {"a", "aaaa", "abab", "abcabcabc", "abababababab"}) {
        const Bytes in = as_bytes(s);
        const auto bwt = codec::bwt_forward(in);
        CHECK(codec::bwt_inverse(bwt.last_column, bwt.primary_index) == in);
    }
    CHECK_THROWS_AS(codec::bwt_inverse(as_bytes("ab"), 5), Error);
}

TEST_CASE("block-sort codec round-trips with and without the transform") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const std::size_t n = 1 + (seed * 104729) % 40000;
        const Bytes input = seed % 4 == 0 ? testsupport::random_bytes(n, seed) : testsupport::fuzz_bytes(n, seed);
        CHECK(codec::blocksort_decompress(codec::blocksort_compress(input, true)) == input);
        CHECK(codec::blocksort_decompress(codec::blocksort_compress(input, false)) == input);
    }
    CHECK(codec::blocksort_decompress(codec::blocksort_compress(Bytes{}, true)).empty());
}

TEST_CASE("suffix array matches naive suffix sort") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        Bytes text = testsupport::fuzz_bytes(1 + seed * 13, seed);
        for (auto& b : text) b %= 3;
        const auto sa = codec::suffix_array(text);
        std::vector<std::uint32_t> naive(text.size());
        for (std::uint32_t i = 0; i < naive.size(); ++i) naive[i] = i;
        std::sort(naive.begin(), naive.end(), [&](std::uint32_t a, std::uint32_t b) {
            return std::lexicographical_compare(text.begin() + a, text.end(), text.begin() + b, text.end());
        });
        CHECK(sa == naive);
    }
}

TEST_CASE("longest previous factor matches brute force") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        Bytes text = testsupport::random_bytes(1 + seed % 50, seed);
        for (auto& b : text) b &= 1;
        const auto lpf = codec::longest_previous_factor(text);
        for (std::size_t i = 0; i < text.size(); ++i) {
            std::size_t best = 0;
            for (std::size_t j = 0; j < i; ++j) {
                std::size_t l = 0;
                while (i + l < text.size() && text[j + l] == text[i + l]) ++l;
                best = std::max(best, l);
            }
            CHECK(lpf[i] == best);
        }
    }
}

TEST_CASE("LZ76 phrase counts on the reference examples") {
    CHECK(codec::lz76_phrase_count(codec::unpack_bits(Bytes{0x00})) == 2);
    CHECK(testsupport::lz76_oracle(codec::unpack_bits(Bytes{0x00})) == 2);
    const auto seq = testsupport::bits_from_string("0001101001000101");
    CHECK(testsupport::lz76_oracle(seq) == 6);
    CHECK(codec::lz76_phrase_count(seq) == 6);
    CHECK(codec::lz76_phrase_count(Bytes{}) == 0);
}

TEST_CASE("LZ76 phrase counts agree with the exhaustive-parse oracle") {
    kprobe::Xoshiro256 rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.below(64);
        const unsigned bias = static_cast<unsigned>(rng.below(4)); // vary the density of ones
        std::vector<std::uint8_t> bits(n);
        for (auto& b : bits) b = rng.below(4) <= bias ? 1 : 0;
        CHECK(codec::lz76_phrase_count(bits) == testsupport::lz76_oracle(bits));
    }
}

TEST_CASE("unpack_bits is MSB first") {
    const auto bits = codec::unpack_bits(Bytes{0x81});
    CHECK(bits == Bytes{1, 0, 0, 0, 0, 0, 0, 1});
}

TEST_CASE("FFT matches a naive DFT") {
    const Bytes src = testsupport::random_bytes(64, 5);
    std::vector<double> x(src.begin(), src.end());
    std::vector<std::complex<double>> data(x.begin(), x.end());
    codec::fft_in_place(data);
    const auto ref = testsupport::naive_dft(x);
    for (std::size_t k = 0; k < x.size(); ++k) {
        CHECK(std::abs(data[k] - ref[k]) < 1e-8);
    }
    std::vector<std::complex<double>> bad(6);
    CHECK_THROWS_AS(codec::fft_in_place(bad), Error);
}
