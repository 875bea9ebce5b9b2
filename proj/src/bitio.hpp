#pragma once

// LSB-first bit packing shared by the DEFLATE and block-sorting codecs.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kprobe/error.hpp"

namespace kprobe::codec::detail {

class BitWriter {
public:
    void put(std::uint32_t bits, unsigned count) {
        acc_ |= static_cast<std::uint64_t>(bits) << fill_;
        fill_ += count;
        while (fill_ >= 8) {
            out_.push_back(static_cast<std::uint8_t>(acc_));
            acc_ >>= 8;
            fill_ -= 8;
        }
    }

    void align_to_byte() {
        if (fill_ > 0) put(0, 8 - fill_);
    }

    void put_byte_aligned(std::span<const std::uint8_t> bytes) {
        align_to_byte();
        out_.insert(out_.end(), bytes.begin(), bytes.end());
    }

    std::size_t bit_count() const { return out_.size() * 8 + fill_; }

    std::vector<std::uint8_t> finish() {
        align_to_byte();
        return std::move(out_);
    }

private:
    std::vector<std::uint8_t> out_;
    std::uint64_t acc_ = 0;
    unsigned fill_ = 0;
};

class BitReader {
public:
    explicit BitReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint32_t get(unsigned count) {
        std::uint32_t v = 0;
        for (unsigned i = 0; i < count; ++i) v |= static_cast<std::uint32_t>(bit()) << i;
        return v;
    }

    unsigned bit() {
        if (pos_ >= in_.size() * 8) throw Error(ErrorCode::CorruptData, "unexpected end of stream");
        const unsigned b = (in_[pos_ >> 3] >> (pos_ & 7)) & 1u;
        ++pos_;
        return b;
    }

    void align_to_byte() { pos_ = (pos_ + 7) & ~std::size_t{7}; }

    std::size_t byte_position() const { return pos_ >> 3; }
    void skip_bytes(std::size_t n) { pos_ += n * 8; }
    std::span<const std::uint8_t> source() const { return in_; }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

} // namespace kprobe::codec::detail
