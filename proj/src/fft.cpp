#include <cmath>
#include <numbers>

#include "kprobe/codec.hpp"
#include "kprobe/error.hpp"

namespace kprobe::codec {

void fft_in_place(std::span<std::complex<double>> data) {
    const std::size_t n = data.size();
    if (n == 0 || (n & (n - 1)) != 0) throw Error(ErrorCode::InvalidLength, "FFT length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> step(std::cos(angle), std::sin(angle));
        for (std::size_t start = 0; start < n; start += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = data[start + k];
                const auto v = data[start + k + len / 2] * w;
                data[start + k] = u + v;
                data[start + k + len / 2] = u - v;
                w *= step;
            }
        }
    }
}

} // namespace kprobe::codec
