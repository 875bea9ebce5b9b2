#include "kprobe/estimators.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <complex>

#include "kprobe/codec.hpp"
#include "kprobe/error.hpp"

namespace kprobe {

std::string_view to_string(EstimatorId id) noexcept {
    switch (id) {
    case EstimatorId::H: return "H";
    case EstimatorId::LZ: return "LZ";
    case EstimatorId::ZIP: return "ZIP";
    case EstimatorId::BZ: return "BZ";
    case EstimatorId::PSI: return "PSI";
    case EstimatorId::OSCR: return "OSCR";
    }
    return "?";
}

EstimatorId parse_estimator(std::string_view name) {
    std::string upper(name);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (upper == "H") return EstimatorId::H;
    if (upper == "LZ") return EstimatorId::LZ;
    if (upper == "ZIP" || upper == "Z") return EstimatorId::ZIP;
    if (upper == "BZ" || upper == "BZIP") return EstimatorId::BZ;
    if (upper == "PSI") return EstimatorId::PSI;
    if (upper == "OSCR") return EstimatorId::OSCR;
    throw Error(ErrorCode::UnknownEstimator,
                "'" + std::string(name) + "' is not an estimator (valid: H, LZ, ZIP, BZ, PSI)");
}

std::vector<EstimatorId> parse_estimator_list(std::string_view csv) {
    std::vector<EstimatorId> ids;
    std::size_t start = 0;
    while (start <= csv.size()) {
        const std::size_t comma = std::min(csv.find(',', start), csv.size());
        auto token = csv.substr(start, comma - start);
        while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
        while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
        if (!token.empty()) ids.push_back(parse_estimator(token));
        start = comma + 1;
    }
    return ids;
}

std::string format_estimator_list(std::span<const EstimatorId> ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ',';
        out += to_string(ids[i]);
    }
    return out;
}

namespace {

void require_payload(const ByteWindow& w) {
    if (w.payload.empty()) throw Error(ErrorCode::EmptyInput, "window payload is empty");
}

ComplexityEstimate make_estimate(EstimatorId id, const ByteWindow& w, double value, std::uint64_t raw_bits) {
    ComplexityEstimate e;
    e.estimator = id;
    e.value = std::clamp(value, 0.0, 1.0);
    e.raw_output_bits = raw_bits;
    e.input_bits = 8ull * w.payload.size();
    return e;
}

double ratio(std::uint64_t out_bits, std::uint64_t in_bits) {
    return static_cast<double>(out_bits) / static_cast<double>(in_bits);
}

} // namespace

ComplexityEstimate estimate_entropy(const ByteWindow& window) {
    require_payload(window);
    std::uint64_t ones = 0;
    for (auto b : window.payload) ones += static_cast<std::uint64_t>(std::popcount(b));
    const std::uint64_t n = 8ull * window.payload.size();
    const std::uint64_t zeros = n - ones;
    // p and q are both formed by division so that swapping them (bitwise NOT
    // of the payload) gives a bit-identical sum.
    auto term = [n](std::uint64_t k) {
        if (k == 0 || k == n) return 0.0;
        const double p = static_cast<double>(k) / static_cast<double>(n);
        return -p * std::log2(p);
    };
    const double h = term(ones) + term(zeros);
    return make_estimate(EstimatorId::H, window, h, static_cast<std::uint64_t>(std::llround(std::clamp(h, 0.0, 1.0) * static_cast<double>(n))));
}

ComplexityEstimate estimate_lz(const ByteWindow& window) {
    require_payload(window);
    const auto bits = codec::unpack_bits(window.payload);
    const std::size_t n = bits.size();
    const std::size_t c = codec::lz76_phrase_count(bits);
    const double log_n = std::log2(static_cast<double>(n));
    const double value = static_cast<double>(c) * log_n / static_cast<double>(n);
    const auto bits_per_phrase = static_cast<std::uint64_t>(std::ceil(log_n));
    return make_estimate(EstimatorId::LZ, window, value, c * bits_per_phrase);
}

ComplexityEstimate estimate_zip(const ByteWindow& window, int effort) {
    require_payload(window);
    if (effort < codec::kDeflateMinEffort || effort > codec::kDeflateMaxEffort)
        throw Error(ErrorCode::InvalidConfig, "ZIP effort must be in [0,9]");
    const auto packed = codec::deflate_compress(window.payload, effort);
    const std::uint64_t raw = 8ull * packed.size();
    return make_estimate(EstimatorId::ZIP, window, ratio(raw, 8ull * window.payload.size()), raw);
}

ComplexityEstimate estimate_zip(const ByteWindow& window) {
    return estimate_zip(window, codec::kDeflateDefaultEffort);
}

ComplexityEstimate estimate_bzip(const ByteWindow& window, int effort) {
    require_payload(window);
    if (effort != 0 && effort != 1) throw Error(ErrorCode::InvalidConfig, "BZ effort must be 0 or 1");
    const auto packed = codec::blocksort_compress(window.payload, effort == 1);
    const std::uint64_t raw = 8ull * packed.size();
    return make_estimate(EstimatorId::BZ, window, ratio(raw, 8ull * window.payload.size()), raw);
}

ComplexityEstimate estimate_bzip(const ByteWindow& window) { return estimate_bzip(window, 1); }

ComplexityEstimate estimate_psi(const ByteWindow& window) {
    require_payload(window);
    const std::size_t len = window.payload.size();
    double mean = 0.0;
    for (auto b : window.payload) mean += b;
    mean /= static_cast<double>(len);

    const std::size_t n = std::bit_ceil(len);
    std::vector<std::complex<double>> signal(n);
    for (std::size_t i = 0; i < len; ++i) signal[i] = window.payload[i] - mean;
    double value = 0.0;
    const std::size_t bins = n / 2; // positive frequencies 1..n/2
    if (bins >= 2) {
        codec::fft_in_place(signal);
        std::vector<double> power(bins);
        double total = 0.0;
        for (std::size_t k = 1; k <= bins; ++k) {
            power[k - 1] = std::norm(signal[k]);
            total += power[k - 1];
        }
        // Zero spectrum (constant payload) is defined as zero complexity.
        if (total > 1e-9) {
            double h = 0.0;
            for (double p : power) {
                const double q = p / total;
                if (q > 0.0) h -= q * std::log2(q);
            }
            value = h / std::log2(static_cast<double>(bins));
        }
    }
    const double clamped = std::clamp(value, 0.0, 1.0);
    return make_estimate(EstimatorId::PSI, window, clamped,
                         static_cast<std::uint64_t>(std::llround(clamped * 8.0 * static_cast<double>(len))));
}

ComplexityEstimate Estimator::estimate_at_effort(const ByteWindow&, int) const {
    throw Error(ErrorCode::Unsupported, "estimator " + std::string(to_string(id())) + " has no effort levels");
}

namespace {

class EntropyEstimator final : public Estimator {
public:
    EstimatorId id() const override { return EstimatorId::H; }
    ComplexityEstimate estimate(const ByteWindow& w) const override { return estimate_entropy(w); }
};

class LzEstimator final : public Estimator {
public:
    EstimatorId id() const override { return EstimatorId::LZ; }
    ComplexityEstimate estimate(const ByteWindow& w) const override { return estimate_lz(w); }
};

class ZipEstimator final : public Estimator {
public:
    EstimatorId id() const override { return EstimatorId::ZIP; }
    ComplexityEstimate estimate(const ByteWindow& w) const override { return estimate_zip(w); }
    std::vector<int> effort_levels() const override { return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}; }
    ComplexityEstimate estimate_at_effort(const ByteWindow& w, int effort) const override {
        return estimate_zip(w, effort);
    }
};

class BzipEstimator final : public Estimator {
public:
    EstimatorId id() const override { return EstimatorId::BZ; }
    ComplexityEstimate estimate(const ByteWindow& w) const override { return estimate_bzip(w); }
    std::vector<int> effort_levels() const override { return {0, 1}; }
    ComplexityEstimate estimate_at_effort(const ByteWindow& w, int effort) const override {
        return estimate_bzip(w, effort);
    }
};

class PsiEstimator final : public Estimator {
public:
    EstimatorId id() const override { return EstimatorId::PSI; }
    ComplexityEstimate estimate(const ByteWindow& w) const override { return estimate_psi(w); }
};

} // namespace

void EstimatorRegistry::add(std::unique_ptr<Estimator> estimator) {
    const EstimatorId id = estimator->id();
    entries_[id] = std::shared_ptr<const Estimator>(std::move(estimator));
}

bool EstimatorRegistry::contains(EstimatorId id) const { return entries_.count(id) != 0; }

const Estimator& EstimatorRegistry::at(EstimatorId id) const {
    const auto it = entries_.find(id);
    if (it == entries_.end())
        throw Error(ErrorCode::UnknownEstimator, "no implementation registered for " + std::string(to_string(id)));
    return *it->second;
}

std::vector<EstimatorId> EstimatorRegistry::ids() const {
    std::vector<EstimatorId> out;
    for (const auto& [id, _] : entries_) out.push_back(id);
    return out;
}

const EstimatorRegistry& EstimatorRegistry::builtin() {
    static const EstimatorRegistry registry = [] {
        EstimatorRegistry r;
        r.add(std::make_unique<EntropyEstimator>());
        r.add(std::make_unique<LzEstimator>());
        r.add(std::make_unique<ZipEstimator>());
        r.add(std::make_unique<BzipEstimator>());
        r.add(std::make_unique<PsiEstimator>());
        return r;
    }();
    return registry;
}

ComplexityEstimate run_estimator(EstimatorId id, const ByteWindow& window, const EstimatorRegistry& registry) {
    const Estimator& impl = registry.at(id);
    const auto start = std::chrono::steady_clock::now();
    ComplexityEstimate e = impl.estimate(window);
    const auto stop = std::chrono::steady_clock::now();
    e.estimator = id;
    e.elapsed_us = std::chrono::duration<double, std::micro>(stop - start).count();
    return e;
}

double occam_likelihood_ratio(double l_x, double l_m) {
    if (!(l_x >= 0.0) || !(l_m >= 0.0))
        throw Error(ErrorCode::InvalidLength, "description lengths must be non-negative");
    return std::exp2(l_x - l_m);
}

} // namespace kprobe
