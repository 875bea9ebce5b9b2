#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kprobe {

/// Plug-in estimator identifiers. OSCR is reserved: it parses, but no
/// implementation is registered for it.
enum class EstimatorId { H, LZ, ZIP, BZ, PSI, OSCR };

std::string_view to_string(EstimatorId id) noexcept;

/// Case-insensitive; accepts the short aliases "Z" (ZIP) and "BZIP" (BZ).
/// Throws Error(UnknownEstimator) for anything else.
EstimatorId parse_estimator(std::string_view name);

/// Comma-separated list, order preserved.
std::vector<EstimatorId> parse_estimator_list(std::string_view csv);
std::string format_estimator_list(std::span<const EstimatorId> ids);

/// A contiguous slice of the input stream. The payload is borrowed.
struct ByteWindow {
    std::size_t offset = 0;
    std::span<const std::uint8_t> payload;
};

struct ComplexityEstimate {
    EstimatorId estimator = EstimatorId::H;
    double value = 0.0;              // normalized, clamped to [0,1]
    std::uint64_t raw_output_bits = 0;
    std::uint64_t input_bits = 0;
    double elapsed_us = 0.0;         // only set by run_estimator
};

ComplexityEstimate estimate_entropy(const ByteWindow& window);
ComplexityEstimate estimate_lz(const ByteWindow& window);
ComplexityEstimate estimate_zip(const ByteWindow& window, int effort);
ComplexityEstimate estimate_zip(const ByteWindow& window);
ComplexityEstimate estimate_bzip(const ByteWindow& window, int effort);
ComplexityEstimate estimate_bzip(const ByteWindow& window);
ComplexityEstimate estimate_psi(const ByteWindow& window);

/// Interface every plug-in estimator implements. Implementations must be
/// stateless: `estimate` is called concurrently on distinct windows.
class Estimator {
public:
    virtual ~Estimator() = default;
    virtual EstimatorId id() const = 0;
    virtual ComplexityEstimate estimate(const ByteWindow& window) const = 0;

    /// Effort knobs for the accuracy-vs-compression study. Empty when the
    /// estimator has no tunable effort.
    virtual std::vector<int> effort_levels() const { return {}; }
    virtual ComplexityEstimate estimate_at_effort(const ByteWindow& window, int effort) const;
};

/// Maps ids to implementations. Built once, then only read.
class EstimatorRegistry {
public:
    void add(std::unique_ptr<Estimator> estimator);
    bool contains(EstimatorId id) const;
    const Estimator& at(EstimatorId id) const; // Error(UnknownEstimator) when absent
    std::vector<EstimatorId> ids() const;

    /// H, LZ, ZIP, BZ and PSI.
    static const EstimatorRegistry& builtin();

private:
    std::map<EstimatorId, std::shared_ptr<const Estimator>> entries_;
};

/// Dispatches to the registered implementation and times the call.
ComplexityEstimate run_estimator(EstimatorId id, const ByteWindow& window,
                                 const EstimatorRegistry& registry = EstimatorRegistry::builtin());

/// 2^(l_x - l_m) evaluated through exp2 of the difference; overflows to +inf
/// only when the true ratio is outside double range.
double occam_likelihood_ratio(double l_x, double l_m);

} // namespace kprobe
