#pragma once

// The streaming probe: filter -> sample -> partition -> estimate -> map.
// The input stream itself is never modified; analysis runs on a derived copy.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kprobe/estimators.hpp"
#include "kprobe/semantic_type.hpp"

namespace kprobe {

class DiscriminantModel;

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::size_t kMinWindowSize = 16;
inline constexpr std::size_t kMaxWindowSize = 256 * 1024;
inline constexpr std::size_t kDefaultWindowSize = 4096;
inline constexpr std::size_t kSampleBlockSize = 4096;

enum class FilterMode { None, HeaderOnly, PayloadOnly };

/// Fixed-size record split: each record_len-byte record starts with a
/// header_len-byte header.
struct FilterSpec {
    FilterMode mode = FilterMode::None;
    std::size_t header_len = 0;
    std::size_t record_len = 0;

    void validate() const; // Error(InvalidConfig)
    friend bool operator==(const FilterSpec&, const FilterSpec&) = default;
};

enum class OutputMode { PerWindowVector, SingleType };

struct ProbeConfig {
    FilterSpec filter;
    double sampling_rate = 1.0;
    std::size_t window_size = kDefaultWindowSize;
    std::vector<EstimatorId> estimators{EstimatorId::H, EstimatorId::LZ, EstimatorId::ZIP, EstimatorId::BZ,
                                        EstimatorId::PSI};
    OutputMode output_mode = OutputMode::PerWindowVector;

    /// Checks ranges, rejects empty or duplicate estimator lists and ids with
    /// no registered implementation. Throws Error(InvalidConfig) or
    /// Error(UnknownEstimator).
    void validate(const EstimatorRegistry& registry = EstimatorRegistry::builtin()) const;
    friend bool operator==(const ProbeConfig&, const ProbeConfig&) = default;
};

std::string_view to_string(FilterMode mode) noexcept;
std::string_view to_string(OutputMode mode) noexcept;
FilterMode parse_filter_mode(std::string_view s);
OutputMode parse_output_mode(std::string_view s);

nlohmann::json to_json(const ProbeConfig& config);
ProbeConfig probe_config_from_json(const nlohmann::json& j);

struct MapRecord {
    std::size_t window_index = 0;
    std::size_t offset = 0; // into the filtered, sampled stream
    std::size_t length = 0;
    std::vector<ComplexityEstimate> estimates; // config estimator order
    std::optional<SemanticType> predicted_type;
};

struct ComplexityMap {
    std::string source_id;
    ProbeConfig config;
    std::vector<MapRecord> records;
    std::optional<SemanticType> file_type; // single_type output only
    std::size_t input_bytes = 0;            // before filtering and sampling
    std::size_t analyzed_bytes = 0;         // after filtering and sampling
    double processing_us = 0.0;
};

// Pipeline stages as pure functions over whole buffers.
std::vector<ByteWindow> partition(std::span<const std::uint8_t> stream, std::size_t window_size);
Bytes apply_filter(std::span<const std::uint8_t> stream, const FilterSpec& filter);
Bytes sample(std::span<const std::uint8_t> stream, double rate);

struct ProbeOptions {
    unsigned jobs = 0; // 0: hardware concurrency
    const EstimatorRegistry* registry = nullptr;
};

ComplexityMap build_map(std::span<const std::uint8_t> stream, const ProbeConfig& config,
                        const DiscriminantModel* model = nullptr, const ProbeOptions& options = {},
                        std::string source_id = {});

/// Streams `in` through the probe. Every byte read is written unchanged to
/// `passthrough` (when given) before analysis.
ComplexityMap run_probe(std::istream& in, std::ostream* passthrough, const ProbeConfig& config,
                        const DiscriminantModel* model = nullptr, const ProbeOptions& options = {},
                        std::string source_id = {});

struct MapFormat {
    bool include_timing = false;
};

/// `window_index,offset,length,<estimator>...[,predicted_type]`, six decimals.
std::string map_to_csv(const ComplexityMap& map, const MapFormat& format = {});
nlohmann::json map_to_json(const ComplexityMap& map, const MapFormat& format = {});

} // namespace kprobe
