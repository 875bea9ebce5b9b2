#pragma once

// Labeled sample sets: directory scans, manifests, stratified splits,
// synthetic generators and payload splicing.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kprobe/semantic_type.hpp"

namespace kprobe {

using Bytes = std::vector<std::uint8_t>;

inline constexpr int kManifestVersion = 1;
/// Fewer samples per type than this triggers a scan warning.
inline constexpr std::size_t kMinSamplesPerType = 10;
inline constexpr std::size_t kDefaultSyntheticLength = 64 * 1024;

enum class SyntheticKind { RandomBytes, RepeatedPattern, MarkovText, PcmSineMix, StructuredBinary };

inline constexpr SyntheticKind kAllSyntheticKinds[] = {SyntheticKind::RandomBytes, SyntheticKind::RepeatedPattern,
                                                      SyntheticKind::MarkovText, SyntheticKind::PcmSineMix,
                                                      SyntheticKind::StructuredBinary};

std::string_view to_string(SyntheticKind kind) noexcept;
SyntheticKind parse_synthetic_kind(std::string_view s); // Error(InvalidSpec)

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::RandomBytes;
    std::size_t length = kDefaultSyntheticLength;
    std::uint64_t seed = 0;

    /// "synth:<kind>:<length>:<seed>"
    std::string id() const;
    static bool is_id(std::string_view s) noexcept;
    static SyntheticSpec parse_id(std::string_view s); // Error(InvalidSpec)
};

/// Byte-identical output for identical specs. Error(InvalidSpec) for length 0.
Bytes generate_synthetic(const SyntheticSpec& spec);

enum class SplitTag { Unassigned, Train, Test };
std::string_view to_string(SplitTag tag) noexcept;

struct ManifestEntry {
    std::string source; // file path, or a synthetic id
    SemanticType label;
    SplitTag split = SplitTag::Unassigned;
    std::size_t length = 0;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::uint64_t seed = 0;
    /// Relative file paths resolve against this directory.
    std::filesystem::path base_dir;
};

/// One entry per regular file in each `<root>/<Type>/` directory. Types with
/// fewer than kMinSamplesPerType files and unreadable files produce warnings;
/// unreadable or empty files are skipped. Error(IoError) when root is missing,
/// Error(UnknownType) for a directory name the registry does not know.
Manifest scan_corpus(const std::filesystem::path& root, std::vector<std::string>* warnings = nullptr,
                     const TypeRegistry& registry = TypeRegistry::with_defaults());

/// Stratified per label: round(test_fraction * n) entries, at least one and at
/// most n - 1, go to the test side. Deterministic given the seed.
std::pair<Manifest, Manifest> split(const Manifest& manifest, double test_fraction, std::uint64_t seed);

/// `per_kind` samples of each kind, labeled with the kind name.
Manifest synthetic_corpus(std::size_t per_kind, std::size_t length, std::uint64_t seed,
                          std::span<const SyntheticKind> kinds = kAllSyntheticKinds);

Bytes load_entry(const Manifest& manifest, const ManifestEntry& entry); // Error(IoError)
Bytes read_file(const std::filesystem::path& path);                     // Error(IoError)

/// JSON lines: a header line, then one entry per line. File paths are written
/// relative to the manifest's directory.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

struct SpliceResult {
    Bytes data;
    std::size_t span_begin = 0;
    std::size_t span_end = 0; // exclusive
};

/// Overwrites container[offset, offset + payload.size()) with the payload.
/// Error(InvalidSpan) when the payload does not fit.
SpliceResult splice(std::span<const std::uint8_t> container, std::span<const std::uint8_t> payload,
                    std::size_t offset);

} // namespace kprobe
