#pragma once

// Measurement studies: timing versus window size and complexity, throughput
// per type, time/accuracy trade-off, accuracy versus compression effort, and
// mean complexity per estimator.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kprobe/classifier.hpp"
#include "kprobe/corpus.hpp"
#include "kprobe/estimators.hpp"
#include "kprobe/semantic_type.hpp"

namespace kprobe {

struct LabeledBytes {
    std::string id;
    SemanticType label;
    Bytes data;
};

std::vector<LabeledBytes> load_samples(const Manifest& manifest);

// Statistics. All throw Error(EmptyInput) on empty input.
double mean(std::span<const double> v);
double median(std::span<const double> v);
/// Sample standard deviation (n - 1); 0 for a single value.
double stddev(std::span<const double> v);
/// Ranks from 1, ties share their average rank.
std::vector<double> average_ranks(std::span<const double> v);
/// Spearman rank correlation; nullopt when either side has no variance.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

struct TimingRecord {
    EstimatorId estimator = EstimatorId::H;
    SemanticType type_label;
    std::string sample_id;
    std::size_t window_size = 0;
    double window_bytes = 0.0; // mean window length actually estimated
    double complexity = 0.0;   // mean window estimate
    double elapsed_us = 0.0;   // per window, from the median repetition
    double throughput = 0.0;   // bytes per second
};

struct Aggregate {
    EstimatorId estimator = EstimatorId::H;
    SemanticType type_label;
    std::size_t window_size = 0;
    std::size_t count = 0;
    double mean_elapsed_us = 0.0;
    double median_elapsed_us = 0.0;
    double stddev_elapsed_us = 0.0;
    double mean_complexity = 0.0;
    double mean_throughput = 0.0;
};

struct Correlation {
    std::string name; // e.g. time_vs_window
    EstimatorId estimator = EstimatorId::H;
    std::optional<double> rho;
};

struct EstimatorFamily {
    std::string name;
    std::vector<EstimatorId> estimators;
};

struct BenchReport {
    std::vector<TimingRecord> records;
    std::vector<Aggregate> aggregates;
    std::vector<Correlation> correlations;
    std::vector<EstimatorFamily> families;
    std::string environment;
    unsigned repetitions = 0;
    std::uint64_t seed = 0;
};

struct BenchOptions {
    unsigned repetitions = 3; // timed runs after one warm-up; at least 3
    std::uint64_t seed = 0;
    const EstimatorRegistry* registry = nullptr;
};

/// One aggregate per (estimator, type, window size) cell, sorted by that key.
std::vector<Aggregate> aggregate(std::span<const TimingRecord> records);

/// Times every window of a sample: one warm-up pass, then `repetitions`
/// passes; the median pass gives the per-window time.
TimingRecord time_sample(EstimatorId id, const LabeledBytes& sample, std::size_t window_size, const BenchOptions& options);

std::string host_description();

BenchReport profile_time_vs_window(std::span<const EstimatorId> estimators, std::span<const std::size_t> window_sizes,
                                   std::span<const LabeledBytes> samples, const BenchOptions& options = {});
BenchReport profile_time_vs_complexity(std::span<const EstimatorId> estimators, std::size_t window_size,
                                       std::span<const LabeledBytes> samples, const BenchOptions& options = {});
BenchReport throughput_per_type(std::span<const EstimatorId> estimators, std::size_t window_size,
                                std::span<const LabeledBytes> samples, const BenchOptions& options = {});

struct TradeoffRow {
    std::vector<EstimatorId> combination;
    double total_time_us = 0.0; // estimation time over every sample, both sides of the split
    double accuracy = 0.0;
    Evaluation evaluation;
    DiscriminantModel model;
};

/// Trains on `train` with each combination's features and evaluates on `test`.
/// Each estimator runs once per window; combinations reuse those values.
std::vector<TradeoffRow> tradeoff_time_vs_accuracy(std::span<const std::vector<EstimatorId>> combinations,
                                                   std::span<const LabeledBytes> train,
                                                   std::span<const LabeledBytes> test, std::size_t window_size,
                                                   const EstimatorRegistry& registry = EstimatorRegistry::builtin());

struct EffortRow {
    int effort = 0;
    double mean_ratio = 0.0;
    double accuracy = 0.0;
};

/// Error(Unsupported) for estimators without effort levels, Error(InvalidConfig)
/// for levels the estimator does not offer.
std::vector<EffortRow> accuracy_vs_compression(EstimatorId id, std::span<const int> efforts,
                                               std::span<const LabeledBytes> train, std::span<const LabeledBytes> test,
                                               std::size_t window_size,
                                               const EstimatorRegistry& registry = EstimatorRegistry::builtin());

/// Per-entry average of each estimator over whole samples. Samples longer
/// than the maximum window are averaged over maximum-size windows.
std::vector<std::pair<EstimatorId, double>> mean_complexity_profile(std::span<const EstimatorId> estimators,
                                                                    std::span<const LabeledBytes> samples,
                                                                    const EstimatorRegistry& registry = EstimatorRegistry::builtin());

std::string report_to_csv(const BenchReport& report);
nlohmann::json report_to_json(const BenchReport& report);

// Figure datasets.
inline constexpr const char* kFigureIds[] = {"fig09", "fig10", "fig11", "fig12", "fig13", "fig14", "fig15"};
bool is_figure_id(std::string_view s) noexcept;

struct FigureInputs {
    std::vector<EstimatorId> estimators{EstimatorId::H, EstimatorId::LZ, EstimatorId::ZIP, EstimatorId::BZ,
                                        EstimatorId::PSI};
    std::vector<std::size_t> window_sizes{256, 1024, 4096, 16384};
    std::size_t window_size = 4096;
    std::vector<std::vector<EstimatorId>> combinations{{EstimatorId::ZIP},
                                                       {EstimatorId::H},
                                                       {EstimatorId::LZ},
                                                       {EstimatorId::LZ, EstimatorId::H},
                                                       {EstimatorId::LZ, EstimatorId::H, EstimatorId::ZIP}};
    std::vector<int> zip_efforts{0, 1, 3, 6, 9};
    std::vector<int> bz_efforts{0, 1};
    std::vector<LabeledBytes> train;
    std::vector<LabeledBytes> test;
    BenchOptions options;
};

/// CSV for one figure id. Column sets:
///   fig09 estimator,mean_complexity,mean_elapsed_us
///   fig10 window_size,estimator,median_elapsed_us
///   fig11 estimator,type,sample,complexity,elapsed_us
///   fig12 combination,total_time_us,accuracy
///   fig13 estimator,effort,mean_ratio,accuracy
///   fig14/fig15 type,estimator,mean_throughput_bps
std::string figure_csv(std::string_view figure, const FigureInputs& inputs);

} // namespace kprobe
