#pragma once

// Linear discriminant analysis over complexity features.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kprobe/estimators.hpp"
#include "kprobe/probe.hpp"
#include "kprobe/semantic_type.hpp"

namespace kprobe {

inline constexpr int kModelFormatVersion = 1;
inline constexpr double kDefaultMergeThreshold = 1.0;

/// Which features a model consumes, in order: one mean complexity per
/// estimator, then (optionally) the sample length in bytes.
struct FeatureSchema {
    std::vector<EstimatorId> estimators;
    bool include_length = true;

    std::size_t dimension() const noexcept { return estimators.size() + (include_length ? 1 : 0); }
    std::vector<std::string> names() const;
    friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

struct FeatureVector {
    std::vector<EstimatorId> estimators;
    std::vector<double> window_k; // parallel to estimators
    double length = 0.0;          // bytes
};

/// Mean estimate per estimator over all records; length = analyzed bytes.
FeatureVector features_from_map(const ComplexityMap& map); // Error(EmptyInput)
FeatureVector features_from_record(const MapRecord& record);

struct LabeledSample {
    FeatureVector features;
    SemanticType label;
};

struct GroupCoefficients {
    double constant = 0.0;
    std::vector<double> weights;
};

struct TrainOptions {
    /// Per-group priors; normalized to sum 1. Empirical frequencies when absent.
    std::optional<std::map<SemanticType, double>> priors;
    /// Restricts the feature set; every sample's estimators when absent.
    std::optional<std::vector<EstimatorId>> estimators;
    bool include_length = true;
    /// Covariance condition number (on the correlation scale) above which the
    /// ridge is applied.
    double max_condition = 1e10;
    double ridge = 1e-6;
};

class DiscriminantModel {
public:
    /// A scoring-only model with no means or covariance, e.g. a published
    /// coefficient table.
    static DiscriminantModel from_coefficients(FeatureSchema schema, std::vector<SemanticType> groups,
                                               std::vector<GroupCoefficients> coefficients);

    const FeatureSchema& schema() const noexcept { return schema_; }
    const std::vector<SemanticType>& groups() const noexcept { return groups_; }
    const std::vector<std::vector<double>>& means() const noexcept { return means_; }
    const std::vector<std::vector<double>>& pooled_cov() const noexcept { return pooled_cov_; }
    const std::vector<GroupCoefficients>& coefficients() const noexcept { return coefficients_; }
    const std::vector<double>& priors() const noexcept { return priors_; }
    /// Relative ridge added to the covariance diagonal; 0 when none was needed.
    double ridge() const noexcept { return ridge_; }
    bool has_parameters() const noexcept { return !means_.empty(); }

    /// Selects the schema's features from `x`; Error(ModelMismatch) when one is missing.
    std::vector<double> project(const FeatureVector& x) const;

    /// Recomputes the coefficients from means, covariance and priors and
    /// compares with the stored ones. Throws Error(ModelMismatch).
    void validate(double rel_tol) const;

private:
    friend DiscriminantModel train(std::span<const LabeledSample>, const TrainOptions&);
    friend DiscriminantModel model_from_json(const nlohmann::json& j, double rel_tol);

    FeatureSchema schema_;
    std::vector<SemanticType> groups_;
    std::vector<std::vector<double>> means_;
    std::vector<std::vector<double>> pooled_cov_;
    std::vector<GroupCoefficients> coefficients_;
    std::vector<double> priors_;
    double ridge_ = 0.0;
};

/// Groups are ordered by name. Features that are constant over the whole
/// training set carry no information and are left out of the schema.
/// Throws Error(InsufficientSamples), Error(DegenerateFeatures) or
/// Error(ModelMismatch) for inconsistent feature vectors.
DiscriminantModel train(std::span<const LabeledSample> samples, const TrainOptions& options = {});

std::vector<double> score(const DiscriminantModel& model, const FeatureVector& x);
/// Scores a vector already in schema order.
std::vector<double> score_features(const DiscriminantModel& model, std::span<const double> x);
/// Argmax of the scores; ties go to the earlier group.
SemanticType classify(const DiscriminantModel& model, const FeatureVector& x);
SemanticType classify_file(const DiscriminantModel& model, const ComplexityMap& map);

struct SquaredDistanceMatrix {
    std::vector<SemanticType> groups;
    std::vector<std::vector<double>> d2;

    double at(const SemanticType& a, const SemanticType& b) const; // Error(UnknownType)
};

SquaredDistanceMatrix squared_distance_matrix(const DiscriminantModel& model);

struct MergeSuggestion {
    SemanticType first;
    SemanticType second;
    double d2 = 0.0;
};

/// Pairs strictly closer than `threshold`, nearest first.
std::vector<MergeSuggestion> suggest_merges(const SquaredDistanceMatrix& matrix,
                                            double threshold = kDefaultMergeThreshold);

using MergePair = std::pair<SemanticType, SemanticType>;

/// Original type -> combined type, with transitive closure. Combined names
/// join the sorted member names with '+', e.g. Audio+Exe.
std::map<SemanticType, SemanticType> merge_mapping(std::span<const MergePair> merges);
SemanticType relabel(const SemanticType& t, const std::map<SemanticType, SemanticType>& mapping);
/// Throws Error(UnknownType) when a pair names a type absent from `samples`.
std::vector<LabeledSample> merge_types(std::span<const LabeledSample> samples, std::span<const MergePair> merges);

struct Evaluation {
    std::vector<SemanticType> groups;
    std::vector<std::vector<std::size_t>> confusion; // [actual][predicted]
    std::size_t total = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    std::vector<double> per_group_accuracy; // NaN for groups with no actual samples
};

Evaluation evaluate_predictions(std::span<const SemanticType> actual, std::span<const SemanticType> predicted);
Evaluation evaluate(const DiscriminantModel& model, std::span<const LabeledSample> test_set);

nlohmann::json model_to_json(const DiscriminantModel& model);
/// Throws Error(ParseError) for malformed documents and Error(ModelMismatch)
/// when stored coefficients disagree with the stored parameters.
DiscriminantModel model_from_json(const nlohmann::json& j, double rel_tol = 1e-6);
DiscriminantModel load_model(const std::string& path);
void save_model(const DiscriminantModel& model, const std::string& path);

nlohmann::json distance_matrix_to_json(const SquaredDistanceMatrix& m);
SquaredDistanceMatrix distance_matrix_from_json(const nlohmann::json& j);
std::string distance_matrix_to_csv(const SquaredDistanceMatrix& m);

} // namespace kprobe
