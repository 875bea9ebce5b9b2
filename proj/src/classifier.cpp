#include "kprobe/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <Eigen/Dense>

#include "kprobe/error.hpp"

namespace kprobe {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

[[noreturn]] void mismatch(const std::string& msg) { throw Error(ErrorCode::ModelMismatch, msg); }

VectorXd to_eigen(std::span<const double> v) { return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())); }

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

MatrixXd to_eigen(const std::vector<std::vector<double>>& rows) {
    MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

std::vector<std::vector<double>> to_rows(const MatrixXd& m) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = to_std(m.row(i).transpose());
    return out;
}

// Full-feature layout of a training sample: estimators in the given order,
// then length.
std::vector<double> full_features(const FeatureVector& x, std::span<const EstimatorId> ids) {
    std::vector<double> out;
    out.reserve(ids.size() + 1);
    for (auto id : ids) {
        const auto it = std::find(x.estimators.begin(), x.estimators.end(), id);
        if (it == x.estimators.end()) mismatch("feature vector lacks estimator " + std::string(to_string(id)));
        out.push_back(x.window_k[static_cast<std::size_t>(it - x.estimators.begin())]);
    }
    out.push_back(x.length);
    return out;
}

// Largest element-wise relative difference. Elements far below the vector's
// magnitude are compared against a floor of 1e-6 of that magnitude.
double relative_gap(const VectorXd& stored, const VectorXd& fresh) {
    const double floor = std::max(1e-6 * fresh.lpNorm<Eigen::Infinity>(), std::numeric_limits<double>::min());
    double gap = 0;
    for (Eigen::Index i = 0; i < fresh.size(); ++i)
        gap = std::max(gap, std::abs(stored[i] - fresh[i]) / std::max(std::abs(fresh[i]), floor));
    return gap;
}

std::string join_plus(const std::set<SemanticType>& members) {
    std::string out;
    for (const auto& m : members) {
        if (!out.empty()) out += '+';
        out += m.name();
    }
    return out;
}

template <class T>
T get_field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
    return j.at(key).get<T>();
}

} // namespace

std::vector<std::string> FeatureSchema::names() const {
    std::vector<std::string> out;
    for (auto id : estimators) out.emplace_back(to_string(id));
    if (include_length) out.emplace_back("length");
    return out;
}

FeatureVector features_from_map(const ComplexityMap& map) {
    if (map.records.empty()) throw Error(ErrorCode::EmptyInput, "complexity map has no records");
    FeatureVector x;
    x.estimators = map.config.estimators;
    x.window_k.assign(x.estimators.size(), 0.0);
    std::size_t bytes = 0;
    for (const auto& r : map.records) {
        if (r.estimates.size() != x.estimators.size()) mismatch("record estimate count differs from the config");
        for (std::size_t k = 0; k < r.estimates.size(); ++k) x.window_k[k] += r.estimates[k].value;
        bytes += r.length;
    }
    for (auto& v : x.window_k) v /= static_cast<double>(map.records.size());
    x.length = static_cast<double>(bytes);
    return x;
}

FeatureVector features_from_record(const MapRecord& record) {
    FeatureVector x;
    for (const auto& e : record.estimates) {
        x.estimators.push_back(e.estimator);
        x.window_k.push_back(e.value);
    }
    x.length = static_cast<double>(record.length);
    return x;
}

DiscriminantModel DiscriminantModel::from_coefficients(FeatureSchema schema, std::vector<SemanticType> groups,
                                                       std::vector<GroupCoefficients> coefficients) {
    if (groups.size() != coefficients.size() || groups.empty())
        mismatch("need one coefficient set per group");
    for (const auto& c : coefficients)
        if (c.weights.size() != schema.dimension()) mismatch("coefficient count differs from the feature schema");
    DiscriminantModel m;
    m.schema_ = std::move(schema);
    m.groups_ = std::move(groups);
    m.coefficients_ = std::move(coefficients);
    return m;
}

std::vector<double> DiscriminantModel::project(const FeatureVector& x) const {
    if (x.window_k.size() != x.estimators.size()) mismatch("feature vector is malformed");
    std::vector<double> out;
    out.reserve(schema_.dimension());
    for (auto id : schema_.estimators) {
        const auto it = std::find(x.estimators.begin(), x.estimators.end(), id);
        if (it == x.estimators.end()) mismatch("model needs estimator " + std::string(to_string(id)));
        out.push_back(x.window_k[static_cast<std::size_t>(it - x.estimators.begin())]);
    }
    if (schema_.include_length) out.push_back(x.length);
    return out;
}

void DiscriminantModel::validate(double rel_tol) const {
    const std::size_t d = schema_.dimension(), g = groups_.size();
    if (d == 0 || g < 2) mismatch("model needs at least two groups and one feature");
    if (coefficients_.size() != g) mismatch("coefficient table size differs from group count");
    for (const auto& c : coefficients_)
        if (c.weights.size() != d) mismatch("weight vector size differs from the feature schema");
    if (!has_parameters()) return;
    if (means_.size() != g || priors_.size() != g || pooled_cov_.size() != d) mismatch("parameter shapes disagree");
    for (const auto& m : means_)
        if (m.size() != d) mismatch("mean vector size differs from the feature schema");
    for (const auto& row : pooled_cov_)
        if (row.size() != d) mismatch("covariance is not square");
    const MatrixXd cov = to_eigen(pooled_cov_);
    if ((cov - cov.transpose()).lpNorm<Eigen::Infinity>() > rel_tol * cov.lpNorm<Eigen::Infinity>())
        mismatch("pooled covariance is not symmetric");
    const Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) mismatch("pooled covariance is not positive definite");
    const double psum = std::accumulate(priors_.begin(), priors_.end(), 0.0);
    if (std::abs(psum - 1.0) > 1e-9) mismatch("priors do not sum to 1");
    for (std::size_t k = 0; k < g; ++k) {
        if (!(priors_[k] > 0)) mismatch("priors must be positive");
        const VectorXd mu = to_eigen(std::span<const double>(means_[k]));
        const VectorXd w = llt.solve(mu);
        const double c = -0.5 * mu.dot(w) + std::log(priors_[k]);
        const VectorXd stored = to_eigen(std::span<const double>(coefficients_[k].weights));
        if (relative_gap(stored, w) > rel_tol)
            mismatch("weights of group " + groups_[k].name() + " do not match the stored parameters");
        if (std::abs(coefficients_[k].constant - c) > rel_tol * std::max(1.0, std::abs(c)))
            mismatch("constant of group " + groups_[k].name() + " does not match the stored parameters");
    }
}

DiscriminantModel train(std::span<const LabeledSample> samples, const TrainOptions& options) {
    if (samples.empty()) throw Error(ErrorCode::InsufficientSamples, "no training samples");
    const std::vector<EstimatorId> ids = options.estimators ? *options.estimators : samples.front().features.estimators;
    if (ids.empty() && !options.include_length) throw Error(ErrorCode::InvalidConfig, "empty feature set");

    std::map<SemanticType, std::vector<std::size_t>> by_group;
    for (std::size_t i = 0; i < samples.size(); ++i) by_group[samples[i].label].push_back(i);
    if (by_group.size() < 2)
        throw Error(ErrorCode::InsufficientSamples, "training needs at least two groups");
    for (const auto& [t, members] : by_group)
        if (members.size() < 2)
            throw Error(ErrorCode::InsufficientSamples,
                        "group " + t.name() + " has " + std::to_string(members.size()) + " sample; at least 2 needed");

    const std::size_t n = samples.size();
    const std::size_t full_dim = ids.size() + 1;
    MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(full_dim));
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = full_features(samples[i].features, ids);
        for (std::size_t j = 0; j < full_dim; ++j) {
            if (!std::isfinite(row[j])) throw Error(ErrorCode::DegenerateFeatures, "non-finite feature value");
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
        }
    }

    // Keep only features that vary over the training set.
    FeatureSchema schema;
    std::vector<Eigen::Index> keep;
    for (std::size_t j = 0; j < full_dim; ++j) {
        const bool is_length = j == ids.size();
        if (is_length && !options.include_length) continue;
        const auto col = x.col(static_cast<Eigen::Index>(j));
        if (col.maxCoeff() == col.minCoeff()) continue;
        keep.push_back(static_cast<Eigen::Index>(j));
        if (!is_length) schema.estimators.push_back(ids[j]);
    }
    schema.include_length = std::find(keep.begin(), keep.end(), static_cast<Eigen::Index>(ids.size())) != keep.end();
    if (keep.empty()) throw Error(ErrorCode::DegenerateFeatures, "every feature is constant over the training set");
    const auto d = static_cast<Eigen::Index>(keep.size());
    MatrixXd xs(x.rows(), d);
    for (Eigen::Index j = 0; j < d; ++j) xs.col(j) = x.col(keep[static_cast<std::size_t>(j)]);

    DiscriminantModel m;
    m.schema_ = schema;
    const std::size_t g = by_group.size();
    MatrixXd means(static_cast<Eigen::Index>(g), d);
    MatrixXd scatter = MatrixXd::Zero(d, d);
    std::size_t gi = 0;
    for (const auto& [t, members] : by_group) {
        m.groups_.push_back(t);
        VectorXd mu = VectorXd::Zero(d);
        for (auto i : members) mu += xs.row(static_cast<Eigen::Index>(i)).transpose();
        mu /= static_cast<double>(members.size());
        for (auto i : members) {
            const VectorXd dev = xs.row(static_cast<Eigen::Index>(i)).transpose() - mu;
            scatter += dev * dev.transpose();
        }
        means.row(static_cast<Eigen::Index>(gi++)) = mu.transpose();
    }
    MatrixXd cov = scatter / static_cast<double>(n - g);
    cov = 0.5 * (cov + cov.transpose());

    for (Eigen::Index j = 0; j < d; ++j)
        if (!(cov(j, j) > 0))
            throw Error(ErrorCode::DegenerateFeatures,
                        "feature " + schema.names()[static_cast<std::size_t>(j)] + " has zero within-group variance");

    // Condition number on the correlation scale, so units do not matter.
    const VectorXd inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
    const MatrixXd corr = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(corr, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
    const double cond = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (cond > options.max_condition) {
        m.ridge_ = options.ridge;
        cov.diagonal() *= 1.0 + options.ridge;
    }
    const Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::DegenerateFeatures, "pooled covariance is singular");

    if (options.priors) {
        double total = 0;
        for (const auto& t : m.groups_) {
            const auto it = options.priors->find(t);
            if (it == options.priors->end() || !(it->second > 0))
                throw Error(ErrorCode::InvalidConfig, "missing or non-positive prior for group " + t.name());
            m.priors_.push_back(it->second);
            total += it->second;
        }
        for (auto& p : m.priors_) p /= total;
    } else {
        for (const auto& [t, members] : by_group)
            m.priors_.push_back(static_cast<double>(members.size()) / static_cast<double>(n));
    }

    for (std::size_t k = 0; k < g; ++k) {
        const VectorXd mu = means.row(static_cast<Eigen::Index>(k)).transpose();
        const VectorXd w = llt.solve(mu);
        m.coefficients_.push_back({-0.5 * mu.dot(w) + std::log(m.priors_[k]), to_std(w)});
    }
    m.means_ = to_rows(means);
    m.pooled_cov_ = to_rows(cov);
    return m;
}

std::vector<double> score_features(const DiscriminantModel& model, std::span<const double> x) {
    if (x.size() != model.schema().dimension())
        mismatch("feature vector has " + std::to_string(x.size()) + " values; model expects " +
                 std::to_string(model.schema().dimension()));
    std::vector<double> out;
    out.reserve(model.groups().size());
    for (const auto& c : model.coefficients()) {
        double s = c.constant;
        for (std::size_t j = 0; j < x.size(); ++j) s += c.weights[j] * x[j];
        out.push_back(s);
    }
    return out;
}

std::vector<double> score(const DiscriminantModel& model, const FeatureVector& x) {
    return score_features(model, model.project(x));
}

SemanticType classify(const DiscriminantModel& model, const FeatureVector& x) {
    const auto s = score(model, x);
    return model.groups()[static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin())];
}

SemanticType classify_file(const DiscriminantModel& model, const ComplexityMap& map) {
    return classify(model, features_from_map(map));
}

double SquaredDistanceMatrix::at(const SemanticType& a, const SemanticType& b) const {
    const auto ia = std::find(groups.begin(), groups.end(), a);
    const auto ib = std::find(groups.begin(), groups.end(), b);
    if (ia == groups.end() || ib == groups.end())
        throw Error(ErrorCode::UnknownType, "type not in the distance matrix");
    return d2[static_cast<std::size_t>(ia - groups.begin())][static_cast<std::size_t>(ib - groups.begin())];
}

SquaredDistanceMatrix squared_distance_matrix(const DiscriminantModel& model) {
    if (!model.has_parameters()) mismatch("model carries no means or covariance");
    const Eigen::LLT<MatrixXd> llt(to_eigen(model.pooled_cov()));
    const std::size_t g = model.groups().size();
    SquaredDistanceMatrix out{model.groups(), std::vector<std::vector<double>>(g, std::vector<double>(g, 0.0))};
    for (std::size_t i = 0; i < g; ++i)
        for (std::size_t j = i + 1; j < g; ++j) {
            const VectorXd diff = to_eigen(std::span<const double>(model.means()[i])) -
                                  to_eigen(std::span<const double>(model.means()[j]));
            const double v = std::max(0.0, diff.dot(llt.solve(diff)));
            out.d2[i][j] = out.d2[j][i] = v;
        }
    return out;
}

std::vector<MergeSuggestion> suggest_merges(const SquaredDistanceMatrix& matrix, double threshold) {
    if (!(threshold >= 0)) throw Error(ErrorCode::InvalidConfig, "merge threshold must be non-negative");
    std::vector<MergeSuggestion> out;
    for (std::size_t i = 0; i < matrix.groups.size(); ++i)
        for (std::size_t j = i + 1; j < matrix.groups.size(); ++j)
            if (matrix.d2[i][j] < threshold) out.push_back({matrix.groups[i], matrix.groups[j], matrix.d2[i][j]});
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.d2 < b.d2; });
    return out;
}

std::map<SemanticType, SemanticType> merge_mapping(std::span<const MergePair> merges) {
    std::map<SemanticType, SemanticType> parent;
    auto find = [&](SemanticType t) {
        while (parent.at(t) != t) t = parent.at(t);
        return t;
    };
    for (const auto& [a, b] : merges) {
        parent.try_emplace(a, a);
        parent.try_emplace(b, b);
        const auto ra = find(a), rb = find(b);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    }
    std::map<SemanticType, std::set<SemanticType>> sets;
    for (const auto& [t, p] : parent) sets[find(t)].insert(t);
    std::map<SemanticType, SemanticType> out;
    for (const auto& [root, members] : sets) {
        const SemanticType combined(join_plus(members));
        for (const auto& m : members) out.emplace(m, combined);
    }
    return out;
}

SemanticType relabel(const SemanticType& t, const std::map<SemanticType, SemanticType>& mapping) {
    const auto it = mapping.find(t);
    return it == mapping.end() ? t : it->second;
}

std::vector<LabeledSample> merge_types(std::span<const LabeledSample> samples, std::span<const MergePair> merges) {
    std::set<SemanticType> present;
    for (const auto& s : samples) present.insert(s.label);
    for (const auto& [a, b] : merges)
        for (const auto* t : {&a, &b})
            if (!present.count(*t)) throw Error(ErrorCode::UnknownType, "merge names unknown type " + t->name());
    const auto mapping = merge_mapping(merges);
    std::vector<LabeledSample> out(samples.begin(), samples.end());
    for (auto& s : out) s.label = relabel(s.label, mapping);
    return out;
}

Evaluation evaluate_predictions(std::span<const SemanticType> actual, std::span<const SemanticType> predicted) {
    if (actual.size() != predicted.size()) throw Error(ErrorCode::InvalidConfig, "label count mismatch");
    if (actual.empty()) throw Error(ErrorCode::EmptyInput, "empty test set");
    std::set<SemanticType> all(actual.begin(), actual.end());
    all.insert(predicted.begin(), predicted.end());
    Evaluation ev;
    ev.groups.assign(all.begin(), all.end());
    const std::size_t g = ev.groups.size();
    ev.confusion.assign(g, std::vector<std::size_t>(g, 0));
    auto index = [&](const SemanticType& t) {
        return static_cast<std::size_t>(std::lower_bound(ev.groups.begin(), ev.groups.end(), t) - ev.groups.begin());
    };
    for (std::size_t i = 0; i < actual.size(); ++i) ++ev.confusion[index(actual[i])][index(predicted[i])];
    ev.total = actual.size();
    for (std::size_t k = 0; k < g; ++k) {
        ev.correct += ev.confusion[k][k];
        const std::size_t row = std::accumulate(ev.confusion[k].begin(), ev.confusion[k].end(), std::size_t{0});
        ev.per_group_accuracy.push_back(row ? static_cast<double>(ev.confusion[k][k]) / static_cast<double>(row)
                                            : std::numeric_limits<double>::quiet_NaN());
    }
    ev.accuracy = static_cast<double>(ev.correct) / static_cast<double>(ev.total);
    return ev;
}

Evaluation evaluate(const DiscriminantModel& model, std::span<const LabeledSample> test_set) {
    std::vector<SemanticType> actual, predicted;
    for (const auto& s : test_set) {
        actual.push_back(s.label);
        predicted.push_back(classify(model, s.features));
    }
    return evaluate_predictions(actual, predicted);
}

nlohmann::json model_to_json(const DiscriminantModel& m) {
    nlohmann::json groups = nlohmann::json::array(), coeffs = nlohmann::json::array();
    for (const auto& t : m.groups()) groups.push_back(t.name());
    for (const auto& c : m.coefficients()) coeffs.push_back({{"constant", c.constant}, {"weights", c.weights}});
    nlohmann::json est = nlohmann::json::array();
    for (auto id : m.schema().estimators) est.push_back(std::string(to_string(id)));
    nlohmann::json j = {
        {"format_version", kModelFormatVersion},
        {"feature_schema", {{"estimators", est}, {"include_length", m.schema().include_length}}},
        {"groups", groups},
        {"coefficients", coeffs},
    };
    if (m.has_parameters()) {
        j["means"] = m.means();
        j["pooled_cov"] = m.pooled_cov();
        j["priors"] = m.priors();
        j["ridge"] = m.ridge();
    }
    return j;
}

DiscriminantModel model_from_json(const nlohmann::json& j, double rel_tol) {
    DiscriminantModel m;
    try {
        const int version = get_field<int>(j, "format_version");
        if (version != kModelFormatVersion)
            throw Error(ErrorCode::ParseError, "unsupported model format version " + std::to_string(version));
        const auto& fs = j.at("feature_schema");
        for (const auto& e : fs.at("estimators")) m.schema_.estimators.push_back(parse_estimator(e.get<std::string>()));
        m.schema_.include_length = get_field<bool>(fs, "include_length");
        for (const auto& g : j.at("groups")) m.groups_.emplace_back(g.get<std::string>());
        for (const auto& c : j.at("coefficients"))
            m.coefficients_.push_back({get_field<double>(c, "constant"), get_field<std::vector<double>>(c, "weights")});
        if (j.contains("means")) {
            m.means_ = get_field<std::vector<std::vector<double>>>(j, "means");
            m.pooled_cov_ = get_field<std::vector<std::vector<double>>>(j, "pooled_cov");
            m.priors_ = get_field<std::vector<double>>(j, "priors");
            m.ridge_ = j.value("ridge", 0.0);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("malformed model: ") + e.what());
    }
    if (std::set<SemanticType>(m.groups_.begin(), m.groups_.end()).size() != m.groups_.size())
        throw Error(ErrorCode::ParseError, "duplicate group names in model");
    m.validate(rel_tol);
    return m;
}

DiscriminantModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open model file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, "model file " + path + " is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

void save_model(const DiscriminantModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write model file " + path);
    out << model_to_json(model).dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

nlohmann::json distance_matrix_to_json(const SquaredDistanceMatrix& m) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& t : m.groups) groups.push_back(t.name());
    return {{"groups", groups}, {"d2", m.d2}};
}

SquaredDistanceMatrix distance_matrix_from_json(const nlohmann::json& j) {
    SquaredDistanceMatrix m;
    try {
        for (const auto& g : j.at("groups")) m.groups.emplace_back(g.get<std::string>());
        m.d2 = j.at("d2").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("malformed distance matrix: ") + e.what());
    }
    const std::size_t g = m.groups.size();
    if (m.d2.size() != g) throw Error(ErrorCode::ParseError, "distance matrix is not square");
    for (std::size_t i = 0; i < g; ++i) {
        if (m.d2[i].size() != g) throw Error(ErrorCode::ParseError, "distance matrix is not square");
        if (m.d2[i][i] != 0.0) throw Error(ErrorCode::ParseError, "distance matrix diagonal must be zero");
        for (std::size_t k = 0; k < i; ++k)
            if (m.d2[i][k] != m.d2[k][i] || m.d2[i][k] < 0)
                throw Error(ErrorCode::ParseError, "distance matrix must be symmetric and non-negative");
    }
    return m;
}

std::string distance_matrix_to_csv(const SquaredDistanceMatrix& m) {
    std::string out = "group";
    for (const auto& t : m.groups) (out += ',') += t.name();
    out += '\n';
    char buf[64];
    for (std::size_t i = 0; i < m.groups.size(); ++i) {
        out += m.groups[i].name();
        for (double v : m.d2[i]) {
            std::snprintf(buf, sizeof buf, ",%.4f", v);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

} // namespace kprobe
