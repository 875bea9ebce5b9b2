#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "kprobe/classifier.hpp"
#include "kprobe/error.hpp"
#include "test_support.hpp"

using namespace kprobe;

namespace {

FeatureVector fv(std::vector<double> k, double length = 4096.0) {
    FeatureVector x;
    const EstimatorId ids[] = {EstimatorId::H, EstimatorId::LZ, EstimatorId::ZIP, EstimatorId::BZ, EstimatorId::PSI};
    for (std::size_t i = 0; i < k.size(); ++i) x.estimators.push_back(ids[i]);
    x.window_k = std::move(k);
    x.length = length;
    return x;
}

LabeledSample sample(std::vector<double> k, const char* label, double length = 4096.0) {
    return {fv(std::move(k), length), SemanticType(label)};
}

std::vector<LabeledSample> one_dim_pair() {
    const double h = std::sqrt(0.5);
    return {sample({-h}, "A"), sample({h}, "A"), sample({2 - h}, "B"), sample({2 + h}, "B")};
}

nlohmann::json load_fixture() {
    std::ifstream in(KPROBE_DATA_DIR "/reference_lda.json");
    REQUIRE(in);
    return nlohmann::json::parse(in);
}

struct Clusters {
    std::vector<testsupport::Cluster> groups;
    std::vector<LabeledSample> samples;
};

Clusters gaussian_clusters(std::uint64_t seed, std::size_t per_group = 200) {
    kprobe::Xoshiro256 rng(seed);
    const double centers[3][2] = {{0.2, 0.3}, {0.5, 0.7}, {0.8, 0.35}};
    const char* names[] = {"G0", "G1", "G2"};
    Clusters c;
    c.groups.resize(3);
    for (int g = 0; g < 3; ++g)
        for (std::size_t i = 0; i < per_group; ++i) {
            const double a = testsupport::normal(rng), b = testsupport::normal(rng);
            // Correlated noise shared by every group.
            const std::vector<double> p{centers[g][0] + 0.12 * a, centers[g][1] + 0.06 * a + 0.08 * b};
            c.groups[g].points.push_back(p);
            c.samples.push_back(sample(p, names[g]));
        }
    return c;
}

std::size_t oracle_argmin(const std::vector<double>& x, const std::vector<std::vector<double>>& means,
                          const std::vector<std::vector<double>>& cov_inv) {
    std::size_t best = 0;
    double best_d = testsupport::mahalanobis2(x, means[0], cov_inv);
    for (std::size_t g = 1; g < means.size(); ++g) {
        const double d = testsupport::mahalanobis2(x, means[g], cov_inv);
        if (d < best_d) best_d = d, best = g;
    }
    return best;
}

TrainOptions equal_priors(std::initializer_list<const char*> names) {
    TrainOptions o;
    o.priors.emplace();
    for (const auto* n : names) (*o.priors)[SemanticType(n)] = 1.0;
    return o;
}

} // namespace

TEST_CASE("two 1-D groups split at the midpoint") {
    const auto samples = one_dim_pair();
    const auto model = train(samples, equal_priors({"A", "B"}));
    CHECK(model.groups() == std::vector<SemanticType>{SemanticType("A"), SemanticType("B")});
    // The length feature is constant across the training set and left out.
    CHECK(model.schema() == FeatureSchema{{EstimatorId::H}, false});
    CHECK(model.pooled_cov()[0][0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(model.ridge() == 0.0);
    CHECK(classify(model, fv({0.999})) == SemanticType("A"));
    CHECK(classify(model, fv({1.001})) == SemanticType("B"));
    CHECK(classify(model, fv({1.5})) == SemanticType("B"));
    const auto s = score(model, fv({1.0}));
    CHECK(s[0] == doctest::Approx(s[1]).epsilon(1e-12));
    const auto d = squared_distance_matrix(model);
    CHECK(d.d2[0][1] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(d.at(SemanticType("B"), SemanticType("A")) == d.d2[0][1]);
}

TEST_CASE("stored coefficients match recomputation from the stored parameters") {
    const auto c = gaussian_clusters(5);
    const auto model = train(c.samples);
    CHECK_NOTHROW(model.validate(1e-9));
    double psum = 0;
    for (double p : model.priors()) psum += p;
    CHECK(psum == doctest::Approx(1.0).epsilon(1e-15));
    // Independent recomputation through the Gauss-Jordan inverse.
    const auto inv = testsupport::invert(model.pooled_cov());
    for (std::size_t g = 0; g < model.groups().size(); ++g) {
        const auto& mu = model.means()[g];
        double quad = 0;
        for (std::size_t i = 0; i < 2; ++i) {
            double w = 0;
            for (std::size_t j = 0; j < 2; ++j) w += inv[i][j] * mu[j];
            CHECK(std::abs(model.coefficients()[g].weights[i] - w) <= 1e-9 * std::max(1.0, std::abs(w)));
            quad += mu[i] * w;
        }
        const double c0 = -0.5 * quad + std::log(model.priors()[g]);
        CHECK(std::abs(model.coefficients()[g].constant - c0) <= 1e-9 * std::max(1.0, std::abs(c0)));
    }
}

TEST_CASE("equal-prior classification is nearest Mahalanobis mean") {
    const auto c = gaussian_clusters(17);
    const auto model = train(c.samples, equal_priors({"G0", "G1", "G2"}));
    std::vector<std::vector<double>> means, cov;
    testsupport::pooled_moments(c.groups, means, cov);
    const auto inv = testsupport::invert(cov);
    const char* names[] = {"G0", "G1", "G2"};

    std::size_t agree = 0, total = 0;
    for (const auto& s : c.samples) {
        agree += classify(model, s.features) == SemanticType(names[oracle_argmin(s.features.window_k, means, inv)]);
        ++total;
    }
    kprobe::Xoshiro256 rng(4242);
    for (int q = 0; q < 1000; ++q) {
        const std::vector<double> x{rng.uniform() * 1.2 - 0.1, rng.uniform() * 1.2 - 0.1};
        agree += classify(model, fv(x)) == SemanticType(names[oracle_argmin(x, means, inv)]);
        ++total;
    }
    CHECK(agree == total);
}

TEST_CASE("rescaling a feature leaves decisions unchanged") {
    const auto c = gaussian_clusters(23);
    auto scaled = c.samples;
    for (auto& s : scaled) s.features.window_k[1] = 1000.0 * s.features.window_k[1] + 7.0;
    const auto a = train(c.samples), b = train(scaled);
    kprobe::Xoshiro256 rng(8);
    for (int q = 0; q < 500; ++q) {
        const double x0 = rng.uniform(), x1 = rng.uniform();
        CHECK(classify(a, fv({x0, x1})) == classify(b, fv({x0, 1000.0 * x1 + 7.0})));
    }
}

TEST_CASE("distance matrix axioms on trained models") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto d = squared_distance_matrix(train(gaussian_clusters(seed).samples));
        for (std::size_t i = 0; i < d.groups.size(); ++i) {
            CHECK(d.d2[i][i] == 0.0);
            for (std::size_t j = 0; j < d.groups.size(); ++j) {
                CHECK(d.d2[i][j] == d.d2[j][i]);
                CHECK(d.d2[i][j] >= 0.0);
            }
        }
    }
}

TEST_CASE("training preconditions") {
    auto samples = one_dim_pair();
    samples.push_back(sample({5.0}, "C"));
    try {
        train(samples);
        FAIL("singleton group accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InsufficientSamples);
    }
    const std::vector<LabeledSample> one_group{sample({0.1}, "A"), sample({0.2}, "A")};
    CHECK_THROWS_AS(train(one_group), Error);

    // Each group constant but the groups differ: no within-group spread.
    const std::vector<LabeledSample> flat{sample({0.1}, "A"), sample({0.1}, "A"), sample({0.2}, "B"),
                                          sample({0.2}, "B")};
    try {
        train(flat);
        FAIL("zero within-group variance accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DegenerateFeatures);
    }
    const std::vector<LabeledSample> constant{sample({0.1}, "A"), sample({0.1}, "A"), sample({0.1}, "B"),
                                              sample({0.1}, "B")};
    CHECK_THROWS_AS(train(constant), Error);
}

TEST_CASE("nearly collinear features get the ridge") {
    kprobe::Xoshiro256 rng(77);
    std::vector<LabeledSample> samples;
    for (int g = 0; g < 2; ++g)
        for (int i = 0; i < 30; ++i) {
            const double v = g + 0.3 * testsupport::normal(rng);
            samples.push_back(sample({v, v + 1e-9 * testsupport::normal(rng)}, g ? "B" : "A"));
        }
    const auto model = train(samples);
    CHECK(model.ridge() == 1e-6);
    CHECK_NOTHROW(model.validate(1e-9));
    CHECK(classify(model, fv({-0.5, -0.5})) == SemanticType("A"));
    CHECK(classify(model, fv({1.5, 1.5})) == SemanticType("B"));
}

TEST_CASE("scores, ties and schema checks") {
    const FeatureSchema schema{{EstimatorId::ZIP}, true};
    const auto m = DiscriminantModel::from_coefficients(
        schema, {SemanticType("X"), SemanticType("Y")}, {{1.5, {2.0, 0.5}}, {-3.0, {4.0, 0.25}}});
    FeatureVector zero;
    zero.estimators = {EstimatorId::ZIP};
    zero.window_k = {0.0};
    CHECK(score(m, zero) == std::vector<double>{1.5, -3.0});

    const double kappa = 12.5;
    const auto shifted = DiscriminantModel::from_coefficients(
        schema, m.groups(), {{1.5 + kappa, {2.0, 0.5}}, {-3.0 + kappa, {4.0, 0.25}}});
    kprobe::Xoshiro256 rng(3);
    for (int i = 0; i < 200; ++i) {
        FeatureVector x = zero;
        x.window_k[0] = rng.uniform();
        x.length = 100.0 * rng.uniform();
        const auto a = score(m, x), b = score(shifted, x);
        CHECK(b[0] - a[0] == doctest::Approx(kappa));
        CHECK(b[1] - a[1] == doctest::Approx(kappa));
        CHECK(classify(m, x) == classify(shifted, x));
    }

    const auto tie = DiscriminantModel::from_coefficients(schema, {SemanticType("P"), SemanticType("Q")},
                                                          {{1.0, {1.0, 0.0}}, {1.0, {1.0, 0.0}}});
    CHECK(classify(tie, zero) == SemanticType("P"));

    FeatureVector wrong;
    wrong.estimators = {EstimatorId::H};
    wrong.window_k = {0.5};
    try {
        score(m, wrong);
        FAIL("schema mismatch accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ModelMismatch);
    }
    CHECK_THROWS_AS(score_features(m, std::vector<double>{1.0}), Error);
}

TEST_CASE("reference table: merge suggestions") {
    const auto d = distance_matrix_from_json(load_fixture().at("squared_distance"));
    const auto merges = suggest_merges(d, 1.0);
    REQUIRE(merges.size() == 3);
    CHECK(merges[0].first == types::Audio);
    CHECK(merges[0].second == types::Exe);
    CHECK(merges[0].d2 == 0.0453);
    CHECK(merges[1].first == types::Doc);
    CHECK(merges[1].second == types::Txt);
    CHECK(merges[1].d2 == 0.2660);
    CHECK(merges[2].first == types::Pic);
    CHECK(merges[2].second == types::Vid);
    CHECK(merges[2].d2 == 0.5649);
    CHECK(d.at(types::Audio, types::Exe) == 0.0453);
    CHECK(suggest_merges(d, 0.0).empty());
    CHECK(suggest_merges(d, 100.0).size() == 15);
    CHECK_THROWS_AS(suggest_merges(d, -1.0), Error);
}

TEST_CASE("reference table: discriminant scores") {
    const auto model = model_from_json(load_fixture().at("discriminant"));
    CHECK_FALSE(model.has_parameters());
    FeatureVector x;
    x.estimators = {EstimatorId::ZIP};
    x.window_k = {0.5};
    x.length = 1000;
    const auto s = score(model, x);
    // -21.575 + 55.473 * 0.5 + 0.019 * 1000
    CHECK(std::abs(s[0] - 25.1615) <= 1e-9);
    CHECK(classify(model, x) == types::Audio);
    // Argmaxes worked by hand over all six functions.
    x.window_k = {0.9};
    x.length = 500;
    CHECK(classify(model, x) == types::Vid); // Vid 41.0831 > Pic 39.754
    x.window_k = {0.1};
    x.length = 100;
    CHECK(classify(model, x) == types::Txt); // Txt -1.3013 > Doc -1.7078
    CHECK_THROWS_AS(squared_distance_matrix(model), Error);
}

TEST_CASE("merge_types") {
    const std::vector<LabeledSample> samples{sample({0.1}, "Audio"), sample({0.2}, "Doc"), sample({0.3}, "Exe"),
                                             sample({0.4}, "Pic"),   sample({0.5}, "Txt"), sample({0.6}, "Vid")};
    const auto same = merge_types(samples, {});
    for (std::size_t i = 0; i < samples.size(); ++i) CHECK(same[i].label == samples[i].label);

    const std::vector<MergePair> three{{types::Audio, types::Exe}, {types::Doc, types::Txt}, {types::Pic, types::Vid}};
    const auto merged = merge_types(samples, three);
    std::set<SemanticType> groups;
    for (const auto& s : merged) groups.insert(s.label);
    CHECK(groups == std::set<SemanticType>{SemanticType("Audio+Exe"), SemanticType("Doc+Txt"), SemanticType("Pic+Vid")});

    const std::vector<MergePair> chain{{SemanticType("C"), SemanticType("B")}, {SemanticType("B"), SemanticType("A")}};
    const auto mapping = merge_mapping(chain);
    CHECK(relabel(SemanticType("A"), mapping) == SemanticType("A+B+C"));
    CHECK(relabel(SemanticType("C"), mapping) == SemanticType("A+B+C"));
    CHECK(relabel(SemanticType("D"), mapping) == SemanticType("D"));

    const std::vector<MergePair> unknown{{types::Audio, SemanticType("Nope")}};
    CHECK_THROWS_AS(merge_types(samples, unknown), Error);
}

TEST_CASE("evaluate") {
    std::vector<LabeledSample> sep;
    for (int i = 0; i < 10; ++i) {
        sep.push_back(sample({0.1 + 0.001 * i}, "A"));
        sep.push_back(sample({0.9 + 0.001 * i}, "B"));
    }
    const auto ev = evaluate(train(sep), sep);
    CHECK(ev.accuracy == 1.0);
    CHECK(ev.confusion == std::vector<std::vector<std::size_t>>{{10, 0}, {0, 10}});
    CHECK(ev.per_group_accuracy == std::vector<double>{1.0, 1.0});

    // A seeded dummy classifier that guesses uniformly among 5 balanced groups.
    const std::vector<SemanticType> g{SemanticType("a"), SemanticType("b"), SemanticType("c"), SemanticType("d"),
                                      SemanticType("e")};
    kprobe::Xoshiro256 rng(1);
    std::vector<SemanticType> actual, guess;
    for (int i = 0; i < 20000; ++i) {
        actual.push_back(g[static_cast<std::size_t>(i % 5)]);
        guess.push_back(g[rng.below(5)]);
    }
    const auto base = evaluate_predictions(actual, guess);
    // Binomial sd at p = 0.2, n = 20000 is 0.0028; allow four of them.
    CHECK(std::abs(base.accuracy - 0.2) < 0.012);

    const auto mapping = merge_mapping(std::vector<MergePair>{{g[0], g[1]}, {g[2], g[3]}});
    std::vector<SemanticType> ca, cg;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        ca.push_back(relabel(actual[i], mapping));
        cg.push_back(relabel(guess[i], mapping));
    }
    CHECK(evaluate_predictions(ca, cg).accuracy >= base.accuracy);
    CHECK_THROWS_AS(evaluate_predictions({}, {}), Error);
}

TEST_CASE("model JSON round trip and validation on load") {
    const auto model = train(gaussian_clusters(9).samples);
    const auto j = model_to_json(model);
    const auto back = model_from_json(j);
    CHECK(back.groups() == model.groups());
    CHECK(back.schema() == model.schema());
    CHECK(back.means() == model.means());
    CHECK(back.pooled_cov() == model.pooled_cov());
    const auto x = fv({0.4, 0.5});
    CHECK(score(back, x) == score(model, x));

    auto tampered = j;
    tampered["coefficients"][1]["weights"][0] = tampered["coefficients"][1]["weights"][0].get<double>() * (1 + 1e-4);
    try {
        model_from_json(tampered);
        FAIL("tampered model accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ModelMismatch);
    }
    auto broken = j;
    broken.erase("groups");
    CHECK_THROWS_AS(model_from_json(broken), Error);
    auto old = j;
    old["format_version"] = 99;
    CHECK_THROWS_AS(model_from_json(old), Error);
}
