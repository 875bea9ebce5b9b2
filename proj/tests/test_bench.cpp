#include <doctest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "kprobe/bench.hpp"
#include "kprobe/error.hpp"
#include "kprobe/random.hpp"
#include "test_support.hpp"

using namespace kprobe;

namespace {

std::vector<LabeledBytes> small_corpus(std::size_t per_kind, std::size_t length, std::uint64_t seed) {
    return load_samples(synthetic_corpus(per_kind, length, seed));
}

ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::IoError;
}

} // namespace

TEST_CASE("summary statistics") {
    const std::vector<double> v{4, 1, 3, 2};
    CHECK(mean(v) == 2.5);
    CHECK(median(v) == 2.5);
    CHECK(median(std::vector<double>{5, 1, 3}) == 3);
    CHECK(stddev(v) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-12));
    CHECK(stddev(std::vector<double>{7}) == 0);
    CHECK(code_of([] { mean(std::vector<double>{}); }) == ErrorCode::EmptyInput);
    CHECK(code_of([] { median(std::vector<double>{}); }) == ErrorCode::EmptyInput);
    CHECK(average_ranks(std::vector<double>{10, 20, 10, 30}) == std::vector<double>{1.5, 3, 1.5, 4});
}

TEST_CASE("spearman against the rank definition") {
    Xoshiro256 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(40);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = static_cast<double>(rng.below(8)); // plenty of ties
            y[i] = trial % 2 ? x[i] + 0.5 * static_cast<double>(rng.below(5)) : rng.uniform();
        }
        const bool flat = std::all_of(x.begin(), x.end(), [&](double a) { return a == x[0]; }) ||
                          std::all_of(y.begin(), y.end(), [&](double a) { return a == y[0]; });
        const auto rho = spearman(x, y);
        if (flat) {
            CHECK_FALSE(rho.has_value());
            continue;
        }
        REQUIRE(rho.has_value());
        CHECK(std::abs(*rho - testsupport::spearman_oracle(x, y)) < 1e-9);
    }
    CHECK(*spearman(std::vector<double>{1, 2, 3}, std::vector<double>{10, 100, 1000}) == doctest::Approx(1.0));
    CHECK(*spearman(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(spearman(std::vector<double>{1, 2}, std::vector<double>{1}), Error);
}

TEST_CASE("time_sample") {
    const LabeledBytes s{"noise", types::Txt, testsupport::random_bytes(65536, 1)};
    BenchOptions opt;
    opt.repetitions = 1;
    CHECK(code_of([&] { time_sample(EstimatorId::ZIP, s, 4096, opt); }) == ErrorCode::InvalidConfig);
    opt.repetitions = 3;
    const auto small = time_sample(EstimatorId::ZIP, s, 256, opt);
    const auto large = time_sample(EstimatorId::ZIP, s, 4096, opt);
    CHECK(small.window_bytes == 256);
    CHECK(large.window_bytes == 4096);
    CHECK(large.elapsed_us > small.elapsed_us);
    CHECK(large.complexity > 0.95);
    CHECK(large.throughput == doctest::Approx(large.window_bytes / (large.elapsed_us * 1e-6)));
    CHECK(large.sample_id == "noise");

    // The complexity column is the mean window estimate, independent of timing.
    double sum = 0;
    const auto windows = partition(s.data, 4096);
    for (const auto& w : windows) sum += estimate_zip(w).value;
    CHECK(large.complexity == doctest::Approx(sum / static_cast<double>(windows.size())).epsilon(1e-12));
}

TEST_CASE("aggregates are recomputable from records") {
    const auto samples = small_corpus(3, 2048, 4);
    const std::vector<EstimatorId> ids{EstimatorId::H, EstimatorId::ZIP};
    const auto rep = throughput_per_type(ids, 1024, samples);
    CHECK(rep.records.size() == ids.size() * samples.size());
    CHECK(rep.aggregates.size() == ids.size() * std::size(kAllSyntheticKinds));
    CHECK(rep.repetitions == 3);
    CHECK_FALSE(rep.environment.empty());
    for (const auto& a : rep.aggregates) {
        std::vector<double> t, c, tp;
        for (const auto& r : rep.records)
            if (r.estimator == a.estimator && r.type_label == a.type_label && r.window_size == a.window_size)
                t.push_back(r.elapsed_us), c.push_back(r.complexity), tp.push_back(r.throughput);
        REQUIRE(t.size() == a.count);
        double m = 0;
        for (double x : t) m += x;
        CHECK(a.mean_elapsed_us == doctest::Approx(m / static_cast<double>(t.size())));
        std::sort(t.begin(), t.end());
        CHECK(a.median_elapsed_us == t[1]);
        double mc = 0;
        for (double x : c) mc += x;
        CHECK(a.mean_complexity == doctest::Approx(mc / static_cast<double>(c.size())));
    }
    // No estimator of the second family was timed, so only one family remains.
    REQUIRE(rep.families.size() == 1);
    CHECK(rep.families[0].name == "fig14");
    CHECK(rep.families[0].estimators == std::vector<EstimatorId>{EstimatorId::ZIP, EstimatorId::H});

    const auto j = report_to_json(rep);
    CHECK(j.at("records").size() == rep.records.size());
    CHECK(j.at("aggregates").size() == rep.aggregates.size());
    const auto csv = report_to_csv(rep);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + static_cast<long>(rep.records.size() + rep.aggregates.size()));
}

TEST_CASE("window and complexity profiles") {
    const auto samples = small_corpus(2, 16384, 6);
    const std::vector<EstimatorId> ids{EstimatorId::ZIP};
    const std::vector<std::size_t> sizes{256, 4096};
    const auto rep = profile_time_vs_window(ids, sizes, samples);
    REQUIRE(rep.correlations.size() == 1);
    CHECK(rep.correlations[0].name == "time_vs_window");
    REQUIRE(rep.correlations[0].rho.has_value());
    CHECK(*rep.correlations[0].rho > 0);
    CHECK(code_of([&] { profile_time_vs_window(ids, std::vector<std::size_t>{4096}, samples); }) ==
          ErrorCode::InvalidConfig);
    CHECK(code_of([&] { profile_time_vs_window(ids, sizes, std::vector<LabeledBytes>{}); }) == ErrorCode::EmptyInput);

    const auto c = profile_time_vs_complexity(ids, 4096, samples);
    CHECK(c.correlations[0].name == "time_vs_complexity");
    // All-zero samples have no complexity variance.
    const std::vector<LabeledBytes> flat{{"a", types::Txt, Bytes(8192, 0)}, {"b", types::Txt, Bytes(8192, 0)}};
    CHECK_FALSE(profile_time_vs_complexity(ids, 4096, flat).correlations[0].rho.has_value());
}

TEST_CASE("trade-off and effort studies") {
    const auto all = load_samples(synthetic_corpus(6, 8192, 9));
    std::vector<LabeledBytes> tr, te;
    for (std::size_t i = 0; i < all.size(); ++i) (i % 3 == 0 ? te : tr).push_back(all[i]);
    const std::vector<std::vector<EstimatorId>> combos{{EstimatorId::ZIP}, {EstimatorId::H, EstimatorId::ZIP}};
    const auto rows = tradeoff_time_vs_accuracy(combos, tr, te, 4096);
    REQUIRE(rows.size() == 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].model.schema().estimators == combos[i]);
        CHECK(rows[i].evaluation.total == te.size());
        CHECK(rows[i].accuracy >= 0);
        CHECK(rows[i].accuracy <= 1);
    }
    CHECK(rows[1].total_time_us > rows[0].total_time_us);

    const std::vector<int> efforts{0, 9};
    const auto eff = accuracy_vs_compression(EstimatorId::ZIP, efforts, tr, te, 4096);
    REQUIRE(eff.size() == 2);
    CHECK(eff[1].mean_ratio < eff[0].mean_ratio);
    CHECK(code_of([&] { accuracy_vs_compression(EstimatorId::H, efforts, tr, te, 4096); }) == ErrorCode::Unsupported);
    CHECK(code_of([&] { accuracy_vs_compression(EstimatorId::BZ, efforts, tr, te, 4096); }) ==
          ErrorCode::InvalidConfig);

    const auto prof = mean_complexity_profile(std::vector<EstimatorId>{EstimatorId::H, EstimatorId::ZIP}, all);
    REQUIRE(prof.size() == 2);
    CHECK(prof[1].second < prof[0].second);
}

TEST_CASE("figure datasets") {
    FigureInputs in;
    const auto all = load_samples(synthetic_corpus(3, 4096, 2));
    for (std::size_t i = 0; i < all.size(); ++i) (i % 3 == 0 ? in.test : in.train).push_back(all[i]);
    in.estimators = {EstimatorId::H, EstimatorId::ZIP, EstimatorId::BZ};
    in.combinations = {{EstimatorId::H}, {EstimatorId::H, EstimatorId::ZIP}};
    in.window_sizes = {256, 1024};
    in.window_size = 1024;
    const std::pair<const char*, const char*> headers[] = {
        {"fig09", "estimator,mean_complexity,mean_elapsed_us"},
        {"fig10", "window_size,estimator,median_elapsed_us"},
        {"fig11", "estimator,type,sample,complexity,elapsed_us"},
        {"fig12", "combination,total_time_us,accuracy"},
        {"fig13", "estimator,effort,mean_ratio,accuracy"},
        {"fig14", "type,estimator,mean_throughput_bps"},
        {"fig15", "type,estimator,mean_throughput_bps"}};
    for (const auto& [fig, header] : headers) {
        CAPTURE(fig);
        CHECK(is_figure_id(fig));
        const auto csv = figure_csv(fig, in);
        std::istringstream lines(csv);
        std::string first;
        std::getline(lines, first);
        CHECK(first == header);
        CHECK(std::count(csv.begin(), csv.end(), '\n') > 1);
    }
    // fig13 covers 5 ZIP levels and 2 BZ levels.
    const auto fig13 = figure_csv("fig13", in);
    CHECK(std::count(fig13.begin(), fig13.end(), '\n') == 1 + 5 + 2);
    CHECK_FALSE(is_figure_id("fig16"));
    CHECK(code_of([&] { figure_csv("fig16", in); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("entropy outpaces block sorting on every type") {
    // Measured margin on this machine is about 60x at 4 KiB windows.
    const auto samples = small_corpus(2, 16384, 12);
    const std::vector<EstimatorId> ids{EstimatorId::H, EstimatorId::BZ};
    const auto rep = throughput_per_type(ids, 4096, samples);
    CHECK(rep.aggregates.size() == 2 * std::size(kAllSyntheticKinds));
    for (const auto& h : rep.aggregates) {
        if (h.estimator != EstimatorId::H) continue;
        for (const auto& bz : rep.aggregates)
            if (bz.estimator == EstimatorId::BZ && bz.type_label == h.type_label) {
                CAPTURE(h.type_label.name());
                CHECK(h.mean_throughput > bz.mean_throughput);
            }
    }
}

TEST_CASE("mean complexity profile averages per entry") {
    const auto one = small_corpus(1, 4096, 3);
    const std::vector<EstimatorId> ids{EstimatorId::H, EstimatorId::ZIP};
    const std::vector<LabeledBytes> single{one[2]};
    const auto p = mean_complexity_profile(ids, single);
    CHECK(p[0].second == estimate_entropy({0, single[0].data}).value);
    CHECK(p[1].second == estimate_zip({0, single[0].data}).value);

    // A duplicated entry counts twice.
    const std::vector<LabeledBytes> pair{one[0], one[1]}, dup{one[0], one[1], one[1]};
    const auto a = mean_complexity_profile(ids, pair), b = mean_complexity_profile(ids, dup);
    const double h0 = estimate_entropy({0, one[0].data}).value, h1 = estimate_entropy({0, one[1].data}).value;
    CHECK(a[0].second == doctest::Approx((h0 + h1) / 2).epsilon(1e-12));
    CHECK(b[0].second == doctest::Approx((h0 + 2 * h1) / 3).epsilon(1e-12));
    CHECK(code_of([&] { mean_complexity_profile(ids, std::vector<LabeledBytes>{}); }) == ErrorCode::EmptyInput);
}
