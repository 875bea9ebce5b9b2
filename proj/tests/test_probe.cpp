#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kprobe/classifier.hpp"
#include "kprobe/error.hpp"
#include "kprobe/probe.hpp"
#include "test_support.hpp"

using namespace kprobe;
using testsupport::Bytes;

namespace {

ProbeConfig config_with(std::vector<EstimatorId> ids, std::size_t window = 4096) {
    ProbeConfig c;
    c.estimators = std::move(ids);
    c.window_size = window;
    return c;
}

// Two groups split on H at 0.5.
DiscriminantModel h_threshold_model() {
    return DiscriminantModel::from_coefficients(FeatureSchema{{EstimatorId::H}, false},
                                                {SemanticType("flat"), SemanticType("busy")},
                                                {{0.0, {0.0}}, {-0.5, {1.0}}});
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::ParseError;
}

// Kept length for one block, computed directly from the ceiling definition.
std::size_t kept(double rate, std::size_t block) {
    std::size_t k = 0;
    while (static_cast<double>(k) < rate * static_cast<double>(block) - 1e-9) ++k;
    return std::max<std::size_t>(k, 1);
}

Bytes sample_oracle(const Bytes& in, double rate) {
    Bytes out;
    for (std::size_t off = 0; off < in.size(); off += 4096) {
        const std::size_t b = std::min<std::size_t>(4096, in.size() - off);
        for (std::size_t i = 0; i < kept(rate, b); ++i) out.push_back(in[off + i]);
    }
    return out;
}

} // namespace

TEST_CASE("partition") {
    const Bytes ten(10, 1);
    const auto w = partition(ten, 4);
    REQUIRE(w.size() == 3);
    CHECK(w[0].offset == 0);
    CHECK(w[1].offset == 4);
    CHECK(w[2].offset == 8);
    CHECK(w[0].payload.size() == 4);
    CHECK(w[2].payload.size() == 2);
    CHECK(partition(Bytes{}, 4).empty());
    const Bytes page(4096, 0);
    CHECK(partition(page, 4096).size() == 1);
    CHECK(code_of([&] { partition(ten, 0); }) == ErrorCode::InvalidConfig);

    const Bytes data = testsupport::fuzz_bytes(10000, 3);
    Bytes joined;
    for (const auto& x : partition(data, 777)) joined.insert(joined.end(), x.payload.begin(), x.payload.end());
    CHECK(joined == data);
}

TEST_CASE("apply_filter") {
    Bytes records(30);
    for (std::size_t i = 0; i < records.size(); ++i) records[i] = static_cast<std::uint8_t>(i);
    CHECK(apply_filter(records, FilterSpec{}) == records);
    const FilterSpec header{FilterMode::HeaderOnly, 2, 10}, payload{FilterMode::PayloadOnly, 2, 10};
    CHECK(apply_filter(records, header) == Bytes{0, 1, 10, 11, 20, 21});
    const auto body = apply_filter(records, payload);
    CHECK(body.size() == 24);
    // Reinterleave header and payload parts record by record.
    const auto head = apply_filter(records, header);
    Bytes rebuilt;
    for (std::size_t r = 0; r < 3; ++r) {
        rebuilt.insert(rebuilt.end(), head.begin() + 2 * r, head.begin() + 2 * r + 2);
        rebuilt.insert(rebuilt.end(), body.begin() + 8 * r, body.begin() + 8 * r + 8);
    }
    CHECK(rebuilt == records);

    const Bytes partial(23, 7); // trailing record of 3 bytes: 2 header, 1 payload
    CHECK(apply_filter(partial, header).size() == 6);
    CHECK(apply_filter(partial, payload).size() == 17);
    CHECK(code_of([&] { apply_filter(records, FilterSpec{FilterMode::HeaderOnly, 10, 10}); }) ==
          ErrorCode::InvalidConfig);
}

TEST_CASE("sample") {
    const Bytes data = testsupport::fuzz_bytes(8192, 4);
    CHECK(sample(data, 1.0) == data);
    const auto half = sample(data, 0.5);
    REQUIRE(half.size() == 4096);
    CHECK(std::equal(half.begin(), half.begin() + 2048, data.begin()));
    CHECK(std::equal(half.begin() + 2048, half.end(), data.begin() + 4096));

    for (std::size_t n : {1u, 100u, 4095u, 4097u, 10000u, 20001u})
        for (double rate : {0.5, 0.3, 0.01, 0.999}) {
            const Bytes in = testsupport::random_bytes(n, n);
            const auto once = sample(in, rate);
            CHECK(once == sample_oracle(in, rate));
            CHECK(sample(once, rate) == sample_oracle(sample_oracle(in, rate), rate));
        }
    CHECK(code_of([&] { sample(data, 0.0); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([&] { sample(data, 1.5); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("probe config validation and JSON round trip") {
    ProbeConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.window_size == 4096);
    CHECK(c.sampling_rate == 1.0);
    CHECK(c.filter.mode == FilterMode::None);
    CHECK(format_estimator_list(c.estimators) == "H,LZ,ZIP,BZ,PSI");

    c.filter = {FilterMode::PayloadOnly, 4, 64};
    c.sampling_rate = 0.25;
    c.window_size = 1024;
    c.estimators = {EstimatorId::ZIP, EstimatorId::H};
    c.output_mode = OutputMode::SingleType;
    CHECK(probe_config_from_json(nlohmann::json::parse(to_json(c).dump())) == c);

    auto bad = ProbeConfig{};
    bad.window_size = 8;
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidConfig);
    bad = ProbeConfig{};
    bad.window_size = 256 * 1024 + 1;
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidConfig);
    bad = ProbeConfig{};
    bad.estimators = {EstimatorId::H, EstimatorId::H};
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidConfig);
    bad.estimators = {};
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidConfig);
    bad.estimators = {EstimatorId::OSCR};
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::UnknownEstimator);
    CHECK(code_of([] { probe_config_from_json(nlohmann::json{{"estimators", {"H", "gzip"}}}); }) ==
          ErrorCode::UnknownEstimator);
    CHECK(code_of([] { probe_config_from_json(nlohmann::json{{"window_size", "big"}}); }) == ErrorCode::ParseError);
}

TEST_CASE("map of zero bytes") {
    const Bytes zeros(16 * 1024, 0);
    const auto map = build_map(zeros, config_with({EstimatorId::H, EstimatorId::ZIP}));
    REQUIRE(map.records.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& r = map.records[i];
        CHECK(r.window_index == i);
        CHECK(r.offset == 4096 * i);
        CHECK(r.estimates.size() == 2);
        CHECK(r.estimates[0].estimator == EstimatorId::H);
        CHECK(r.estimates[0].value == 0.0);
        CHECK(r.estimates[1].value <= 0.05);
        CHECK_FALSE(r.predicted_type.has_value());
    }
    CHECK_FALSE(map.file_type.has_value());
    CHECK(map.input_bytes == zeros.size());
    CHECK(map.analyzed_bytes == zeros.size());
    const auto csv = map_to_csv(map);
    CHECK(csv.substr(0, csv.find('\n')) == "window_index,offset,length,H,ZIP");
    CHECK(csv.find("0,0,4096,0.000000,") == csv.find('\n') + 1);
}

TEST_CASE("map invariants over fuzzed streams") {
    kprobe::Xoshiro256 rng(5);
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t n = 1 + rng.below(40000);
        const std::size_t w = 16 + rng.below(6000);
        const Bytes data = testsupport::fuzz_bytes(n, trial);
        const auto cfg = config_with({EstimatorId::H, EstimatorId::ZIP, EstimatorId::PSI}, w);
        const auto map = build_map(data, cfg);
        CHECK(map.config == cfg);
        CHECK(map.records.size() == (n + w - 1) / w);
        std::size_t covered = 0;
        for (std::size_t i = 0; i < map.records.size(); ++i) {
            const auto& r = map.records[i];
            CHECK(r.offset == covered);
            covered += r.length;
            REQUIRE(r.estimates.size() == 3);
            CHECK(r.estimates[2].estimator == EstimatorId::PSI);
            const ByteWindow win{r.offset, std::span<const std::uint8_t>(data).subspan(r.offset, r.length)};
            CHECK(r.estimates[1].value == estimate_zip(win).value);
        }
        CHECK(covered == n);
    }
}

TEST_CASE("parallel estimation matches serial output") {
    const Bytes data = testsupport::fuzz_bytes(100000, 8);
    const auto cfg = config_with({EstimatorId::H, EstimatorId::LZ, EstimatorId::BZ}, 2048);
    const auto serial = map_to_csv(build_map(data, cfg, nullptr, {1}));
    CHECK(map_to_csv(build_map(data, cfg, nullptr, {3})) == serial);
    CHECK(map_to_csv(build_map(data, cfg, nullptr, {8})) == serial);
}

TEST_CASE("streaming probe: passthrough and equivalence with build_map") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Bytes data = testsupport::fuzz_bytes(1 + seed * 9973, seed);
        std::istringstream in(std::string(data.begin(), data.end()));
        std::ostringstream through;
        ProbeConfig cfg = config_with({EstimatorId::H, EstimatorId::ZIP}, 1000);
        if (seed % 2) {
            cfg.filter = {FilterMode::PayloadOnly, 3, 50};
            cfg.sampling_rate = 0.6;
        }
        try {
            const auto streamed = run_probe(in, &through, cfg);
            CHECK(map_to_csv(streamed) == map_to_csv(build_map(data, cfg)));
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptyInput);
        }
        const std::string out = through.str();
        CHECK(Bytes(out.begin(), out.end()) == data);
    }
}

TEST_CASE("sampling and filtering shift offsets onto the effective stream") {
    const Bytes data = testsupport::random_bytes(8192, 1);
    ProbeConfig cfg = config_with({EstimatorId::H}, 1024);
    cfg.sampling_rate = 0.5;
    const auto map = build_map(data, cfg);
    CHECK(map.records.size() == 4);
    CHECK(map.records.back().offset == 3072);
    CHECK(map.analyzed_bytes == 4096);
    CHECK(map.input_bytes == 8192);
}

TEST_CASE("probe errors") {
    const auto cfg = config_with({EstimatorId::H});
    CHECK(code_of([&] { build_map(Bytes{}, cfg); }) == ErrorCode::EmptyInput);
    ProbeConfig headers = cfg;
    headers.filter = {FilterMode::PayloadOnly, 4, 8};
    CHECK(code_of([&] { build_map(Bytes(4, 1), headers); }) == ErrorCode::EmptyInput);
    const auto model = h_threshold_model();
    CHECK(code_of([&] { build_map(Bytes(100, 1), config_with({EstimatorId::ZIP}), &model); }) ==
          ErrorCode::ModelMismatch);
}

TEST_CASE("per-window and single-type predictions") {
    Bytes data(4096 * 4, 0);
    const Bytes noise = testsupport::random_bytes(4096, 2);
    std::copy(noise.begin(), noise.end(), data.begin() + 4096);
    const auto model = h_threshold_model();
    const auto cfg = config_with({EstimatorId::ZIP, EstimatorId::H});

    const auto per = build_map(data, cfg, &model);
    REQUIRE(per.records.size() == 4);
    CHECK(per.records[0].predicted_type == SemanticType("flat"));
    CHECK(per.records[1].predicted_type == SemanticType("busy"));
    CHECK(per.records[2].predicted_type == SemanticType("flat"));
    CHECK_FALSE(per.file_type.has_value());
    const auto csv = map_to_csv(per);
    CHECK(csv.substr(0, csv.find('\n')) == "window_index,offset,length,ZIP,H,predicted_type");

    auto single_cfg = cfg;
    single_cfg.output_mode = OutputMode::SingleType;
    const auto single = build_map(data, single_cfg, &model);
    REQUIRE(single.file_type.has_value());
    // Mean H is 0.25: the file as a whole reads as flat.
    CHECK(*single.file_type == SemanticType("flat"));
    CHECK(*single.file_type == classify_file(model, per));
    for (const auto& r : single.records) CHECK(r.predicted_type == single.file_type);
    const auto single_csv = map_to_csv(single);
    CHECK(single_csv.substr(single_csv.rfind("# "), std::string::npos) == "# file_type,flat\n");
}

TEST_CASE("map serialization is deterministic; timing only on request") {
    const Bytes data = testsupport::fuzz_bytes(30000, 12);
    const auto cfg = config_with({EstimatorId::H, EstimatorId::LZ, EstimatorId::ZIP, EstimatorId::BZ, EstimatorId::PSI});
    const auto a = build_map(data, cfg, nullptr, {}, "sample"), b = build_map(data, cfg, nullptr, {}, "sample");
    CHECK(map_to_csv(a) == map_to_csv(b));
    CHECK(map_to_json(a).dump() == map_to_json(b).dump());
    CHECK(map_to_csv(a).find("elapsed") == std::string::npos);
    CHECK_FALSE(map_to_json(a).contains("processing_us"));
    const auto timed = map_to_csv(a, {true});
    CHECK(timed.find("H_elapsed_us") != std::string::npos);
    const auto j = map_to_json(a, {true});
    CHECK(j.at("processing_us").get<double>() > 0.0);
    CHECK(probe_config_from_json(j.at("config")) == cfg);
    CHECK(j.at("records").size() == a.records.size());
    CHECK(j.at("source_id") == "sample");
}
