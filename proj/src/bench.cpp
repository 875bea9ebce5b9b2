#include "kprobe/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <thread>
#include <tuple>

#include <sys/utsname.h>

#include "kprobe/error.hpp"
#include "kprobe/probe.hpp"

namespace kprobe {

namespace {

void require_nonempty(std::size_t n, const char* what) {
    if (n == 0) throw Error(ErrorCode::EmptyInput, std::string(what) + " is empty");
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

const EstimatorRegistry& registry_of(const BenchOptions& o) {
    return o.registry ? *o.registry : EstimatorRegistry::builtin();
}

void check_options(const BenchOptions& o) {
    if (o.repetitions < 3)
        throw Error(ErrorCode::InvalidConfig, "timing needs at least 3 repetitions, got " + std::to_string(o.repetitions));
}

BenchReport start_report(const BenchOptions& o) {
    BenchReport r;
    r.environment = host_description();
    r.repetitions = o.repetitions;
    r.seed = o.seed;
    return r;
}

std::string combination_name(std::span<const EstimatorId> ids) {
    std::string out;
    for (auto id : ids) {
        if (!out.empty()) out += '+';
        out += to_string(id);
    }
    return out;
}

// Mean window estimate per estimator and summed estimation time per estimator,
// one sample at a time.
struct SampleFeatures {
    FeatureVector features;
    std::map<EstimatorId, double> time_us;
};

SampleFeatures measure(const LabeledBytes& s, std::span<const EstimatorId> ids, std::size_t window_size,
                       const EstimatorRegistry& registry) {
    ProbeConfig cfg;
    cfg.estimators.assign(ids.begin(), ids.end());
    cfg.window_size = window_size;
    const auto map = build_map(s.data, cfg, nullptr, {1, &registry}, s.id);
    SampleFeatures out{features_from_map(map), {}};
    for (const auto& r : map.records)
        for (const auto& e : r.estimates) out.time_us[e.estimator] += e.elapsed_us;
    return out;
}

std::vector<EstimatorId> union_of(std::span<const std::vector<EstimatorId>> combos) {
    std::vector<EstimatorId> out;
    for (const auto& c : combos)
        for (auto id : c)
            if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
    return out;
}

} // namespace

std::vector<LabeledBytes> load_samples(const Manifest& manifest) {
    std::vector<LabeledBytes> out;
    out.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) out.push_back({e.source, e.label, load_entry(manifest, e)});
    return out;
}

double mean(std::span<const double> v) {
    require_nonempty(v.size(), "sample");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median(std::span<const double> v) {
    require_nonempty(v.size(), "sample");
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

double stddev(std::span<const double> v) {
    require_nonempty(v.size(), "sample");
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double acc = 0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error(ErrorCode::InvalidConfig, "spearman needs paired samples");
    require_nonempty(x.size(), "sample");
    const auto rx = average_ranks(x), ry = average_ranks(y);
    const double mx = mean(rx), my = mean(ry);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0 || syy == 0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

std::vector<Aggregate> aggregate(std::span<const TimingRecord> records) {
    using Key = std::tuple<EstimatorId, SemanticType, std::size_t>;
    std::map<Key, std::vector<const TimingRecord*>> cells;
    for (const auto& r : records) cells[{r.estimator, r.type_label, r.window_size}].push_back(&r);
    std::vector<Aggregate> out;
    for (const auto& [key, rs] : cells) {
        std::vector<double> t, c, tp;
        for (const auto* r : rs) {
            t.push_back(r->elapsed_us);
            c.push_back(r->complexity);
            tp.push_back(r->throughput);
        }
        out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), rs.size(), mean(t), median(t), stddev(t),
                       mean(c), mean(tp)});
    }
    return out;
}

TimingRecord time_sample(EstimatorId id, const LabeledBytes& sample, std::size_t window_size,
                         const BenchOptions& options) {
    check_options(options);
    const auto& reg = registry_of(options);
    const auto windows = partition(sample.data, window_size);
    require_nonempty(windows.size(), "sample");
    double complexity = 0;
    for (const auto& w : windows) complexity += run_estimator(id, w, reg).value; // warm-up
    std::vector<double> passes;
    for (unsigned rep = 0; rep < options.repetitions; ++rep) {
        double total = 0;
        for (const auto& w : windows) total += run_estimator(id, w, reg).elapsed_us;
        passes.push_back(total);
    }
    const double n = static_cast<double>(windows.size());
    TimingRecord r;
    r.estimator = id;
    r.type_label = sample.label;
    r.sample_id = sample.id;
    r.window_size = window_size;
    r.window_bytes = static_cast<double>(sample.data.size()) / n;
    r.complexity = complexity / n;
    r.elapsed_us = median(passes) / n;
    r.throughput = r.elapsed_us > 0 ? r.window_bytes / (r.elapsed_us * 1e-6) : 0.0;
    return r;
}

std::string host_description() {
    utsname u{};
    std::string host = uname(&u) == 0 ? std::string(u.sysname) + ' ' + u.release + ' ' + u.machine : "unknown";
    host += ", " + std::to_string(std::thread::hardware_concurrency()) + " hardware threads";
#if defined(__clang__)
    host += ", clang " __clang_version__;
#elif defined(__GNUC__)
    host += ", gcc " __VERSION__;
#endif
    return host;
}

BenchReport profile_time_vs_window(std::span<const EstimatorId> estimators, std::span<const std::size_t> window_sizes,
                                   std::span<const LabeledBytes> samples, const BenchOptions& options) {
    check_options(options);
    require_nonempty(samples.size(), "corpus");
    if (window_sizes.size() < 2) throw Error(ErrorCode::InvalidConfig, "need at least two window sizes");
    BenchReport rep = start_report(options);
    for (auto id : estimators) {
        std::vector<double> sizes, times;
        for (auto w : window_sizes)
            for (const auto& s : samples) {
                rep.records.push_back(time_sample(id, s, w, options));
                sizes.push_back(static_cast<double>(w));
                times.push_back(rep.records.back().elapsed_us);
            }
        rep.correlations.push_back({"time_vs_window", id, spearman(sizes, times)});
    }
    rep.aggregates = aggregate(rep.records);
    return rep;
}

BenchReport profile_time_vs_complexity(std::span<const EstimatorId> estimators, std::size_t window_size,
                                       std::span<const LabeledBytes> samples, const BenchOptions& options) {
    check_options(options);
    require_nonempty(samples.size(), "corpus");
    BenchReport rep = start_report(options);
    for (auto id : estimators) {
        std::vector<double> c, t;
        for (const auto& s : samples) {
            rep.records.push_back(time_sample(id, s, window_size, options));
            c.push_back(rep.records.back().complexity);
            t.push_back(rep.records.back().elapsed_us);
        }
        rep.correlations.push_back({"time_vs_complexity", id, spearman(c, t)});
    }
    rep.aggregates = aggregate(rep.records);
    return rep;
}

BenchReport throughput_per_type(std::span<const EstimatorId> estimators, std::size_t window_size,
                                std::span<const LabeledBytes> samples, const BenchOptions& options) {
    check_options(options);
    require_nonempty(samples.size(), "corpus");
    BenchReport rep = start_report(options);
    for (auto id : estimators)
        for (const auto& s : samples) rep.records.push_back(time_sample(id, s, window_size, options));
    rep.aggregates = aggregate(rep.records);
    const std::pair<const char*, std::vector<EstimatorId>> families[] = {
        {"fig14", {EstimatorId::ZIP, EstimatorId::H}},
        {"fig15", {EstimatorId::PSI, EstimatorId::LZ, EstimatorId::BZ}}};
    for (const auto& [name, ids] : families) {
        EstimatorFamily f{name, {}};
        for (auto id : ids)
            if (std::find(estimators.begin(), estimators.end(), id) != estimators.end()) f.estimators.push_back(id);
        if (!f.estimators.empty()) rep.families.push_back(std::move(f));
    }
    return rep;
}

std::vector<TradeoffRow> tradeoff_time_vs_accuracy(std::span<const std::vector<EstimatorId>> combinations,
                                                   std::span<const LabeledBytes> train,
                                                   std::span<const LabeledBytes> test, std::size_t window_size,
                                                   const EstimatorRegistry& registry) {
    require_nonempty(combinations.size(), "combination list");
    require_nonempty(train.size(), "training set");
    require_nonempty(test.size(), "test set");
    for (const auto& c : combinations) require_nonempty(c.size(), "combination");
    const auto all = union_of(combinations);

    std::vector<LabeledSample> train_set, test_set;
    std::map<EstimatorId, double> time_us;
    for (const auto* side : {&train, &test})
        for (const auto& s : *side) {
            auto m = measure(s, all, window_size, registry);
            for (const auto& [id, t] : m.time_us) time_us[id] += t;
            (side == &train ? train_set : test_set).push_back({std::move(m.features), s.label});
        }

    std::vector<TradeoffRow> rows;
    for (const auto& combo : combinations) {
        TradeoffRow row;
        row.combination = combo;
        for (auto id : combo) row.total_time_us += time_us[id];
        TrainOptions opt;
        opt.estimators = combo;
        row.model = kprobe::train(train_set, opt);
        row.evaluation = evaluate(row.model, test_set);
        row.accuracy = row.evaluation.accuracy;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<EffortRow> accuracy_vs_compression(EstimatorId id, std::span<const int> efforts,
                                               std::span<const LabeledBytes> train, std::span<const LabeledBytes> test,
                                               std::size_t window_size, const EstimatorRegistry& registry) {
    const Estimator& est = registry.at(id);
    const auto levels = est.effort_levels();
    if (levels.empty())
        throw Error(ErrorCode::Unsupported, "estimator " + std::string(to_string(id)) + " has no effort levels");
    if (efforts.size() < 2) throw Error(ErrorCode::InvalidConfig, "need at least two effort levels");
    for (int e : efforts)
        if (std::find(levels.begin(), levels.end(), e) == levels.end())
            throw Error(ErrorCode::InvalidConfig,
                        "effort " + std::to_string(e) + " is not offered by " + std::string(to_string(id)));
    require_nonempty(train.size(), "training set");
    require_nonempty(test.size(), "test set");

    std::vector<EffortRow> rows;
    for (int effort : efforts) {
        double ratio_sum = 0;
        std::size_t ratio_n = 0;
        auto featurize = [&](std::span<const LabeledBytes> side) {
            std::vector<LabeledSample> out;
            for (const auto& s : side) {
                double sum = 0;
                const auto windows = partition(s.data, window_size);
                require_nonempty(windows.size(), "sample");
                for (const auto& w : windows) sum += est.estimate_at_effort(w, effort).value;
                ratio_sum += sum;
                ratio_n += windows.size();
                FeatureVector x{{id}, {sum / static_cast<double>(windows.size())}, static_cast<double>(s.data.size())};
                out.push_back({std::move(x), s.label});
            }
            return out;
        };
        const auto tr = featurize(train), te = featurize(test);
        const auto model = kprobe::train(tr);
        rows.push_back({effort, ratio_sum / static_cast<double>(ratio_n), evaluate(model, te).accuracy});
    }
    return rows;
}

std::vector<std::pair<EstimatorId, double>> mean_complexity_profile(std::span<const EstimatorId> estimators,
                                                                    std::span<const LabeledBytes> samples,
                                                                    const EstimatorRegistry& registry) {
    require_nonempty(samples.size(), "corpus");
    std::vector<std::pair<EstimatorId, double>> out;
    for (auto id : estimators) {
        double sum = 0;
        for (const auto& s : samples) {
            const auto windows = partition(s.data, kMaxWindowSize);
            require_nonempty(windows.size(), "sample");
            double v = 0;
            for (const auto& w : windows) v += run_estimator(id, w, registry).value;
            sum += v / static_cast<double>(windows.size());
        }
        out.emplace_back(id, sum / static_cast<double>(samples.size()));
    }
    return out;
}

std::string report_to_csv(const BenchReport& r) {
    std::string out = "kind,estimator,type,window_size,sample,count,complexity,elapsed_us,median_elapsed_us,"
                      "stddev_elapsed_us,throughput_bps\n";
    for (const auto& x : r.records)
        out += "record," + std::string(to_string(x.estimator)) + ',' + x.type_label.name() + ',' +
               std::to_string(x.window_size) + ',' + x.sample_id + ",1," + fmt("%.6f", x.complexity) + ',' +
               fmt("%.3f", x.elapsed_us) + ",,," + fmt("%.1f", x.throughput) + '\n';
    for (const auto& a : r.aggregates)
        out += "aggregate," + std::string(to_string(a.estimator)) + ',' + a.type_label.name() + ',' +
               std::to_string(a.window_size) + ",," + std::to_string(a.count) + ',' + fmt("%.6f", a.mean_complexity) +
               ',' + fmt("%.3f", a.mean_elapsed_us) + ',' + fmt("%.3f", a.median_elapsed_us) + ',' +
               fmt("%.3f", a.stddev_elapsed_us) + ',' + fmt("%.1f", a.mean_throughput) + '\n';
    return out;
}

nlohmann::json report_to_json(const BenchReport& r) {
    nlohmann::json records = nlohmann::json::array(), aggs = nlohmann::json::array(), corr = nlohmann::json::array(),
                   fams = nlohmann::json::array();
    for (const auto& x : r.records)
        records.push_back({{"estimator", std::string(to_string(x.estimator))},
                           {"type", x.type_label.name()},
                           {"sample", x.sample_id},
                           {"window_size", x.window_size},
                           {"window_bytes", x.window_bytes},
                           {"complexity", x.complexity},
                           {"elapsed_us", x.elapsed_us},
                           {"throughput_bps", x.throughput}});
    for (const auto& a : r.aggregates)
        aggs.push_back({{"estimator", std::string(to_string(a.estimator))},
                        {"type", a.type_label.name()},
                        {"window_size", a.window_size},
                        {"count", a.count},
                        {"mean_elapsed_us", a.mean_elapsed_us},
                        {"median_elapsed_us", a.median_elapsed_us},
                        {"stddev_elapsed_us", a.stddev_elapsed_us},
                        {"mean_complexity", a.mean_complexity},
                        {"mean_throughput_bps", a.mean_throughput}});
    for (const auto& c : r.correlations)
        corr.push_back({{"name", c.name},
                        {"estimator", std::string(to_string(c.estimator))},
                        {"rho", c.rho ? nlohmann::json(*c.rho) : nlohmann::json(nullptr)}});
    for (const auto& f : r.families) {
        nlohmann::json ids = nlohmann::json::array();
        for (auto id : f.estimators) ids.push_back(std::string(to_string(id)));
        fams.push_back({{"name", f.name}, {"estimators", ids}});
    }
    return {{"environment", r.environment}, {"repetitions", r.repetitions}, {"seed", r.seed},
            {"records", records},           {"aggregates", aggs},           {"correlations", corr},
            {"families", fams}};
}

bool is_figure_id(std::string_view s) noexcept {
    return std::any_of(std::begin(kFigureIds), std::end(kFigureIds), [&](const char* f) { return s == f; });
}

std::string figure_csv(std::string_view figure, const FigureInputs& in) {
    std::vector<LabeledBytes> all(in.train.begin(), in.train.end());
    all.insert(all.end(), in.test.begin(), in.test.end());
    const auto& reg = registry_of(in.options);

    if (figure == "fig09") {
        const auto rep = profile_time_vs_complexity(in.estimators, in.window_size, all, in.options);
        std::string out = "estimator,mean_complexity,mean_elapsed_us\n";
        for (auto id : in.estimators) {
            std::vector<double> c, t;
            for (const auto& r : rep.records)
                if (r.estimator == id) c.push_back(r.complexity), t.push_back(r.elapsed_us);
            out += std::string(to_string(id)) + ',' + fmt("%.6f", mean(c)) + ',' + fmt("%.3f", mean(t)) + '\n';
        }
        return out;
    }
    if (figure == "fig10") {
        const auto rep = profile_time_vs_window(in.estimators, in.window_sizes, all, in.options);
        std::string out = "window_size,estimator,median_elapsed_us\n";
        for (auto w : in.window_sizes)
            for (auto id : in.estimators) {
                std::vector<double> t;
                for (const auto& r : rep.records)
                    if (r.estimator == id && r.window_size == w) t.push_back(r.elapsed_us);
                out += std::to_string(w) + ',' + std::string(to_string(id)) + ',' + fmt("%.3f", median(t)) + '\n';
            }
        return out;
    }
    if (figure == "fig11") {
        const auto rep = profile_time_vs_complexity(in.estimators, in.window_size, all, in.options);
        std::string out = "estimator,type,sample,complexity,elapsed_us\n";
        for (const auto& r : rep.records)
            out += std::string(to_string(r.estimator)) + ',' + r.type_label.name() + ',' + r.sample_id + ',' +
                   fmt("%.6f", r.complexity) + ',' + fmt("%.3f", r.elapsed_us) + '\n';
        for (const auto& c : rep.correlations)
            out += "# spearman_time_vs_complexity," + std::string(to_string(c.estimator)) + ',' +
                   (c.rho ? fmt("%.6f", *c.rho) : std::string("undefined")) + '\n';
        return out;
    }
    if (figure == "fig12") {
        const auto rows = tradeoff_time_vs_accuracy(in.combinations, in.train, in.test, in.window_size, reg);
        std::string out = "combination,total_time_us,accuracy\n";
        for (const auto& r : rows)
            out += combination_name(r.combination) + ',' + fmt("%.3f", r.total_time_us) + ',' + fmt("%.6f", r.accuracy) + '\n';
        return out;
    }
    if (figure == "fig13") {
        std::string out = "estimator,effort,mean_ratio,accuracy\n";
        const std::pair<EstimatorId, const std::vector<int>*> studies[] = {{EstimatorId::ZIP, &in.zip_efforts},
                                                                          {EstimatorId::BZ, &in.bz_efforts}};
        for (const auto& [id, efforts] : studies) {
            if (std::find(in.estimators.begin(), in.estimators.end(), id) == in.estimators.end()) continue;
            for (const auto& r : accuracy_vs_compression(id, *efforts, in.train, in.test, in.window_size, reg))
                out += std::string(to_string(id)) + ',' + std::to_string(r.effort) + ',' + fmt("%.6f", r.mean_ratio) +
                       ',' + fmt("%.6f", r.accuracy) + '\n';
        }
        return out;
    }
    if (figure == "fig14" || figure == "fig15") {
        const auto rep = throughput_per_type(in.estimators, in.window_size, all, in.options);
        std::string out = "type,estimator,mean_throughput_bps\n";
        for (const auto& f : rep.families) {
            if (f.name != figure) continue;
            for (auto id : f.estimators)
                for (const auto& a : rep.aggregates)
                    if (a.estimator == id)
                        out += a.type_label.name() + ',' + std::string(to_string(id)) + ',' +
                               fmt("%.1f", a.mean_throughput) + '\n';
        }
        return out;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown figure '" + std::string(figure) + "' (fig09 .. fig15)");
}

} // namespace kprobe
