#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kprobe/bench.hpp"
#include "kprobe/classifier.hpp"
#include "kprobe/corpus.hpp"
#include "kprobe/estimators.hpp"
#include "kprobe/probe.hpp"

#ifndef KPROBE_VERSION
#define KPROBE_VERSION "0.0.0"
#endif

namespace kprobe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::IoError:
    case ErrorCode::EmptyInput:
    case ErrorCode::CorruptData:
    case ErrorCode::ParseError:
        return kExitIo;
    case ErrorCode::ModelMismatch:
        return kExitModelMismatch;
    case ErrorCode::InsufficientSamples:
    case ErrorCode::DegenerateFeatures:
        return kExitTraining;
    default:
        return kExitUsage;
    }
}

namespace {

// Raised for problems only the front end can see (bad flag combinations).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A library error that should map to a fixed exit code regardless of its kind.
struct StageError : std::runtime_error {
    int code;
    StageError(int c, const std::string& m) : std::runtime_error(m), code(c) {}
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct ProbeFlags {
    std::string config_path;
    bool dump = false;
    std::size_t window = kDefaultWindowSize;
    double rate = 1.0;
    std::string filter = "none";
    std::size_t header_len = 0, record_len = 0;
    std::string estimators;
    std::string output_mode = "per-window";
    CLI::Option *o_window{}, *o_rate{}, *o_filter{}, *o_header{}, *o_record{}, *o_est{}, *o_mode{};

    void add(CLI::App* app, bool with_output_mode) {
        app->add_option("--config", config_path, "Probe configuration JSON (flags override it)");
        app->add_flag("--dump-config", dump, "Print the effective probe configuration as JSON and exit");
        o_window = app->add_option("-w,--window", window, "Window size in bytes (default 4096)");
        o_rate = app->add_option("-s,--sampling-rate", rate, "Fraction of each 4 KiB block analyzed (default 1.0)");
        o_filter = app->add_option("--filter", filter, "none | header-only | payload-only");
        o_header = app->add_option("--header-len", header_len, "Header bytes per record for --filter");
        o_record = app->add_option("--record-len", record_len, "Record length for --filter");
        o_est = app->add_option("-e,--estimators", estimators, "Comma-separated estimator ids (default H,LZ,ZIP,BZ,PSI)");
        if (with_output_mode)
            o_mode = app->add_option("--output-mode", output_mode, "per-window | single-type");
    }

    bool estimators_given() const { return o_est->count() > 0; }

    ProbeConfig resolve() const {
        ProbeConfig c;
        if (!config_path.empty()) {
            std::ifstream f(config_path);
            if (!f) throw Error(ErrorCode::IoError, "cannot read config '" + config_path + "'");
            json j;
            try {
                j = json::parse(f);
            } catch (const json::exception& e) {
                throw Error(ErrorCode::ParseError, "config '" + config_path + "': " + e.what());
            }
            c = probe_config_from_json(j);
        }
        if (o_window->count()) c.window_size = window;
        if (o_rate->count()) c.sampling_rate = rate;
        if (o_filter->count()) c.filter.mode = parse_filter_mode(filter);
        if (o_header->count()) c.filter.header_len = header_len;
        if (o_record->count()) c.filter.record_len = record_len;
        if (o_est->count()) c.estimators = parse_estimator_list(estimators);
        if (o_mode && o_mode->count()) c.output_mode = parse_output_mode(output_mode);
        c.validate();
        return c;
    }
};

// Writes to the named file, or to `out` when the path is empty or "-".
class Sink {
public:
    Sink(const std::string& path, std::ostream& out) : stream_(&out) {
        if (!path.empty() && path != "-") {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
            if (!*file_) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
            stream_ = file_.get();
        }
    }
    std::ostream& get() { return *stream_; }
    void finish() {
        stream_->flush();
        if (!*stream_) throw Error(ErrorCode::IoError, "write failed");
    }

private:
    std::unique_ptr<std::ofstream> file_;
    std::ostream* stream_;
};

Bytes read_input(const std::string& path, std::istream& in) {
    if (path.empty() || path == "-") {
        Bytes data;
        char buf[65536];
        while (in.read(buf, sizeof buf) || in.gcount() > 0)
            data.insert(data.end(), buf, buf + in.gcount());
        if (in.bad()) throw Error(ErrorCode::IoError, "cannot read stdin");
        return data;
    }
    return read_file(path);
}

Manifest load_corpus(const std::string& path, std::ostream& err) {
    if (path.empty()) throw UsageError("a corpus directory or manifest is required");
    if (fs::is_directory(path)) {
        std::vector<std::string> warnings;
        auto m = scan_corpus(path, &warnings);
        for (const auto& w : warnings) err << "warning: " << w << '\n';
        return m;
    }
    if (!fs::exists(path)) throw Error(ErrorCode::IoError, "corpus '" + path + "' does not exist");
    return read_manifest(path);
}

std::vector<LabeledSample> featurize(const Manifest& m, const ProbeConfig& cfg, unsigned jobs) {
    std::vector<LabeledSample> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        const auto data = load_entry(m, e);
        const auto map = build_map(data, cfg, nullptr, {jobs, nullptr}, e.source);
        out.push_back({features_from_map(map), e.label});
    }
    return out;
}

void check_format(const std::string& f) {
    if (f != "csv" && f != "json") throw UsageError("--format must be csv or json, got '" + f + "'");
}

// ---- subcommands -----------------------------------------------------------

struct EstimateArgs {
    std::string input, estimators = "H,LZ,ZIP,BZ,PSI", output, format = "csv";
};

int cmd_estimate(const EstimateArgs& a, std::istream& in, std::ostream& out) {
    check_format(a.format);
    const auto ids = parse_estimator_list(a.estimators);
    for (auto id : ids) EstimatorRegistry::builtin().at(id);
    const Bytes data = read_input(a.input, in);
    if (data.empty()) throw Error(ErrorCode::EmptyInput, "input is empty");
    Sink sink(a.output, out);
    json arr = json::array();
    for (auto id : ids) {
        const auto e = run_estimator(id, {0, data});
        if (a.format == "json") {
            arr.push_back({{"estimator", std::string(to_string(id))},
                           {"value", e.value},
                           {"raw_output_bits", e.raw_output_bits},
                           {"input_bits", e.input_bits},
                           {"elapsed_us", e.elapsed_us}});
        } else {
            sink.get() << to_string(id) << ',' << fmt("%.6f", e.value) << ',' << e.raw_output_bits << ','
                       << fmt("%.3f", e.elapsed_us) << '\n';
        }
    }
    if (a.format == "json") sink.get() << arr.dump(2) << '\n';
    sink.finish();
    return kExitOk;
}

struct MapArgs {
    ProbeFlags probe;
    std::string input, model, output, passthrough, format = "csv";
    bool timing = false;
    unsigned jobs = 0;
};

int cmd_map(const MapArgs& a, std::istream& in, std::ostream& out) {
    check_format(a.format);
    const ProbeConfig cfg = a.probe.resolve();
    if (a.probe.dump) {
        out << to_json(cfg).dump(2) << '\n';
        return kExitOk;
    }
    if ((a.passthrough == "-") && (a.output.empty() || a.output == "-"))
        throw UsageError("--passthrough - needs --output to keep the map off stdout");
    std::optional<DiscriminantModel> model;
    if (!a.model.empty()) model = load_model(a.model);
    if (cfg.output_mode == OutputMode::SingleType && !model)
        throw UsageError("--output-mode single-type requires --model");

    std::ifstream file;
    std::istream* src = &in;
    if (!a.input.empty() && a.input != "-") {
        file.open(a.input, std::ios::binary);
        if (!file) throw Error(ErrorCode::IoError, "cannot read '" + a.input + "'");
        src = &file;
    }
    std::unique_ptr<Sink> pass;
    if (!a.passthrough.empty()) pass = std::make_unique<Sink>(a.passthrough, out);

    const auto map = run_probe(*src, pass ? &pass->get() : nullptr, cfg, model ? &*model : nullptr, {a.jobs, nullptr},
                               a.input.empty() ? "-" : a.input);
    if (pass) pass->finish();
    Sink sink(a.output, out);
    const MapFormat mf{a.timing};
    if (a.format == "json")
        sink.get() << map_to_json(map, mf).dump(2) << '\n';
    else
        sink.get() << map_to_csv(map, mf);
    sink.finish();
    return kExitOk;
}

struct TrainArgs {
    ProbeFlags probe;
    std::string corpus, model_out, test_manifest, format = "csv";
    double test_fraction = 0.0;
    std::uint64_t seed = 1;
    bool no_length = false;
    unsigned jobs = 0;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    check_format(a.format);
    const ProbeConfig cfg = a.probe.resolve();
    if (a.probe.dump) {
        out << to_json(cfg).dump(2) << '\n';
        return kExitOk;
    }
    if (a.model_out.empty()) throw UsageError("--model-out is required");
    Manifest m = load_corpus(a.corpus, err);
    if (a.test_fraction > 0) {
        auto [tr, te] = split(m, a.test_fraction, a.seed);
        if (!a.test_manifest.empty()) write_manifest(te, a.test_manifest);
        m = std::move(tr);
    } else if (!a.test_manifest.empty()) {
        throw UsageError("--test-manifest needs --test-fraction");
    }
    const auto samples = featurize(m, cfg, a.jobs);

    TrainOptions opt;
    opt.estimators = cfg.estimators;
    opt.include_length = !a.no_length;
    DiscriminantModel model;
    SquaredDistanceMatrix d2;
    try {
        model = train(samples, opt);
        d2 = squared_distance_matrix(model);
    } catch (const Error& e) {
        throw StageError(kExitTraining, e.what());
    }
    save_model(model, a.model_out);

    std::map<SemanticType, std::size_t> counts;
    for (const auto& s : samples) ++counts[s.label];
    if (a.format == "json") {
        json c = json::object();
        for (const auto& [t, n] : counts) c[t.name()] = n;
        out << json{{"samples", c}, {"squared_distance", distance_matrix_to_json(d2)}, {"ridge", model.ridge()}}.dump(2)
            << '\n';
    } else {
        out << "type,samples\n";
        for (const auto& [t, n] : counts) out << t.name() << ',' << n << '\n';
        out << '\n' << distance_matrix_to_csv(d2);
    }
    if (model.ridge() > 0) err << "note: covariance was ill-conditioned; ridge " << model.ridge() << " applied\n";
    return kExitOk;
}

struct ClassifyArgs {
    ProbeFlags probe;
    std::vector<std::string> inputs;
    std::string model, output, format = "csv";
    unsigned jobs = 0;
};

int cmd_classify(const ClassifyArgs& a, std::istream& in, std::ostream& out) {
    check_format(a.format);
    ProbeConfig cfg = a.probe.resolve();
    if (a.probe.dump) {
        out << to_json(cfg).dump(2) << '\n';
        return kExitOk;
    }
    if (a.model.empty()) throw UsageError("--model is required");
    const auto model = load_model(a.model);
    if (!a.probe.estimators_given() && a.probe.config_path.empty()) cfg.estimators = model.schema().estimators;
    const std::vector<std::string> inputs = a.inputs.empty() ? std::vector<std::string>{"-"} : a.inputs;
    Sink sink(a.output, out);
    json arr = json::array();
    if (a.format == "csv") sink.get() << "source,predicted_type\n";
    for (const auto& path : inputs) {
        const Bytes data = read_input(path, in);
        const auto map = build_map(data, cfg, &model, {a.jobs, nullptr}, path);
        const auto fv = features_from_map(map);
        const auto type = classify(model, fv);
        if (a.format == "json") {
            const auto s = score(model, fv);
            json scores = json::object();
            for (std::size_t g = 0; g < s.size(); ++g) scores[model.groups()[g].name()] = s[g];
            arr.push_back({{"source", path}, {"predicted_type", type.name()}, {"scores", scores}});
        } else {
            sink.get() << path << ',' << type.name() << '\n';
        }
    }
    if (a.format == "json") sink.get() << arr.dump(2) << '\n';
    sink.finish();
    return kExitOk;
}

struct EvalArgs {
    ProbeFlags probe;
    std::string corpus, model, output, format = "csv";
    unsigned jobs = 0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    check_format(a.format);
    ProbeConfig cfg = a.probe.resolve();
    if (a.probe.dump) {
        out << to_json(cfg).dump(2) << '\n';
        return kExitOk;
    }
    if (a.model.empty()) throw UsageError("--model is required");
    const auto model = load_model(a.model);
    if (!a.probe.estimators_given() && a.probe.config_path.empty()) cfg.estimators = model.schema().estimators;
    const Manifest m = load_corpus(a.corpus, err);
    const auto samples = featurize(m, cfg, a.jobs);
    const auto ev = evaluate(model, samples);

    Sink sink(a.output, out);
    auto& o = sink.get();
    if (a.format == "json") {
        json groups = json::array(), per = json::array();
        for (std::size_t g = 0; g < ev.groups.size(); ++g) {
            groups.push_back(ev.groups[g].name());
            per.push_back(std::isnan(ev.per_group_accuracy[g]) ? json(nullptr) : json(ev.per_group_accuracy[g]));
        }
        o << json{{"total", ev.total},        {"correct", ev.correct},    {"accuracy", ev.accuracy},
                  {"groups", groups},         {"per_group_accuracy", per}, {"confusion", ev.confusion}}
                 .dump(2)
          << '\n';
    } else {
        o << "total," << ev.total << "\ncorrect," << ev.correct << "\naccuracy," << fmt("%.6f", ev.accuracy) << "\n\n";
        o << "type,accuracy\n";
        for (std::size_t g = 0; g < ev.groups.size(); ++g)
            o << ev.groups[g].name() << ','
              << (std::isnan(ev.per_group_accuracy[g]) ? std::string("") : fmt("%.6f", ev.per_group_accuracy[g]))
              << '\n';
        o << "\nactual\\predicted";
        for (const auto& g : ev.groups) o << ',' << g.name();
        o << '\n';
        for (std::size_t r = 0; r < ev.groups.size(); ++r) {
            o << ev.groups[r].name();
            for (auto n : ev.confusion[r]) o << ',' << n;
            o << '\n';
        }
    }
    sink.finish();
    return kExitOk;
}

struct MergeArgs {
    std::string source, output, format = "csv";
    double threshold = kDefaultMergeThreshold;
};

int cmd_merge_suggest(const MergeArgs& a, std::ostream& out) {
    check_format(a.format);
    if (a.source.empty()) throw UsageError("a model or distance-matrix file is required");
    std::ifstream f(a.source);
    if (!f) throw Error(ErrorCode::IoError, "cannot read '" + a.source + "'");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, a.source + ": " + e.what());
    }
    SquaredDistanceMatrix d2;
    if (j.contains("squared_distance"))
        d2 = distance_matrix_from_json(j.at("squared_distance"));
    else if (j.contains("d2"))
        d2 = distance_matrix_from_json(j);
    else
        d2 = squared_distance_matrix(model_from_json(j));

    const auto merges = suggest_merges(d2, a.threshold);
    Sink sink(a.output, out);
    if (a.format == "json") {
        json arr = json::array();
        for (const auto& s : merges)
            arr.push_back({{"first", s.first.name()}, {"second", s.second.name()}, {"squared_distance", s.d2}});
        sink.get() << arr.dump(2) << '\n';
    } else {
        sink.get() << "first,second,squared_distance\n";
        for (const auto& s : merges) sink.get() << s.first.name() << ',' << s.second.name() << ',' << fmt("%.4f", s.d2) << '\n';
    }
    sink.finish();
    return kExitOk;
}

struct BenchArgs {
    std::string selector, corpus, plot_data, report, estimators = "H,LZ,ZIP,BZ,PSI", window_sizes = "256,1024,4096,16384";
    std::size_t per_kind = 20, length = kDefaultSyntheticLength, window = kDefaultWindowSize;
    std::uint64_t seed = 1;
    double test_fraction = 0.3;
    unsigned repetitions = 3;
};

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
    std::vector<std::string> figures;
    if (a.selector == "all")
        figures.assign(std::begin(kFigureIds), std::end(kFigureIds));
    else if (is_figure_id(a.selector))
        figures.push_back(a.selector);
    else
        throw UsageError("unknown figure selector '" + a.selector + "' (fig09 .. fig15 or all)");

    FigureInputs in;
    in.estimators = parse_estimator_list(a.estimators);
    for (auto id : in.estimators) EstimatorRegistry::builtin().at(id);
    in.window_sizes.clear();
    std::stringstream ws(a.window_sizes);
    for (std::string tok; std::getline(ws, tok, ',');) {
        try {
            in.window_sizes.push_back(std::stoul(tok));
        } catch (const std::exception&) {
            throw UsageError("bad window size '" + tok + "'");
        }
    }
    in.window_size = a.window;
    in.options.repetitions = a.repetitions;
    in.options.seed = a.seed;
    if (a.repetitions < 3) throw UsageError("--repetitions must be at least 3");
    // Only combinations fully covered by the enabled estimators are studied.
    std::vector<std::vector<EstimatorId>> combos;
    for (const auto& c : in.combinations)
        if (std::all_of(c.begin(), c.end(), [&](EstimatorId id) {
                return std::find(in.estimators.begin(), in.estimators.end(), id) != in.estimators.end();
            }))
            combos.push_back(c);
    in.combinations = std::move(combos);

    const Manifest m = a.corpus.empty() ? synthetic_corpus(a.per_kind, a.length, a.seed) : load_corpus(a.corpus, err);
    const auto [tr, te] = split(m, a.test_fraction, a.seed);
    in.train = load_samples(tr);
    in.test = load_samples(te);
    err << "bench: " << in.train.size() << " train / " << in.test.size() << " test samples on " << host_description()
        << '\n';

    if (!a.plot_data.empty()) {
        std::error_code ec;
        fs::create_directories(a.plot_data, ec);
        if (ec) throw Error(ErrorCode::IoError, "cannot create '" + a.plot_data + "': " + ec.message());
    }
    for (const auto& fig : figures) {
        if ((fig == "fig12" && in.combinations.empty())) {
            err << "bench: skipping fig12, no complete feature combination is enabled\n";
            continue;
        }
        const auto csv = figure_csv(fig, in);
        if (a.plot_data.empty()) {
            if (figures.size() > 1) out << "# " << fig << '\n';
            out << csv;
        } else {
            const auto path = fs::path(a.plot_data) / (fig + ".csv");
            Sink sink(path.string(), out);
            sink.get() << csv;
            sink.finish();
            err << "wrote " << path.string() << '\n';
        }
    }
    if (!a.report.empty()) {
        std::vector<LabeledBytes> all(in.train.begin(), in.train.end());
        all.insert(all.end(), in.test.begin(), in.test.end());
        const auto rep = profile_time_vs_window(in.estimators, in.window_sizes, all, in.options);
        Sink sink(a.report, out);
        if (fs::path(a.report).extension() == ".csv")
            sink.get() << report_to_csv(rep);
        else
            sink.get() << report_to_json(rep).dump(2) << '\n';
        sink.finish();
    }
    return kExitOk;
}

struct SynthArgs {
    std::string out_dir, manifest, kind, kinds, embed, output;
    std::size_t per_kind = 20, length = kDefaultSyntheticLength;
    std::uint64_t seed = 1;
};

// KIND:LEN@OFFSET
SyntheticSpec parse_embed(const std::string& s, std::uint64_t seed, std::size_t& offset) {
    const auto colon = s.find(':'), at = s.find('@');
    if (colon == std::string::npos || at == std::string::npos || at < colon)
        throw UsageError("--embed expects KIND:LENGTH@OFFSET, got '" + s + "'");
    try {
        offset = std::stoul(s.substr(at + 1));
        return {parse_synthetic_kind(s.substr(0, colon)), std::stoul(s.substr(colon + 1, at - colon - 1)), seed + 1};
    } catch (const std::logic_error&) {
        throw UsageError("--embed expects KIND:LENGTH@OFFSET, got '" + s + "'");
    }
}

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
    if (!a.kind.empty()) {
        Bytes data = generate_synthetic({parse_synthetic_kind(a.kind), a.length, a.seed});
        if (!a.embed.empty()) {
            std::size_t offset = 0;
            const auto payload = generate_synthetic(parse_embed(a.embed, a.seed, offset));
            auto r = splice(data, payload, offset);
            err << "embedded span [" << r.span_begin << ',' << r.span_end << ")\n";
            data = std::move(r.data);
        }
        Sink sink(a.output, out);
        sink.get().write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
        sink.finish();
        return kExitOk;
    }
    if (a.out_dir.empty() && a.manifest.empty()) throw UsageError("synth needs --kind, --out or --manifest");
    std::vector<SyntheticKind> kinds;
    if (a.kinds.empty()) {
        kinds.assign(std::begin(kAllSyntheticKinds), std::end(kAllSyntheticKinds));
    } else {
        std::stringstream ss(a.kinds);
        for (std::string tok; std::getline(ss, tok, ',');) kinds.push_back(parse_synthetic_kind(tok));
    }
    Manifest m = synthetic_corpus(a.per_kind, a.length, a.seed, kinds);
    if (!a.out_dir.empty()) {
        // Materialize as <dir>/<kind>/<n>.bin so scan_corpus can read it back.
        Manifest files;
        files.seed = a.seed;
        files.base_dir = a.out_dir;
        std::map<SemanticType, std::size_t> next;
        for (const auto& e : m.entries) {
            const auto data = load_entry(m, e);
            const auto rel = fs::path(e.label.name()) / (std::to_string(next[e.label]++) + ".bin");
            const auto path = fs::path(a.out_dir) / rel;
            std::error_code ec;
            fs::create_directories(path.parent_path(), ec);
            std::ofstream f(path, std::ios::binary);
            f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
            if (!f) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
            files.entries.push_back({rel.generic_string(), e.label, e.split, data.size()});
        }
        m = std::move(files);
    }
    if (!a.manifest.empty()) write_manifest(m, a.manifest);
    err << "synth: " << m.entries.size() << " samples\n";
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"kprobe: windowed complexity estimation and semantic type discrimination"};
    app.require_subcommand(1);
    app.set_version_flag("--version",
                         std::string("kprobe ") + KPROBE_VERSION + " (model format " +
                             std::to_string(kModelFormatVersion) + ", manifest format " +
                             std::to_string(kManifestVersion) + ")");

    EstimateArgs est;
    auto* s_est = app.add_subcommand("estimate", "Whole-input complexity estimates, one line per estimator");
    s_est->add_option("input", est.input, "Input file, '-' or omitted for stdin");
    s_est->add_option("-e,--estimators", est.estimators, "Comma-separated estimator ids");
    s_est->add_option("-o,--output", est.output, "Output file (default stdout)");
    s_est->add_option("--format", est.format, "csv | json");

    MapArgs map;
    auto* s_map = app.add_subcommand("map", "Per-window complexity map of a stream");
    map.probe.add(s_map, true);
    s_map->add_option("input", map.input, "Input file, '-' or omitted for stdin");
    s_map->add_option("-m,--model", map.model, "Discriminant model for per-window types");
    s_map->add_option("-o,--output", map.output, "Output file (default stdout)");
    s_map->add_option("--passthrough", map.passthrough, "Copy the unmodified input stream here ('-' for stdout)");
    s_map->add_option("--format", map.format, "csv | json");
    s_map->add_flag("--timing", map.timing, "Include per-estimate elapsed time columns");
    s_map->add_option("-j,--jobs", map.jobs, "Estimation workers (default: available parallelism)");

    TrainArgs tr;
    auto* s_train = app.add_subcommand("train", "Train a discriminant model from a labeled corpus");
    tr.probe.add(s_train, false);
    s_train->add_option("corpus", tr.corpus, "Corpus directory (<root>/<Type>/files) or manifest file");
    s_train->add_option("--model-out", tr.model_out, "Where to write the model JSON");
    s_train->add_option("--test-fraction", tr.test_fraction, "Hold out this fraction per type before training");
    s_train->add_option("--test-manifest", tr.test_manifest, "Write the held-out entries to this manifest");
    s_train->add_option("--seed", tr.seed, "Split seed");
    s_train->add_flag("--no-length", tr.no_length, "Leave the sample length out of the features");
    s_train->add_option("--format", tr.format, "csv | json");
    s_train->add_option("-j,--jobs", tr.jobs, "Estimation workers");

    ClassifyArgs cl;
    auto* s_cl = app.add_subcommand("classify", "Predict one semantic type per input file");
    cl.probe.add(s_cl, false);
    s_cl->add_option("inputs", cl.inputs, "Input files ('-' for stdin)");
    s_cl->add_option("-m,--model", cl.model, "Discriminant model");
    s_cl->add_option("-o,--output", cl.output, "Output file (default stdout)");
    s_cl->add_option("--format", cl.format, "csv | json");
    s_cl->add_option("-j,--jobs", cl.jobs, "Estimation workers");

    EvalArgs ev;
    auto* s_ev = app.add_subcommand("eval", "Accuracy and confusion matrix of a model on a labeled corpus");
    ev.probe.add(s_ev, false);
    s_ev->add_option("corpus", ev.corpus, "Corpus directory or manifest file");
    s_ev->add_option("-m,--model", ev.model, "Discriminant model");
    s_ev->add_option("-o,--output", ev.output, "Output file (default stdout)");
    s_ev->add_option("--format", ev.format, "csv | json");
    s_ev->add_option("-j,--jobs", ev.jobs, "Estimation workers");

    MergeArgs mg;
    auto* s_mg = app.add_subcommand("merge-suggest", "Type pairs too close to call");
    s_mg->add_option("source", mg.source, "Model JSON or squared-distance matrix JSON");
    s_mg->add_option("-t,--threshold", mg.threshold, "Squared-distance threshold (default 1.0)");
    s_mg->add_option("-o,--output", mg.output, "Output file (default stdout)");
    s_mg->add_option("--format", mg.format, "csv | json");

    BenchArgs be;
    auto* s_be = app.add_subcommand("bench", "Timing and accuracy studies; emits per-figure CSV data");
    s_be->add_option("selector", be.selector, "fig09 .. fig15 or all")->required();
    s_be->add_option("--corpus", be.corpus, "Corpus directory or manifest (default: seeded synthetic corpus)");
    s_be->add_option("--per-kind", be.per_kind, "Synthetic samples per kind");
    s_be->add_option("--length", be.length, "Synthetic sample length");
    s_be->add_option("--seed", be.seed, "Corpus and split seed");
    s_be->add_option("--test-fraction", be.test_fraction, "Held-out fraction per type");
    s_be->add_option("--repetitions", be.repetitions, "Timed repetitions after one warm-up (>= 3)");
    s_be->add_option("-w,--window", be.window, "Window size for fixed-window studies");
    s_be->add_option("--window-sizes", be.window_sizes, "Window sizes for the window study");
    s_be->add_option("-e,--estimators", be.estimators, "Estimators to study");
    s_be->add_option("--plot-data", be.plot_data, "Write figNN.csv files to this directory");
    s_be->add_option("--report", be.report, "Write the raw timing report (.csv or .json)");
    s_be->add_option("-j,--jobs", "Ignored: timing always runs on one worker");

    SynthArgs sy;
    auto* s_sy = app.add_subcommand("synth", "Generate seeded synthetic samples or corpora");
    s_sy->add_option("--kind", sy.kind, "Emit one sample of this kind");
    s_sy->add_option("--embed", sy.embed, "With --kind: splice KIND:LENGTH@OFFSET into the sample");
    s_sy->add_option("-o,--output", sy.output, "Output file for --kind (default stdout)");
    s_sy->add_option("--out", sy.out_dir, "Write a corpus directory <dir>/<kind>/<n>.bin");
    s_sy->add_option("--manifest", sy.manifest, "Write a manifest of the corpus");
    s_sy->add_option("--kinds", sy.kinds, "Comma-separated kinds (default all)");
    s_sy->add_option("--per-kind", sy.per_kind, "Samples per kind");
    s_sy->add_option("--length", sy.length, "Sample length in bytes");
    s_sy->add_option("--seed", sy.seed, "Seed");

    std::vector<const char*> argv{"kprobe"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (s_est->parsed()) return cmd_estimate(est, in, out);
        if (s_map->parsed()) return cmd_map(map, in, out);
        if (s_train->parsed()) return cmd_train(tr, out, err);
        if (s_cl->parsed()) return cmd_classify(cl, in, out);
        if (s_ev->parsed()) return cmd_eval(ev, out, err);
        if (s_mg->parsed()) return cmd_merge_suggest(mg, out);
        if (s_be->parsed()) return cmd_bench(be, out, err);
        if (s_sy->parsed()) return cmd_synth(sy, out, err);
    } catch (const StageError& e) {
        err << "error: " << e.what() << '\n';
        return e.code;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitUsage;
}

} // namespace kprobe::cli
