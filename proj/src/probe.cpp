#include "kprobe/probe.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <istream>
#include <ostream>
#include <set>
#include <thread>

#include "kprobe/classifier.hpp"
#include "kprobe/error.hpp"

namespace kprobe {

namespace {

using Clock = std::chrono::steady_clock;

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

// Bytes kept from a sampling block of `len` bytes. The epsilon keeps exact
// products such as 0.5 * 4096 from rounding up on representation error.
std::size_t sample_keep(double rate, std::size_t len) {
    if (len == 0) return 0;
    const double want = rate * static_cast<double>(len);
    const auto keep = static_cast<std::size_t>(std::ceil(want - 1e-9));
    return std::clamp<std::size_t>(keep, 1, len);
}

void check_rate(double rate) {
    if (!(rate > 0.0 && rate <= 1.0)) invalid("sampling rate must be in (0, 1], got " + std::to_string(rate));
}

class FilterStage {
public:
    explicit FilterStage(FilterSpec spec) : spec_(spec) { spec_.validate(); }

    void push(std::span<const std::uint8_t> in, Bytes& out) {
        if (spec_.mode == FilterMode::None) {
            out.insert(out.end(), in.begin(), in.end());
            return;
        }
        const bool want_header = spec_.mode == FilterMode::HeaderOnly;
        std::size_t i = 0;
        while (i < in.size()) {
            const bool in_header = pos_ < spec_.header_len;
            const std::size_t boundary = in_header ? spec_.header_len : spec_.record_len;
            const std::size_t take = std::min(boundary - pos_, in.size() - i);
            if (in_header == want_header) out.insert(out.end(), in.begin() + i, in.begin() + i + take);
            i += take;
            pos_ += take;
            if (pos_ == spec_.record_len) pos_ = 0;
        }
    }

private:
    FilterSpec spec_;
    std::size_t pos_ = 0; // position within the current record
};

// Holds back at most one block: the kept prefix of a partial block depends on
// its final length.
class SampleStage {
public:
    explicit SampleStage(double rate) : rate_(rate) {
        check_rate(rate);
        block_.reserve(kSampleBlockSize);
    }

    void push(std::span<const std::uint8_t> in, Bytes& out) {
        if (rate_ == 1.0) {
            out.insert(out.end(), in.begin(), in.end());
            return;
        }
        std::size_t i = 0;
        while (i < in.size()) {
            const std::size_t take = std::min(kSampleBlockSize - block_.size(), in.size() - i);
            block_.insert(block_.end(), in.begin() + i, in.begin() + i + take);
            i += take;
            if (block_.size() == kSampleBlockSize) flush(out);
        }
    }

    void finish(Bytes& out) {
        if (!block_.empty()) flush(out);
    }

private:
    void flush(Bytes& out) {
        const std::size_t keep = sample_keep(rate_, block_.size());
        out.insert(out.end(), block_.begin(), block_.begin() + static_cast<std::ptrdiff_t>(keep));
        block_.clear();
    }

    double rate_;
    Bytes block_;
};

unsigned resolve_jobs(unsigned jobs) {
    if (jobs != 0) return jobs;
    return std::max(1u, std::thread::hardware_concurrency());
}

// Windows the effective stream, estimates batches of windows (in parallel when
// jobs > 1) and appends records in offset order.
class MapBuilder {
public:
    MapBuilder(const ProbeConfig& config, const DiscriminantModel* model, const ProbeOptions& options,
               std::string source_id)
        : registry_(options.registry ? *options.registry : EstimatorRegistry::builtin()),
          model_(model),
          jobs_(resolve_jobs(options.jobs)),
          filter_(config.filter),
          sampler_(config.sampling_rate),
          start_(Clock::now()) {
        config.validate(registry_);
        if (model_) {
            for (auto id : model_->schema().estimators)
                if (std::find(config.estimators.begin(), config.estimators.end(), id) == config.estimators.end())
                    throw Error(ErrorCode::ModelMismatch, "model needs estimator " + std::string(to_string(id)) +
                                                              ", which is not enabled");
        }
        map_.source_id = std::move(source_id);
        map_.config = config;
        batch_limit_ = jobs_ * 4;
    }

    void push(std::span<const std::uint8_t> raw) {
        map_.input_bytes += raw.size();
        filtered_.clear();
        filter_.push(raw, filtered_);
        sampled_.clear();
        sampler_.push(filtered_, sampled_);
        window(sampled_);
    }

    ComplexityMap finish() {
        sampled_.clear();
        sampler_.finish(sampled_);
        window(sampled_);
        if (!pending_.empty()) {
            batch_.push_back(std::move(pending_));
            pending_.clear();
        }
        run_batch();
        if (map_.records.empty()) throw Error(ErrorCode::EmptyInput, "no bytes left to analyze after filtering");

        if (model_ && map_.config.output_mode == OutputMode::SingleType) {
            const SemanticType t = classify_file(*model_, map_);
            map_.file_type = t;
            for (auto& r : map_.records) r.predicted_type = t;
        }
        map_.processing_us = std::chrono::duration<double, std::micro>(Clock::now() - start_).count();
        return std::move(map_);
    }

private:
    void window(std::span<const std::uint8_t> bytes) {
        const std::size_t w = map_.config.window_size;
        std::size_t i = 0;
        while (i < bytes.size()) {
            const std::size_t take = std::min(w - pending_.size(), bytes.size() - i);
            pending_.insert(pending_.end(), bytes.begin() + i, bytes.begin() + i + take);
            i += take;
            if (pending_.size() == w) {
                batch_.push_back(std::move(pending_));
                pending_ = Bytes();
                pending_.reserve(w);
                if (batch_.size() >= batch_limit_) run_batch();
            }
        }
    }

    MapRecord estimate_one(std::size_t index, std::size_t offset, const Bytes& payload) const {
        MapRecord r;
        r.window_index = index;
        r.offset = offset;
        r.length = payload.size();
        const ByteWindow win{offset, payload};
        r.estimates.reserve(map_.config.estimators.size());
        for (auto id : map_.config.estimators) r.estimates.push_back(run_estimator(id, win, registry_));
        if (model_ && map_.config.output_mode == OutputMode::PerWindowVector)
            r.predicted_type = classify(*model_, features_from_record(r));
        return r;
    }

    void run_batch() {
        if (batch_.empty()) return;
        const std::size_t n = batch_.size();
        const std::size_t base_index = map_.records.size();
        std::vector<std::size_t> offsets(n);
        for (std::size_t k = 0; k < n; ++k) {
            offsets[k] = next_offset_;
            next_offset_ += batch_[k].size();
        }
        std::vector<MapRecord> out(n);
        const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(jobs_, n));
        if (workers <= 1) {
            for (std::size_t k = 0; k < n; ++k) out[k] = estimate_one(base_index + k, offsets[k], batch_[k]);
        } else {
            std::atomic<std::size_t> next{0};
            std::exception_ptr failure;
            std::atomic<bool> failed{false};
            auto work = [&] {
                for (std::size_t k; (k = next.fetch_add(1)) < n;) {
                    if (failed.load()) return;
                    try {
                        out[k] = estimate_one(base_index + k, offsets[k], batch_[k]);
                    } catch (...) {
                        if (!failed.exchange(true)) failure = std::current_exception();
                    }
                }
            };
            std::vector<std::thread> pool;
            for (unsigned t = 1; t < workers; ++t) pool.emplace_back(work);
            work();
            for (auto& t : pool) t.join();
            if (failure) std::rethrow_exception(failure);
        }
        for (auto& r : out) {
            map_.analyzed_bytes += r.length;
            map_.records.push_back(std::move(r));
        }
        batch_.clear();
    }

    const EstimatorRegistry& registry_;
    const DiscriminantModel* model_;
    unsigned jobs_;
    std::size_t batch_limit_ = 4;
    FilterStage filter_;
    SampleStage sampler_;
    Clock::time_point start_;
    ComplexityMap map_;
    Bytes filtered_, sampled_, pending_;
    std::vector<Bytes> batch_;
    std::size_t next_offset_ = 0;
};

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string normalize_token(std::string_view s) {
    std::string out;
    for (char c : s) out.push_back(c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

} // namespace

void FilterSpec::validate() const {
    if (mode == FilterMode::None) return;
    if (record_len == 0) invalid("filter record length must be positive");
    if (header_len >= record_len)
        invalid("filter header length " + std::to_string(header_len) + " must be below record length " +
                std::to_string(record_len));
}

void ProbeConfig::validate(const EstimatorRegistry& registry) const {
    filter.validate();
    check_rate(sampling_rate);
    if (window_size < kMinWindowSize || window_size > kMaxWindowSize)
        invalid("window size must be in [" + std::to_string(kMinWindowSize) + ", " + std::to_string(kMaxWindowSize) +
                "], got " + std::to_string(window_size));
    if (estimators.empty()) invalid("at least one estimator must be enabled");
    std::set<EstimatorId> seen;
    for (auto id : estimators) {
        if (!seen.insert(id).second) invalid("estimator " + std::string(to_string(id)) + " listed twice");
        if (!registry.contains(id))
            throw Error(ErrorCode::UnknownEstimator,
                        "estimator " + std::string(to_string(id)) + " has no implementation; valid ids: " +
                            format_estimator_list(registry.ids()));
    }
}

std::string_view to_string(FilterMode mode) noexcept {
    switch (mode) {
    case FilterMode::None: return "none";
    case FilterMode::HeaderOnly: return "header_only";
    case FilterMode::PayloadOnly: return "payload_only";
    }
    return "?";
}

std::string_view to_string(OutputMode mode) noexcept {
    switch (mode) {
    case OutputMode::PerWindowVector: return "per_window_vector";
    case OutputMode::SingleType: return "single_type";
    }
    return "?";
}

FilterMode parse_filter_mode(std::string_view s) {
    const auto t = normalize_token(s);
    if (t == "none") return FilterMode::None;
    if (t == "header_only" || t == "header") return FilterMode::HeaderOnly;
    if (t == "payload_only" || t == "payload") return FilterMode::PayloadOnly;
    invalid("unknown filter mode '" + std::string(s) + "' (none, header_only, payload_only)");
}

OutputMode parse_output_mode(std::string_view s) {
    const auto t = normalize_token(s);
    if (t == "per_window_vector" || t == "per_window") return OutputMode::PerWindowVector;
    if (t == "single_type") return OutputMode::SingleType;
    invalid("unknown output mode '" + std::string(s) + "' (per_window_vector, single_type)");
}

nlohmann::json to_json(const ProbeConfig& c) {
    nlohmann::json est = nlohmann::json::array();
    for (auto id : c.estimators) est.push_back(std::string(to_string(id)));
    return {
        {"filter",
         {{"mode", std::string(to_string(c.filter.mode))},
          {"header_len", c.filter.header_len},
          {"record_len", c.filter.record_len}}},
        {"sampling_rate", c.sampling_rate},
        {"window_size", c.window_size},
        {"estimators", est},
        {"output_mode", std::string(to_string(c.output_mode))},
    };
}

ProbeConfig probe_config_from_json(const nlohmann::json& j) {
    ProbeConfig c;
    try {
        if (!j.is_object()) throw Error(ErrorCode::ParseError, "probe config must be a JSON object");
        if (j.contains("filter")) {
            const auto& f = j.at("filter");
            c.filter.mode = parse_filter_mode(f.value("mode", std::string("none")));
            c.filter.header_len = f.value("header_len", std::size_t{0});
            c.filter.record_len = f.value("record_len", std::size_t{0});
        }
        c.sampling_rate = j.value("sampling_rate", c.sampling_rate);
        c.window_size = j.value("window_size", c.window_size);
        if (j.contains("estimators")) {
            c.estimators.clear();
            for (const auto& e : j.at("estimators")) c.estimators.push_back(parse_estimator(e.get<std::string>()));
        }
        if (j.contains("output_mode")) c.output_mode = parse_output_mode(j.at("output_mode").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("malformed probe config: ") + e.what());
    }
    return c;
}

std::vector<ByteWindow> partition(std::span<const std::uint8_t> stream, std::size_t window_size) {
    if (window_size == 0) invalid("window size must be positive");
    std::vector<ByteWindow> out;
    out.reserve((stream.size() + window_size - 1) / window_size);
    for (std::size_t off = 0; off < stream.size(); off += window_size)
        out.push_back({off, stream.subspan(off, std::min(window_size, stream.size() - off))});
    return out;
}

Bytes apply_filter(std::span<const std::uint8_t> stream, const FilterSpec& filter) {
    FilterStage stage(filter);
    Bytes out;
    stage.push(stream, out);
    return out;
}

Bytes sample(std::span<const std::uint8_t> stream, double rate) {
    SampleStage stage(rate);
    Bytes out;
    stage.push(stream, out);
    stage.finish(out);
    return out;
}

ComplexityMap build_map(std::span<const std::uint8_t> stream, const ProbeConfig& config,
                        const DiscriminantModel* model, const ProbeOptions& options, std::string source_id) {
    MapBuilder builder(config, model, options, std::move(source_id));
    builder.push(stream);
    return builder.finish();
}

ComplexityMap run_probe(std::istream& in, std::ostream* passthrough, const ProbeConfig& config,
                        const DiscriminantModel* model, const ProbeOptions& options, std::string source_id) {
    MapBuilder builder(config, model, options, std::move(source_id));
    std::vector<char> buf(64 * 1024);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = static_cast<std::size_t>(in.gcount());
        if (got == 0) break;
        if (passthrough) {
            passthrough->write(buf.data(), static_cast<std::streamsize>(got));
            if (!*passthrough) throw Error(ErrorCode::IoError, "passthrough write failed");
        }
        builder.push({reinterpret_cast<const std::uint8_t*>(buf.data()), got});
    }
    if (in.bad()) throw Error(ErrorCode::IoError, "read error on input stream");
    if (passthrough) passthrough->flush();
    return builder.finish();
}

std::string map_to_csv(const ComplexityMap& map, const MapFormat& format) {
    const auto& ests = map.config.estimators;
    const bool typed = std::any_of(map.records.begin(), map.records.end(),
                                   [](const MapRecord& r) { return r.predicted_type.has_value(); });
    std::string out = "window_index,offset,length";
    for (auto id : ests) (out += ',') += to_string(id);
    if (format.include_timing)
        for (auto id : ests) (out += ',') += std::string(to_string(id)) + "_elapsed_us";
    if (typed) out += ",predicted_type";
    out += '\n';
    char buf[64];
    for (const auto& r : map.records) {
        out += std::to_string(r.window_index) + ',' + std::to_string(r.offset) + ',' + std::to_string(r.length);
        for (const auto& e : r.estimates) (out += ',') += fixed6(e.value);
        if (format.include_timing)
            for (const auto& e : r.estimates) {
                std::snprintf(buf, sizeof buf, ",%.3f", e.elapsed_us);
                out += buf;
            }
        if (typed) (out += ',') += r.predicted_type ? r.predicted_type->name() : std::string();
        out += '\n';
    }
    if (map.file_type) out += "# file_type," + map.file_type->name() + '\n';
    return out;
}

nlohmann::json map_to_json(const ComplexityMap& map, const MapFormat& format) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : map.records) {
        nlohmann::json est = nlohmann::json::object();
        for (const auto& e : r.estimates) {
            nlohmann::json v = {{"value", e.value}, {"raw_output_bits", e.raw_output_bits}, {"input_bits", e.input_bits}};
            if (format.include_timing) v["elapsed_us"] = e.elapsed_us;
            est[std::string(to_string(e.estimator))] = std::move(v);
        }
        nlohmann::json rec = {
            {"window_index", r.window_index}, {"offset", r.offset}, {"length", r.length}, {"estimates", est}};
        if (r.predicted_type) rec["predicted_type"] = r.predicted_type->name();
        records.push_back(std::move(rec));
    }
    nlohmann::json j = {
        {"source_id", map.source_id},
        {"config", to_json(map.config)},
        {"input_bytes", map.input_bytes},
        {"analyzed_bytes", map.analyzed_bytes},
        {"records", records},
    };
    if (map.file_type) j["file_type"] = map.file_type->name();
    if (format.include_timing) j["processing_us"] = map.processing_us;
    return j;
}

} // namespace kprobe
