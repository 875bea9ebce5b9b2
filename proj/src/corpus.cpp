#include "kprobe/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include <json.hpp>

#include "kprobe/error.hpp"
#include "kprobe/random.hpp"

namespace kprobe {

namespace fs = std::filesystem;

namespace {

// Public-domain source text for the order-2 character model (opening of the
// 1776 Declaration of Independence).
constexpr std::string_view kMarkovSource =
    "When in the Course of human events, it becomes necessary for one people to dissolve the political bands "
    "which have connected them with another, and to assume among the powers of the earth, the separate and equal "
    "station to which the Laws of Nature and of Nature's God entitle them, a decent respect to the opinions of "
    "mankind requires that they should declare the causes which impel them to the separation. We hold these "
    "truths to be self-evident, that all men are created equal, that they are endowed by their Creator with "
    "certain unalienable Rights, that among these are Life, Liberty and the pursuit of Happiness. That to secure "
    "these rights, Governments are instituted among Men, deriving their just powers from the consent of the "
    "governed, That whenever any Form of Government becomes destructive of these ends, it is the Right of the "
    "People to alter or to abolish it, and to institute new Government, laying its foundation on such principles "
    "and organizing its powers in such form, as to them shall seem most likely to effect their Safety and "
    "Happiness. Prudence, indeed, will dictate that Governments long established should not be changed for light "
    "and transient causes; and accordingly all experience hath shewn, that mankind are more disposed to suffer, "
    "while evils are sufferable, than to right themselves by abolishing the forms to which they are accustomed. "
    "But when a long train of abuses and usurpations, pursuing invariably the same Object evinces a design to "
    "reduce them under absolute Despotism, it is their right, it is their duty, to throw off such Government, and "
    "to provide new Guards for their future security. Such has been the patient sufferance of these Colonies; and "
    "such is now the necessity which constrains them to alter their former Systems of Government. The history of "
    "the present King of Great Britain is a history of repeated injuries and usurpations, all having in direct "
    "object the establishment of an absolute Tyranny over these States. To prove this, let Facts be submitted to "
    "a candid world. ";

Bytes random_bytes(std::size_t n, Xoshiro256& rng) {
    Bytes out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng() >> 56);
    return out;
}

Bytes repeated_pattern(std::size_t n, Xoshiro256& rng) {
    const Bytes motif = random_bytes(2 + rng.below(15), rng);
    Bytes out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = motif[i % motif.size()];
    return out;
}

// The source is read cyclically, so every context has at least one successor.
Bytes markov_text(std::size_t n, Xoshiro256& rng) {
    const std::string_view src = kMarkovSource;
    const std::size_t m = src.size();
    std::map<std::uint16_t, std::string> next;
    auto key = [](char a, char b) {
        return static_cast<std::uint16_t>((static_cast<unsigned char>(a) << 8) | static_cast<unsigned char>(b));
    };
    for (std::size_t i = 0; i < m; ++i) next[key(src[i], src[(i + 1) % m])].push_back(src[(i + 2) % m]);

    Bytes out;
    out.reserve(n);
    const std::size_t start = rng.below(m);
    char a = src[start], b = src[(start + 1) % m];
    out.push_back(static_cast<std::uint8_t>(a));
    if (n > 1) out.push_back(static_cast<std::uint8_t>(b));
    while (out.size() < n) {
        const std::string& choices = next.at(key(a, b));
        const char c = choices[rng.below(choices.size())];
        out.push_back(static_cast<std::uint8_t>(c));
        a = b;
        b = c;
    }
    out.resize(n);
    return out;
}

Bytes pcm_sine_mix(std::size_t n, Xoshiro256& rng) {
    double freq[3], amp[3], phase[3], total = 0;
    for (int k = 0; k < 3; ++k) {
        freq[k] = 0.002 + 0.198 * rng.uniform(); // cycles per sample
        amp[k] = 0.2 + 0.8 * rng.uniform();
        phase[k] = 2 * std::numbers::pi * rng.uniform();
        total += amp[k];
    }
    Bytes out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double x = 0;
        for (int k = 0; k < 3; ++k) x += amp[k] * std::sin(2 * std::numbers::pi * freq[k] * static_cast<double>(i) + phase[k]);
        out[i] = static_cast<std::uint8_t>(std::lround(127.5 + 127.0 * x / total));
    }
    return out;
}

Bytes structured_binary(std::size_t n, Xoshiro256& rng) {
    Bytes out;
    out.reserve(n);
    bool zeros = true;
    while (out.size() < n) {
        const std::size_t len = 16 + rng.below(497);
        if (zeros)
            out.insert(out.end(), len, 0);
        else
            for (std::size_t i = 0; i < len; ++i) out.push_back(static_cast<std::uint8_t>(rng() >> 56));
        zeros = !zeros;
    }
    out.resize(n);
    return out;
}

[[noreturn]] void bad_spec(const std::string& msg) { throw Error(ErrorCode::InvalidSpec, msg); }

template <class T>
T parse_number(std::string_view s, const char* what) {
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) bad_spec(std::string("bad ") + what + " '" + std::string(s) + "'");
    return v;
}

fs::path resolve(const Manifest& m, const std::string& source) {
    const fs::path p(source);
    return p.is_absolute() || m.base_dir.empty() ? p : m.base_dir / p;
}

} // namespace

std::string_view to_string(SyntheticKind kind) noexcept {
    switch (kind) {
    case SyntheticKind::RandomBytes: return "random_bytes";
    case SyntheticKind::RepeatedPattern: return "repeated_pattern";
    case SyntheticKind::MarkovText: return "markov_text";
    case SyntheticKind::PcmSineMix: return "pcm_sine_mix";
    case SyntheticKind::StructuredBinary: return "structured_binary";
    }
    return "?";
}

SyntheticKind parse_synthetic_kind(std::string_view s) {
    for (auto k : kAllSyntheticKinds)
        if (to_string(k) == s) return k;
    bad_spec("unknown synthetic kind '" + std::string(s) +
             "' (random_bytes, repeated_pattern, markov_text, pcm_sine_mix, structured_binary)");
}

std::string SyntheticSpec::id() const {
    return "synth:" + std::string(to_string(kind)) + ':' + std::to_string(length) + ':' + std::to_string(seed);
}

bool SyntheticSpec::is_id(std::string_view s) noexcept { return s.substr(0, 6) == "synth:"; }

SyntheticSpec SyntheticSpec::parse_id(std::string_view s) {
    if (!is_id(s)) bad_spec("not a synthetic id: '" + std::string(s) + "'");
    std::vector<std::string_view> parts;
    std::size_t pos = 6;
    while (true) {
        const auto colon = s.find(':', pos);
        parts.push_back(s.substr(pos, colon == std::string_view::npos ? std::string_view::npos : colon - pos));
        if (colon == std::string_view::npos) break;
        pos = colon + 1;
    }
    if (parts.size() != 3) bad_spec("synthetic id must be synth:<kind>:<length>:<seed>, got '" + std::string(s) + "'");
    return {parse_synthetic_kind(parts[0]), parse_number<std::size_t>(parts[1], "length"),
            parse_number<std::uint64_t>(parts[2], "seed")};
}

Bytes generate_synthetic(const SyntheticSpec& spec) {
    if (spec.length == 0) bad_spec("synthetic length must be positive");
    Xoshiro256 rng(spec.seed);
    switch (spec.kind) {
    case SyntheticKind::RandomBytes: return random_bytes(spec.length, rng);
    case SyntheticKind::RepeatedPattern: return repeated_pattern(spec.length, rng);
    case SyntheticKind::MarkovText: return markov_text(spec.length, rng);
    case SyntheticKind::PcmSineMix: return pcm_sine_mix(spec.length, rng);
    case SyntheticKind::StructuredBinary: return structured_binary(spec.length, rng);
    }
    bad_spec("unknown synthetic kind");
}

std::string_view to_string(SplitTag tag) noexcept {
    switch (tag) {
    case SplitTag::Unassigned: return "unassigned";
    case SplitTag::Train: return "train";
    case SplitTag::Test: return "test";
    }
    return "?";
}

Bytes read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::IoError, "read error on " + path.string());
    return out;
}

Manifest scan_corpus(const fs::path& root, std::vector<std::string>* warnings, const TypeRegistry& registry) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw Error(ErrorCode::IoError, "corpus root " + root.string() + " is not a directory");
    auto warn = [&](std::string msg) {
        if (warnings) warnings->push_back(std::move(msg));
    };

    std::vector<fs::path> dirs;
    for (const auto& d : fs::directory_iterator(root))
        if (d.is_directory()) dirs.push_back(d.path());
    std::sort(dirs.begin(), dirs.end());

    Manifest m;
    m.base_dir = root;
    for (const auto& dir : dirs) {
        const SemanticType label = registry.parse(dir.filename().string());
        std::vector<fs::path> files;
        for (const auto& f : fs::directory_iterator(dir))
            if (f.is_regular_file()) files.push_back(f.path());
        std::sort(files.begin(), files.end());
        std::size_t count = 0;
        for (const auto& f : files) {
            const auto size = fs::file_size(f, ec);
            std::ifstream probe(f, std::ios::binary);
            if (ec || !probe) {
                warn("skipping unreadable file " + f.string());
                continue;
            }
            if (size == 0) {
                warn("skipping empty file " + f.string());
                continue;
            }
            m.entries.push_back({fs::relative(f, root).generic_string(), label, SplitTag::Unassigned,
                                 static_cast<std::size_t>(size)});
            ++count;
        }
        if (count < kMinSamplesPerType)
            warn("type " + label.name() + " has " + std::to_string(count) + " samples; at least " +
                 std::to_string(kMinSamplesPerType) + " per type are recommended");
    }
    return m;
}

std::pair<Manifest, Manifest> split(const Manifest& manifest, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw Error(ErrorCode::InvalidConfig, "test fraction must be in (0, 1)");
    std::map<SemanticType, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) by_label[manifest.entries[i].label].push_back(i);

    Manifest train{{}, seed, manifest.base_dir}, test{{}, seed, manifest.base_dir};
    Xoshiro256 rng(seed);
    for (auto& [label, idx] : by_label) {
        const std::size_t n = idx.size();
        if (n < 2)
            throw Error(ErrorCode::InsufficientSamples, "type " + label.name() + " has a single sample; cannot split");
        for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
        const auto want = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
        const std::size_t n_test = std::clamp<std::size_t>(want, 1, n - 1);
        std::vector<std::size_t> test_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
        std::vector<std::size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
        std::sort(test_idx.begin(), test_idx.end());
        std::sort(train_idx.begin(), train_idx.end());
        for (auto i : train_idx) {
            train.entries.push_back(manifest.entries[i]);
            train.entries.back().split = SplitTag::Train;
        }
        for (auto i : test_idx) {
            test.entries.push_back(manifest.entries[i]);
            test.entries.back().split = SplitTag::Test;
        }
    }
    return {std::move(train), std::move(test)};
}

Manifest synthetic_corpus(std::size_t per_kind, std::size_t length, std::uint64_t seed,
                          std::span<const SyntheticKind> kinds) {
    Manifest m;
    m.seed = seed;
    for (std::size_t k = 0; k < kinds.size(); ++k)
        for (std::size_t i = 0; i < per_kind; ++i) {
            const SyntheticSpec spec{kinds[k], length, seed * 1000003u + k * 1009u + i};
            m.entries.push_back({spec.id(), SemanticType(std::string(to_string(kinds[k]))), SplitTag::Unassigned, length});
        }
    return m;
}

Bytes load_entry(const Manifest& manifest, const ManifestEntry& entry) {
    if (SyntheticSpec::is_id(entry.source)) return generate_synthetic(SyntheticSpec::parse_id(entry.source));
    return read_file(resolve(manifest, entry.source));
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write manifest " + path.string());
    const fs::path dir = fs::absolute(path).parent_path();
    out << nlohmann::json{{"manifest_version", kManifestVersion}, {"seed", manifest.seed}}.dump() << '\n';
    for (const auto& e : manifest.entries) {
        std::string source = e.source;
        if (!SyntheticSpec::is_id(source))
            source = fs::absolute(resolve(manifest, source)).lexically_normal().lexically_relative(dir).generic_string();
        out << nlohmann::json{{"source", source},
                              {"label", e.label.name()},
                              {"split", std::string(to_string(e.split))},
                              {"length", e.length}}
                   .dump()
            << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Manifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open manifest " + path.string());
    Manifest m;
    m.base_dir = fs::absolute(path).parent_path();
    std::string line;
    std::size_t line_no = 0;
    try {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const auto j = nlohmann::json::parse(line);
            if (j.contains("manifest_version")) {
                if (j.at("manifest_version").get<int>() != kManifestVersion)
                    throw Error(ErrorCode::ParseError, "unsupported manifest version");
                m.seed = j.value("seed", std::uint64_t{0});
                continue;
            }
            ManifestEntry e;
            e.source = j.at("source").get<std::string>();
            e.label = SemanticType(j.at("label").get<std::string>());
            const auto tag = j.value("split", std::string("unassigned"));
            e.split = tag == "train" ? SplitTag::Train : tag == "test" ? SplitTag::Test : SplitTag::Unassigned;
            e.length = j.at("length").get<std::size_t>();
            if (e.length == 0) throw Error(ErrorCode::ParseError, "entry length must be positive");
            m.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError,
                    "manifest " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    return m;
}

SpliceResult splice(std::span<const std::uint8_t> container, std::span<const std::uint8_t> payload,
                    std::size_t offset) {
    if (offset > container.size() || payload.size() > container.size() - offset)
        throw Error(ErrorCode::InvalidSpan, "payload of " + std::to_string(payload.size()) + " bytes at offset " +
                                                std::to_string(offset) + " overruns a " +
                                                std::to_string(container.size()) + "-byte container");
    SpliceResult r{Bytes(container.begin(), container.end()), offset, offset + payload.size()};
    std::copy(payload.begin(), payload.end(), r.data.begin() + static_cast<std::ptrdiff_t>(offset));
    return r;
}

} // namespace kprobe
