#include "kprobe/semantic_type.hpp"

#include <algorithm>
#include <cctype>

#include "kprobe/error.hpp"

namespace kprobe {

namespace {

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
               return std::tolower(x) == std::tolower(y);
           });
}

} // namespace

SemanticType::SemanticType(std::string name) : name_(std::move(name)) {
    const bool bad = name_.empty() || std::any_of(name_.begin(), name_.end(), [](unsigned char c) {
                         return std::isspace(c) || c == ',' || c == '"' || c == '\'' || std::iscntrl(c);
                     });
    if (bad) throw Error(ErrorCode::UnknownType, "invalid semantic type name '" + name_ + "'");
}

TypeRegistry TypeRegistry::with_defaults() {
    TypeRegistry r;
    for (const auto* n : {"Audio", "Doc", "Exe", "Pic", "Txt", "Vid", "random_bytes", "repeated_pattern",
                          "markov_text", "pcm_sine_mix", "structured_binary"})
        r.add(n);
    return r;
}

void TypeRegistry::add(std::string_view name) {
    if (!contains(name)) known_.emplace_back(std::string(name));
}

bool TypeRegistry::contains(std::string_view name) const {
    return std::any_of(known_.begin(), known_.end(), [&](const SemanticType& t) { return iequals(t.name(), name); });
}

SemanticType TypeRegistry::parse(std::string_view name) const {
    for (const auto& t : known_)
        if (iequals(t.name(), name)) return t;
    throw Error(ErrorCode::UnknownType, "unknown semantic type '" + std::string(name) + "'");
}

} // namespace kprobe
