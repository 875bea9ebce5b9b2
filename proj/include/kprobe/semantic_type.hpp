#pragma once

#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace kprobe {

/// A data category inferred from complexity features. Value type wrapping a
/// canonical name; builtin names are Audio, Doc, Exe, Pic, Txt and Vid.
class SemanticType {
public:
    SemanticType() = default;
    /// Throws Error(UnknownType) for empty names or names containing
    /// separators (comma, whitespace, quotes).
    explicit SemanticType(std::string name);

    const std::string& name() const noexcept { return name_; }
    bool empty() const noexcept { return name_.empty(); }

    friend bool operator==(const SemanticType&, const SemanticType&) = default;
    friend auto operator<=>(const SemanticType&, const SemanticType&) = default;

private:
    std::string name_;
};

namespace types {
inline const SemanticType Audio{"Audio"};
inline const SemanticType Doc{"Doc"};
inline const SemanticType Exe{"Exe"};
inline const SemanticType Pic{"Pic"};
inline const SemanticType Txt{"Txt"};
inline const SemanticType Vid{"Vid"};
} // namespace types

/// Known type names, matched case-insensitively. The default set holds the
/// six builtin types and the five synthetic corpus kinds.
class TypeRegistry {
public:
    static TypeRegistry with_defaults();

    /// Adds a user-defined type; re-adding an existing name is a no-op.
    void add(std::string_view name);
    bool contains(std::string_view name) const;
    /// Canonical spelling for `name`; throws Error(UnknownType) when absent.
    SemanticType parse(std::string_view name) const;
    const std::vector<SemanticType>& known() const noexcept { return known_; }

private:
    std::vector<SemanticType> known_;
};

} // namespace kprobe
