#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace llmdetect {

/// Three-valued authorship verdict. The enumerator value doubles as the
/// class index used by classifiers and confusion matrices.
enum class Label : std::uint8_t { Human = 0, Uncertain = 1, LLM = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<Label, kNumClasses> kAllLabels{Label::Human, Label::Uncertain,
                                                          Label::LLM};

constexpr std::size_t class_index(Label l) { return static_cast<std::size_t>(l); }
constexpr Label label_from_index(std::size_t i) { return static_cast<Label>(i); }

/// Numeric code on the 0 / 0.5 / 1 scale.
constexpr double numeric_code(Label l) {
    switch (l) {
    case Label::Human: return 0.0;
    case Label::Uncertain: return 0.5;
    case Label::LLM: return 1.0;
    }
    return 0.0;
}

/// Canonical text form: "0", "0.5" or "1".
std::string_view to_token(Label l);

/// Human-readable row name, e.g. "Human-authored (0)".
std::string_view display_name(Label l);

/// Parses "0", "0.5", "1" (also "0.0", ".5", "1.0", surrounding blanks
/// ignored). Returns nullopt for anything else.
std::optional<Label> parse_label(std::string_view token);

/// Label whose numeric code equals `code` exactly.
std::optional<Label> label_from_code(double code);

/// Agreement keeps the shared label; disagreement becomes Uncertain.
constexpr Label consensus_label(Label a, Label b) { return a == b ? a : Label::Uncertain; }

}  // namespace llmdetect
