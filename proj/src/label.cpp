#include "llmdetect/label.hpp"

#include <cctype>

namespace llmdetect {

std::string_view to_token(Label l) {
    switch (l) {
    case Label::Human: return "0";
    case Label::Uncertain: return "0.5";
    case Label::LLM: return "1";
    }
    return "0";
}

std::string_view display_name(Label l) {
    switch (l) {
    case Label::Human: return "Human-authored (0)";
    case Label::Uncertain: return "Uncertain (0.5)";
    case Label::LLM: return "LLM-generated (1)";
    }
    return "";
}

std::optional<Label> parse_label(std::string_view token) {
    while (!token.empty() && std::isspace(static_cast<unsigned char>(token.front())))
        token.remove_prefix(1);
    while (!token.empty() && std::isspace(static_cast<unsigned char>(token.back())))
        token.remove_suffix(1);
    if (token == "0" || token == "0.0" || token == "0.00") return Label::Human;
    if (token == "0.5" || token == ".5" || token == "0.50") return Label::Uncertain;
    if (token == "1" || token == "1.0" || token == "1.00") return Label::LLM;
    return std::nullopt;
}

std::optional<Label> label_from_code(double code) {
    if (code == 0.0) return Label::Human;
    if (code == 0.5) return Label::Uncertain;
    if (code == 1.0) return Label::LLM;
    return std::nullopt;
}

}  // namespace llmdetect
