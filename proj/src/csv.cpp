#include "llmdetect/csv.hpp"

#include <stdexcept>

namespace llmdetect::csv {

std::optional<Record> Reader::next() {
    int c = in_.get();
    if (c == std::char_traits<char>::eof()) return std::nullopt;

    Record rec;
    rec.line = line_;
    std::string field;
    bool quoted = false;
    bool field_was_quoted = false;

    for (;; c = in_.get()) {
        if (c == std::char_traits<char>::eof()) {
            if (quoted)
                throw std::runtime_error("unterminated quoted field starting on line " +
                                         std::to_string(rec.line));
            rec.fields.push_back(std::move(field));
            return rec;
        }
        const char ch = static_cast<char>(c);
        if (quoted) {
            if (ch == '"') {
                if (in_.peek() == '"') {
                    in_.get();
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                if (ch == '\n') ++line_;
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
        case '"':
            if (field.empty() && !field_was_quoted) {
                quoted = true;
                field_was_quoted = true;
            } else {
                field.push_back(ch);
            }
            break;
        case ',':
            rec.fields.push_back(std::move(field));
            field.clear();
            field_was_quoted = false;
            break;
        case '\r':
            if (in_.peek() == '\n') break;
            [[fallthrough]];
        case '\n':
            ++line_;
            rec.fields.push_back(std::move(field));
            return rec;
        default:
            field.push_back(ch);
        }
    }
}

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

std::string join_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += escape(fields[i]);
    }
    return out;
}

}  // namespace llmdetect::csv
