#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace llmdetect::csv {

struct Record {
    std::vector<std::string> fields;
    std::size_t line = 0;  // physical line where the record starts
};

/// RFC 4180 reader: comma delimiter, double-quote escaping, quoted fields
/// may span lines. CRLF and LF are both accepted.
class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    /// Next record, or nullopt at end of input. Throws std::runtime_error on
    /// an unterminated quote.
    std::optional<Record> next();

    std::size_t line() const noexcept { return line_; }

private:
    std::istream& in_;
    std::size_t line_ = 1;
};

/// Quotes a field when it holds a comma, quote, CR or LF.
std::string escape(std::string_view field);

std::string join_row(const std::vector<std::string>& fields);

}  // namespace llmdetect::csv
