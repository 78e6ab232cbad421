#pragma once

#include <initializer_list>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace driftvec {

/// Quotes a field per RFC 4180 when it contains a comma, quote or line break.
std::string csv_escape(std::string_view field);

/// Minimal RFC 4180 writer: CRLF-free (LF) rows, header written on construction.
class CsvWriter {
public:
    CsvWriter(std::ostream& out, std::initializer_list<std::string_view> header);

    CsvWriter& field(std::string_view text);
    CsvWriter& field(double value);
    CsvWriter& field(long long value);
    CsvWriter& field(std::size_t value) { return field(static_cast<long long>(value)); }
    CsvWriter& field(int value) { return field(static_cast<long long>(value)); }
    void end_row();

private:
    std::ostream& out_;
    std::size_t columns_;
    std::size_t current_ = 0;
};

/// Splits one CSV line (no embedded newlines) honoring quotes.
std::vector<std::string> csv_split(std::string_view line);

}  // namespace driftvec
