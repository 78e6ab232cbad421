#include "driftvec/csv.hpp"

#include <ostream>
#include <stdexcept>

#include "driftvec/format.hpp"
#include "driftvec/types.hpp"

namespace driftvec {

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

CsvWriter::CsvWriter(std::ostream& out, std::initializer_list<std::string_view> header)
    : out_(out), columns_(header.size()) {
    for (auto h : header) field(h);
    end_row();
}

CsvWriter& CsvWriter::field(std::string_view text) {
    if (current_ == columns_) throw Error("CsvWriter: too many fields in row");
    if (current_ > 0) out_ << ',';
    out_ << csv_escape(text);
    ++current_;
    return *this;
}

CsvWriter& CsvWriter::field(double value) { return field(format_double(value)); }

CsvWriter& CsvWriter::field(long long value) { return field(std::to_string(value)); }

void CsvWriter::end_row() {
    if (current_ != columns_) throw Error("CsvWriter: row has the wrong number of fields");
    out_ << '\n';
    current_ = 0;
}

std::vector<std::string> csv_split(std::string_view line) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    fields.back() += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else {
            fields.back() += c;
        }
    }
    return fields;
}

}  // namespace driftvec
