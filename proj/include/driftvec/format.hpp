#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

namespace driftvec {

/// Shortest text that parses back to exactly the same double.
std::string format_double(double value);

/// Strict parse of a whole string; throws ValidationError on trailing junk.
double parse_double(std::string_view text);
std::uint64_t parse_unsigned(std::string_view text);

/// Whitespace-token reader for the versioned text containers (counts and
/// checkpoints). Errors name the source.
class TextReader {
public:
    TextReader(std::istream& in, std::string source);

    std::string word();
    void expect(std::string_view keyword);
    double real();
    std::uint64_t count();
    [[noreturn]] void fail(const std::string& message) const;

private:
    std::istream& in_;
    std::string source_;
};

}  // namespace driftvec
