#include "driftvec/format.hpp"

#include <charconv>
#include <cmath>
#include <istream>

#include "driftvec/types.hpp"

namespace driftvec {

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc()) throw Error("format_double: conversion failed");
    return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
    if (text == "inf") return HUGE_VAL;
    if (text == "-inf") return -HUGE_VAL;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ValidationError("not a number: '" + std::string(text) + "'");
    return value;
}

std::uint64_t parse_unsigned(std::string_view text) {
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ValidationError("not a non-negative integer: '" + std::string(text) + "'");
    return value;
}

TextReader::TextReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

std::string TextReader::word() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of input");
    return w;
}

void TextReader::expect(std::string_view keyword) {
    const std::string w = word();
    if (w != keyword) fail("expected '" + std::string(keyword) + "' but found '" + w + "'");
}

double TextReader::real() {
    const std::string w = word();
    try {
        return parse_double(w);
    } catch (const ValidationError&) {
        fail("expected a number but found '" + w + "'");
    }
}

std::uint64_t TextReader::count() {
    const std::string w = word();
    try {
        return parse_unsigned(w);
    } catch (const ValidationError&) {
        fail("expected a non-negative integer but found '" + w + "'");
    }
}

void TextReader::fail(const std::string& message) const {
    throw ValidationError(source_ + ": " + message);
}

}  // namespace driftvec
