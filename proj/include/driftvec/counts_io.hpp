#pragma once

#include <iosfwd>
#include <string>

#include "driftvec/corpus.hpp"

namespace driftvec {

/// Text container for count statistics:
///
///   DRIFTVEC-COUNTS v1
///   vocabulary <L>
///   <word>                 (L lines, id order)
///   steps <T>
///   <t> <timestamp>        (T lines)
///   triplets <N>
///   <t> <i> <j> <weight>   (N lines, sorted by t, i, j)
///
/// Only positive counts are stored; P and P' are recomputed on load from the
/// supplied gamma and eta. Doubles use shortest round-trip formatting, so a
/// write/read cycle is lossless and rewriting gives identical bytes.
void write_counts(std::ostream& out, const CountSeries& series);
void write_counts_file(const std::string& path, const CountSeries& series);

CountSeries read_counts(std::istream& in, double gamma, double eta,
                        const std::string& source = "counts");
CountSeries read_counts_file(const std::string& path, double gamma, double eta);

}  // namespace driftvec
