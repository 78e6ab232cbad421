#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "driftvec/config.hpp"
#include "driftvec/corpus.hpp"

namespace driftvec {

// Subcommands of the `driftvec` tool. Each validates its config, takes the
// output directory's lock, writes the resolved config next to its outputs and
// reports progress on `log`.

/// Writes corpus.tsv and synth_info.txt (planted word and neighbors).
void cmd_synth(const RunConfig& config, std::ostream& log);
/// Writes counts.txt (training documents) and heldout.txt.
void cmd_preprocess(const RunConfig& config, std::ostream& log);
/// Writes <method>.ckpt and <method>_log.csv.
void cmd_train(const RunConfig& config, std::ostream& log);
/// Writes predictive.csv for every method listed in config.methods.
void cmd_evaluate(const RunConfig& config, std::ostream& log);
/// Writes topchanges.csv, histogram.csv, similarity.csv and neighbors.csv.
void cmd_analyze(const RunConfig& config, std::ostream& log);

/// Parses arguments and dispatches. Returns 0 on success, 2 on invalid input
/// or configuration, 1 on any other failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

std::size_t edit_distance(std::string_view a, std::string_view b);
/// Up to k vocabulary words closest to `word` by edit distance, ties by id.
std::vector<std::string> nearest_spellings(const Vocabulary& vocabulary, std::string_view word,
                                           std::size_t k);

}  // namespace driftvec
