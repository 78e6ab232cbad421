#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "driftvec/corpus.hpp"
#include "driftvec/eval.hpp"
#include "driftvec/model.hpp"
#include "driftvec/synthetic.hpp"

namespace driftvec {

/// Everything a command needs. Serialized as flat `key = value` lines; the
/// model defaults are the Hyperparameters defaults.
struct RunConfig {
    Hyperparameters hyper;

    // Inputs and outputs.
    std::string corpus;       // preprocess input (timestamp<TAB>tokens per line)
    std::string data_dir;     // where train/evaluate/analyze read inputs; empty = out
    std::string out = ".";
    BinningRule binning = BinningRule::ByYear;
    double bin_width = 1.0;
    double heldout_fraction = 0.1;

    Method method = Method::Filter;
    std::string methods = "filter,smooth,sgi,sgp";  // evaluated by `evaluate`
    std::uint64_t seed = 1;

    // Training control.
    double init_jitter = 0.1;
    std::size_t early_stop_window = 200;
    double early_stop_tolerance = 1e-6;
    std::size_t checkpoint_every = 500;  // smoothing iterations between checkpoints
    std::size_t stop_after = 0;          // stop early (steps or iterations); 0 = run to the end
    bool resume = false;

    // Analysis.
    std::string words;        // comma-separated query words for neighbors
    std::string pairs;        // comma-separated a:b pairs for similarity series
    std::size_t top_k = 20;
    std::size_t neighbors_k = 10;
    std::size_t t0 = 0;
    std::size_t t1 = static_cast<std::size_t>(-1);  // -1 = last step
    std::size_t t_ref = 0;
    std::string deltas = "1,2,3,4,5";
    std::size_t bins = 20;

    // Synthetic corpus generator.
    std::size_t synth_vocab = 100;
    std::size_t synth_steps = 20;
    std::size_t synth_dimension = 10;
    std::size_t synth_docs = 200;
    double synth_drift = 0.05;
    std::size_t synth_min_length = 8;
    std::size_t synth_max_length = 16;
    double synth_start_year = 2000.0;
    bool synth_plant_swap = true;

    /// Checks ranges of every field (hyperparameters included).
    void validate() const;
    std::string input_dir() const { return data_dir.empty() ? out : data_dir; }
    SyntheticOptions synthetic_options() const;
};

/// Applies one `key = value` assignment. Throws ValidationError for an unknown
/// key or a malformed value.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

/// Reads assignments line by line; `#` starts a comment. Errors name the line.
void read_config(std::istream& in, RunConfig& config, const std::string& source);
void read_config_file(const std::string& path, RunConfig& config);

/// Every key in a fixed order, so re-reading the output reproduces the config.
void write_config(std::ostream& out, const RunConfig& config);

std::vector<std::string> split_list(std::string_view text, char separator = ',');

}  // namespace driftvec
