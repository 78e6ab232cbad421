#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "driftvec/corpus.hpp"
#include "driftvec/types.hpp"

namespace driftvec {

struct SyntheticOptions {
    std::size_t vocab_size = 50;
    std::size_t steps = 10;
    std::size_t dimension = 4;
    /// Per-step standard deviation of the latent random walk, per coordinate.
    double drift_rate = 0.05;
    std::size_t docs_per_step = 200;
    std::size_t min_length = 8;
    std::size_t max_length = 16;
    /// Expected squared norm of a latent vector.
    double interaction_scale = 2.5;
    /// Zipf-like exponent of the base unigram distribution.
    double zipf_exponent = 0.3;
    /// Moves word 0 from word 1's neighborhood to word 2's over the time span.
    bool plant_swap = true;
    double start_year = 2000.0;
    std::uint64_t seed = 1;
};

struct SyntheticCorpus {
    std::vector<Document> documents;
    /// Latent vectors per step (steps x vocab_size x dimension), indexed by the
    /// generator's word index, i.e. the number in the word's name.
    std::vector<Matrix> truth;
    std::vector<std::string> words;
    /// Only meaningful when plant_swap is set.
    std::string planted_word;
    std::string neighbor_before;
    std::string neighbor_after;
    /// First step at which neighbor_after is the planted word's closest latent neighbor.
    std::size_t swap_step = 0;
};

/// Documents are first-order Markov chains whose transition weights are
/// base(j) * exp(w_i . w_j), so co-occurrence strength grows with the latent
/// inner product. Deterministic given the seed.
SyntheticCorpus generate_synthetic_corpus(const SyntheticOptions& options);

/// Name of generator word `index` ("w000", "w001", ...).
std::string synthetic_word(std::size_t index, std::size_t vocab_size);

}  // namespace driftvec
