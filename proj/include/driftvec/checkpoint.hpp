#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "driftvec/baselines.hpp"
#include "driftvec/corpus.hpp"
#include "driftvec/eval.hpp"
#include "driftvec/filter.hpp"
#include "driftvec/model.hpp"
#include "driftvec/smooth.hpp"

namespace driftvec {

// Versioned text checkpoints. Every number is written in shortest round-trip
// form, so loading restores bit-identical state and rewriting gives identical
// bytes. Each file records the vocabulary, time grid, hyperparameters and seed
// it was produced with.

struct CheckpointHeader {
    Vocabulary vocabulary;
    TimeGrid grid;
    Hyperparameters hyper;
    std::uint64_t seed = 0;
};

/// Filter posteriors of the completed prefix of steps (resumable).
struct FilterCheckpoint {
    CheckpointHeader header;
    std::vector<FilterPosterior> posteriors;
};

/// Smoother state: means, Cholesky factors, natural coefficients and Adam
/// moments (resumable).
struct SmoothCheckpoint {
    CheckpointHeader header;
    SmoothState state;
};

/// Per-step static fits (SGI or SGP) after alignment.
struct StaticCheckpoint {
    CheckpointHeader header;
    Method method = Method::Sgi;
    std::vector<Matrix> rotations;
    std::vector<double> objectives;
    EmbeddingTrajectory embeddings;
};

void write_checkpoint(std::ostream& out, const FilterCheckpoint& c);
void write_checkpoint(std::ostream& out, const SmoothCheckpoint& c);
void write_checkpoint(std::ostream& out, const StaticCheckpoint& c);

FilterCheckpoint read_filter_checkpoint(std::istream& in, const std::string& source);
SmoothCheckpoint read_smooth_checkpoint(std::istream& in, const std::string& source);
StaticCheckpoint read_static_checkpoint(std::istream& in, const std::string& source);

/// Writes to `path` through a temporary file and rename, so readers never see
/// a partial checkpoint.
template <typename Checkpoint>
void save_checkpoint(const std::string& path, const Checkpoint& c);

/// Mean/mode trajectory stored in any checkpoint kind.
struct LoadedTrajectory {
    CheckpointHeader header;
    Method method = Method::Filter;
    EmbeddingTrajectory embeddings;
};

LoadedTrajectory load_trajectory(const std::string& path);

}  // namespace driftvec
