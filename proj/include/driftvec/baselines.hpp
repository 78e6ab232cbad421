#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "driftvec/corpus.hpp"
#include "driftvec/model.hpp"
#include "driftvec/optim.hpp"
#include "driftvec/types.hpp"

namespace driftvec {

/// Point estimates for one time step of a static skip-gram model.
struct StaticFit {
    Matrix words;
    Matrix contexts;
    double log_likelihood = 0.0;  // skip-gram objective at the estimates
    double objective = 0.0;       // log_likelihood plus the Gaussian regularizer
    std::vector<double> objective_trace;  // one entry per iteration, before the update
};

struct StaticOptions {
    std::size_t steps = 5000;
    AdamConfig adam{1e-2, 0.9, 0.99, 1e-8};
    double prior_variance = 1.0;
};

StaticOptions static_options(const Hyperparameters& hyper);

/// log_likelihood - (|U|^2 + |V|^2) / (2 sigma_0^2).
double static_objective(const CountSlice& slice, const Matrix& words, const Matrix& contexts,
                        double prior_variance);

/// Full-batch Adam ascent on the regularized objective. Deterministic.
StaticFit train_static(const CountSlice& slice, Matrix words, Matrix contexts,
                       const StaticOptions& options);

/// N(0, scale^2) entries for word and context matrices, drawn from the named
/// stream (seed, "static/init", t).
EmbeddingSnapshot random_init(std::size_t vocab_size, std::size_t dimension, double scale,
                              std::uint64_t seed, std::size_t t);

/// Orthogonal R (d x d) minimizing |reference - current * R|_F with embeddings
/// stored as rows. From the SVD current^T reference = W S Z^T, R = W Z^T. When
/// the cross-covariance is rank deficient any SVD-derived R is returned.
Matrix procrustes_align(const Matrix& reference, const Matrix& current);

/// Per-step fits of a static baseline and the trajectory handed to analytics.
struct StaticTrajectory {
    std::vector<StaticFit> fits;       // as trained (unaligned for SGI)
    std::vector<Matrix> rotations;     // SGI: applied to fit t; identity otherwise
    EmbeddingTrajectory embeddings;    // fits after rotation
};

using StaticObserver = std::function<void(std::size_t t, const StaticFit&)>;

/// Independent fits from fresh random inits; step t is then rotated onto the
/// already aligned step t-1 (one rotation for words and contexts).
StaticTrajectory run_sgi(const CountSeries& counts, const StaticOptions& options,
                         std::size_t dimension, double init_scale, std::uint64_t seed,
                         const StaticObserver& observer = {});

/// Chronological fits, each started from the previous step's estimates; the
/// first step starts from the same random init as SGI.
StaticTrajectory run_sgp(const CountSeries& counts, const StaticOptions& options,
                         std::size_t dimension, double init_scale, std::uint64_t seed,
                         const StaticObserver& observer = {});

}  // namespace driftvec
