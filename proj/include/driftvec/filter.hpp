#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "driftvec/corpus.hpp"
#include "driftvec/model.hpp"
#include "driftvec/optim.hpp"
#include "driftvec/random.hpp"
#include "driftvec/types.hpp"

namespace driftvec {

/// Independent Gaussians with diagonal covariance, one row per word.
struct GaussianFactors {
    Matrix mean;
    Matrix variance;
};

/// q(U_t, V_t) of the filter, fully factorized.
struct FilterPosterior {
    GaussianFactors words;
    GaussianFactors contexts;
};

/// Approximate prior p(U_t, V_t | n_{1:t-1}) obtained by pushing the previous
/// posterior through the transition.
struct PropagatedPrior {
    GaussianFactors words;
    GaussianFactors contexts;
};

/// Prior of the first step: zero mean, variance sigma_0^2.
PropagatedPrior initial_prior(std::size_t vocab_size, std::size_t dimension, double prior_variance);

/// Sigma~ = [(Sigma + s^2)^-1 + sigma_0^-2]^-1, mu~ = Sigma~ (Sigma + s^2)^-1 mu, entrywise.
GaussianFactors propagate_prior(const GaussianFactors& previous, double step_variance,
                                double prior_variance);
PropagatedPrior propagate_prior(const FilterPosterior& previous, double step_variance,
                                double prior_variance);

/// Variational parameters being optimized at one step. Variances are carried
/// as log-variances so unconstrained Adam steps keep them positive.
struct FilterVariational {
    Matrix word_mean;
    Matrix word_log_variance;
    Matrix context_mean;
    Matrix context_log_variance;

    FilterPosterior posterior() const;
    static FilterVariational from(const PropagatedPrior& prior);
};

/// Standard-normal draws for one reparameterized sample of U_t and V_t.
struct FilterNoise {
    Matrix words;
    Matrix contexts;
};

FilterNoise draw_filter_noise(std::size_t vocab_size, std::size_t dimension, Rng& rng);

/// Monte-Carlo ELBO of one step and its reparameterization gradient. The
/// entropy and expected log-prior enter in closed form; the likelihood through
/// the samples mu + sqrt(Sigma) * eps. With the same noise the gradient is the
/// exact derivative of `value`.
struct FilterElbo {
    double value = 0.0;
    FilterVariational gradient;
};

FilterElbo estimate_elbo_gradient(const FilterVariational& q, const PropagatedPrior& prior,
                                  const CountSlice& slice, std::span<const FilterNoise> noise);
FilterElbo estimate_elbo_gradient(const FilterVariational& q, const PropagatedPrior& prior,
                                  const CountSlice& slice, std::size_t samples, Rng& rng);

struct FilterOptions {
    std::size_t steps = 5000;
    AdamConfig adam{1e-2, 0.9, 0.99, 1e-8};
    std::size_t samples = 1;
    /// Std of the random initial means at the first step; 0 starts at exactly 0.
    double init_jitter = 0.1;
    /// Stop when the mean ELBO of a window fails to beat the previous window by
    /// tolerance * |previous|. A window of 0 disables early stopping.
    std::size_t early_stop_window = 200;
    double early_stop_tolerance = 1e-6;
};

FilterOptions filter_options(const Hyperparameters& hyper);

struct FilterStepStats {
    std::size_t iterations = 0;
    double final_elbo = 0.0;  // mean of the last window
    std::vector<double> elbo_trace;  // one entry per iteration
};

/// Maximizes the step's ELBO with Adam starting from `start`. Only slice t is
/// visible here, so the filter cannot look ahead.
FilterPosterior filter_step(const PropagatedPrior& prior, const FilterVariational& start,
                            const CountSlice& slice, const FilterOptions& options,
                            std::uint64_t seed, FilterStepStats* stats = nullptr);

struct FilterResult {
    std::vector<FilterPosterior> posteriors;
    EmbeddingTrajectory means;
};

/// Called after each completed step (for checkpoints and logs).
using FilterObserver = std::function<void(std::size_t t, const FilterPosterior&,
                                          const FilterStepStats&)>;

/// Runs the filter over all steps, continuing after `completed` (a resumed
/// prefix). Per-step randomness derives from (seed, t), so a resumed run is
/// bit-identical to an uninterrupted one.
FilterResult run_filter(const CountSeries& counts, const Hyperparameters& hyper,
                        const FilterOptions& options, std::uint64_t seed,
                        std::vector<FilterPosterior> completed = {},
                        const FilterObserver& observer = {});

}  // namespace driftvec
