#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "driftvec/corpus.hpp"
#include "driftvec/types.hpp"

namespace driftvec {

/// Model and optimizer constants. Defaults reproduce the published settings
/// (vocabulary 10^4, minibatch 10^3, d = 100, window 4, eta = 1, gamma = 0.75,
/// D = 10^-3 per year, prior variance 1, Adam 0.9 / 0.99 / 0.999 / 10^-8).
struct Hyperparameters {
    double diffusion = 1e-3;        // D, per unit time
    double prior_variance = 1.0;    // sigma_0^2; +inf selects the Wiener prior
    double eta = 1.0;               // negative / positive ratio
    double gamma = 0.75;            // context exponent
    std::size_t window = 4;         // c_max
    std::size_t dimension = 100;    // d
    std::size_t vocab_size = 10000; // L
    std::size_t batch_size = 1000;  // L' (smoothing minibatch)

    // Filtering (also used by the static baselines).
    double filter_learning_rate = 1e-2;
    double filter_beta2 = 0.99;
    std::size_t filter_steps = 5000;

    // Smoothing: minibatch pretraining, then full batch.
    double smooth_pretrain_learning_rate = 1e-2;
    std::size_t smooth_pretrain_steps = 5000;
    double smooth_learning_rate = 1e-3;
    std::size_t smooth_steps = 1000;
    double smooth_beta2 = 0.999;

    double beta1 = 0.9;
    double adam_epsilon = 1e-8;

    /// Throws ValidationError naming the first offending field.
    void validate() const;
};

/// (name, value) pairs for every field, in declaration order, with values in
/// shortest round-trip form.
std::vector<std::pair<std::string, std::string>> hyperparameter_entries(const Hyperparameters& hyper);

/// Sets the named field from text. Returns false for an unknown name and
/// throws ValidationError for a malformed value.
bool assign_hyperparameter(Hyperparameters& hyper, std::string_view name, std::string_view value);

/// U_t and V_t: one row per word / context.
struct EmbeddingSnapshot {
    Matrix words;
    Matrix contexts;
};

using EmbeddingTrajectory = std::vector<EmbeddingSnapshot>;

/// Checks uniform shapes and finite entries.
void validate_trajectory(const EmbeddingTrajectory& trajectory);

/// Ornstein-Uhlenbeck kernel u_{t+1} | u_t ~ N(damping * u_t, variance).
struct TransitionParams {
    double damping = 1.0;
    double variance = 0.0;
};

double sigmoid(double x);
/// log(sigmoid(x)) without overflow or cancellation.
double log_sigmoid(double x);

TransitionParams transition_params(double step_variance, double prior_variance);

/// D * (later - earlier); throws unless later > earlier.
double step_variance(double diffusion, double earlier, double later);
std::vector<double> step_variances(const TimeGrid& grid, double diffusion);

/// Symmetric tridiagonal prior precision over one coordinate's trajectory.
struct PriorPrecision {
    std::vector<double> diagonal;     // T entries
    std::vector<double> offdiagonal;  // T-1 entries, (t, t+1)

    std::size_t size() const { return diagonal.size(); }
    /// out = Pi * in, Theta(T).
    void multiply(std::span<const double> in, std::span<double> out) const;
    /// in^T Pi in.
    double quadratic_form(std::span<const double> in) const;
    /// log det Pi via the tridiagonal Cholesky recursion; requires Pi > 0.
    double log_determinant() const;
};

PriorPrecision prior_precision(std::size_t steps, std::span<const double> step_variances,
                               double prior_variance);

/// Sum over pairs of n+ log s(u.v) + n- log s(-u.v) for one time step. The
/// negative part runs over all L^2 pairs using the rank-one n- structure.
double log_likelihood(const CountSlice& slice, const Matrix& words, const Matrix& contexts);

/// Log-likelihood and its gradient with respect to the listed rows.
struct LikelihoodGradient {
    double value = 0.0;
    Matrix words;     // one row per entry of the word list
    Matrix contexts;  // one row per entry of the context list
};

/// Full-vocabulary gradient: words.row(i) = sum_j [(n+ + n-) s(-u_i.v_j) - n-] v_j.
LikelihoodGradient likelihood_gradient(const CountSlice& slice, const Matrix& words,
                                       const Matrix& contexts);

/// Minibatch estimate restricted to words I and contexts J, multiplied by
/// `scale` (L / L' for an unbiased estimate).
LikelihoodGradient likelihood_gradient(const CountSlice& slice, const Matrix& words,
                                       const Matrix& contexts, std::span<const WordId> word_ids,
                                       std::span<const WordId> context_ids, double scale);

/// log p(n, U, V): the Gaussian prior with precision Pi on every coordinate's
/// trajectory (words and contexts) plus every step's log-likelihood.
double log_joint(const EmbeddingTrajectory& trajectory, const CountSeries& counts,
                 const Hyperparameters& hyper);

}  // namespace driftvec
