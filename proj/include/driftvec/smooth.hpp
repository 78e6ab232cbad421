#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "driftvec/corpus.hpp"
#include "driftvec/model.hpp"
#include "driftvec/optim.hpp"
#include "driftvec/types.hpp"

namespace driftvec {

// Each (word, dimension) pair owns one factor: a Gaussian over its trajectory
// u_{1:T} with mean mu and precision B^T B, where B is upper bidiagonal with
// diagonal nu > 0 and superdiagonal omega. All routines below act on a single
// factor and run in Theta(T).

/// Solves B x = rhs by back substitution.
void solve_upper(std::span<const double> diag, std::span<const double> upper,
                 std::span<const double> rhs, std::span<double> out);
/// Solves B^T y = rhs by forward substitution.
void solve_upper_transposed(std::span<const double> diag, std::span<const double> upper,
                            std::span<const double> rhs, std::span<double> out);

/// x = B^-1 eps and u = mu + x. Throws ValidationError if some nu <= 0.
void sample_trajectory(std::span<const double> mean, std::span<const double> diag,
                       std::span<const double> upper, std::span<const double> noise,
                       std::span<double> sample, std::span<double> displacement);

/// -sum log nu, the entropy of the factor up to a constant.
double entropy_term(std::span<const double> diag);

/// Gamma - Pi u.
void grad_mu(std::span<const double> pull, const PriorPrecision& prior,
             std::span<const double> sample, std::span<double> out);

/// Gradients with respect to nu and omega for one sample, given
/// r = Gamma - Pi u (the output of grad_mu) and x from the same noise.
/// `scratch` must hold T entries and receives y = B^-T r.
void grad_nu_omega(std::span<const double> residual, std::span<const double> displacement,
                   std::span<const double> diag, std::span<const double> upper,
                   std::span<double> scratch, std::span<double> grad_diag,
                   std::span<double> grad_upper);

/// Upper-bidiagonal C with Pi = C^T C. Means are parameterized as mu = C^-1 rho,
/// so a single coefficient controls the time-averaged embedding.
class NaturalBasis {
public:
    explicit NaturalBasis(const PriorPrecision& prior);

    std::size_t size() const { return diag_.size(); }
    const std::vector<double>& diagonal() const { return diag_; }
    const std::vector<double>& upper() const { return upper_; }

    /// rho = C mu.
    void to_natural(std::span<const double> mean, std::span<double> coefficients) const;
    /// mu = C^-1 rho.
    void from_natural(std::span<const double> coefficients, std::span<double> mean) const;
    /// dL/drho = C^-T dL/dmu.
    void gradient_to_natural(std::span<const double> grad_mean, std::span<double> out) const;

private:
    std::vector<double> diag_;
    std::vector<double> upper_;
};

/// Variational parameters of all factors of one embedding matrix. Entry
/// (i, k, t) of `mean` and `diag` lives at (i * dimension + k) * steps + t and
/// entry (i, k, t) of `upper` at (i * dimension + k) * (steps - 1) + t, so each
/// word's parameters are one contiguous block.
struct SmoothFactorParams {
    std::size_t vocab_size = 0;
    std::size_t dimension = 0;
    std::size_t steps = 0;
    std::vector<double> mean;
    std::vector<double> diag;
    std::vector<double> upper;

    static SmoothFactorParams zeros(std::size_t vocab_size, std::size_t dimension,
                                    std::size_t steps);
    std::size_t factor_count() const { return vocab_size * dimension; }
    std::size_t word_width() const { return dimension * steps; }
    std::size_t word_upper_width() const { return dimension * (steps - 1); }
    std::span<double> mean_of(std::size_t factor);
    std::span<const double> mean_of(std::size_t factor) const;
    std::span<double> diag_of(std::size_t factor);
    std::span<const double> diag_of(std::size_t factor) const;
    std::span<double> upper_of(std::size_t factor);
    std::span<const double> upper_of(std::size_t factor) const;

    /// Mean embedding matrix at step t (vocab_size x dimension).
    Matrix mean_at(std::size_t t) const;
    /// Marginal variance of factor (i, k) at every step, from the diagonal of
    /// (B^T B)^-1 via a Theta(T) recursion.
    std::vector<double> marginal_variances(std::size_t factor) const;
};

/// q initialized at the prior: mu = 0 and B = C so that B^T B = Pi.
SmoothFactorParams prior_factors(std::size_t vocab_size, std::size_t dimension,
                                 const NaturalBasis& basis);

/// Log-likelihood seen by the smoother. The skip-gram model is the production
/// implementation; tests inject closed-form likelihoods.
class SmoothingLikelihood {
public:
    virtual ~SmoothingLikelihood() = default;
    virtual std::size_t steps() const = 0;
    virtual std::size_t vocab_size() const = 0;
    /// Value and gradient of step t's log-likelihood with respect to the listed
    /// word and context rows, multiplied by `scale`.
    virtual LikelihoodGradient evaluate(std::size_t t, const Matrix& words,
                                        const Matrix& contexts,
                                        std::span<const WordId> word_ids,
                                        std::span<const WordId> context_ids,
                                        double scale) const = 0;
};

class SkipGramLikelihood final : public SmoothingLikelihood {
public:
    explicit SkipGramLikelihood(const CountSeries& counts) : counts_(counts) {}
    std::size_t steps() const override { return counts_.steps(); }
    std::size_t vocab_size() const override { return counts_.vocabulary.size(); }
    LikelihoodGradient evaluate(std::size_t t, const Matrix& words, const Matrix& contexts,
                                std::span<const WordId> word_ids,
                                std::span<const WordId> context_ids,
                                double scale) const override;

private:
    const CountSeries& counts_;
};

/// Standard-normal noise with the layout of SmoothFactorParams::mean.
struct SmoothNoise {
    std::vector<double> words;
    std::vector<double> contexts;
};

/// One-sample ELBO estimate and its gradient. Gradient arrays reuse the
/// parameter layout: mean holds dL/dmu, diag dL/dnu, upper dL/domega. Rows
/// outside the id lists are zero.
struct SmoothGradient {
    double value = 0.0;
    SmoothFactorParams words;
    SmoothFactorParams contexts;
};

/// Reports how many per-factor trajectory buffers the gradient path allocated
/// and the longest one, so tests can check that memory stays O(T).
struct WorkspaceStats {
    std::size_t buffers = 0;
    std::size_t max_length = 0;
};
WorkspaceStats workspace_stats();
void reset_workspace_stats();

/// Reparameterized estimate for the listed rows. `value` is the likelihood
/// estimate plus, for every listed factor, its prior log-density (normalized)
/// and entropy; for full id lists and scale 1 it is the exact one-sample ELBO.
SmoothGradient smooth_gradient(const SmoothingLikelihood& likelihood, const PriorPrecision& prior,
                               const SmoothFactorParams& words,
                               const SmoothFactorParams& contexts, const SmoothNoise& noise,
                               std::span<const WordId> word_ids,
                               std::span<const WordId> context_ids, double scale);

struct SmoothOptions {
    std::size_t batch_size = 1000;
    std::size_t pretrain_steps = 5000;
    AdamConfig pretrain_adam{1e-2, 0.9, 0.999, 1e-8};
    std::size_t steps = 1000;
    AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
};

SmoothOptions smooth_options(const Hyperparameters& hyper);

/// Optimizer state. Means are optimized through their natural coefficients,
/// stored in `words.mean` / `contexts.mean` as rho (use means() for mu).
struct SmoothState {
    SmoothFactorParams words;
    SmoothFactorParams contexts;
    std::size_t iteration = 0;  // completed iterations over both phases
    AdamState word_coefficients, word_diag, word_upper;
    AdamState context_coefficients, context_diag, context_upper;
};

SmoothState initial_smooth_state(std::size_t vocab_size, std::size_t dimension,
                                 const NaturalBasis& basis, const SmoothOptions& options);

/// Converts the coefficients in a state back to means.
SmoothFactorParams to_mean_parameters(const SmoothFactorParams& natural, const NaturalBasis& basis);

/// Called after every iteration with the one-sample ELBO estimate.
using SmoothObserver = std::function<void(std::size_t iteration, double elbo)>;

/// Runs Algorithm-style joint inference: `pretrain_steps` minibatch iterations
/// (batch_size words and contexts, likelihood scaled by L / batch_size) and then
/// `steps` full-batch iterations. Adam moments restart between the phases.
/// Continues from `state.iteration`; stops early after `max_iterations` more
/// iterations when given (for checkpointing).
void run_smoother(const SmoothingLikelihood& likelihood, const PriorPrecision& prior,
                  const SmoothOptions& options, std::uint64_t seed, SmoothState& state,
                  const SmoothObserver& observer = {},
                  std::size_t max_iterations = static_cast<std::size_t>(-1));

struct SmoothResult {
    SmoothFactorParams words;     // means, not coefficients
    SmoothFactorParams contexts;
    EmbeddingTrajectory means;
};

/// Skip-gram smoothing from the prior initialization.
SmoothResult smooth_counts(const CountSeries& counts, const Hyperparameters& hyper,
                           std::uint64_t seed, const SmoothObserver& observer = {});

SmoothResult smooth_result(const SmoothState& state, const NaturalBasis& basis);

}  // namespace driftvec
