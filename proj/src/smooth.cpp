#include "driftvec/smooth.hpp"

#include <cmath>
#include <string>

#include "driftvec/random.hpp"

namespace driftvec {

namespace {

WorkspaceStats g_workspace;

// Per-factor trajectory buffer. Every allocation is recorded in g_workspace.
std::vector<double> trajectory_buffer(std::size_t length) {
    ++g_workspace.buffers;
    g_workspace.max_length = std::max(g_workspace.max_length, length);
    return std::vector<double>(length, 0.0);
}

void check_bidiagonal(std::span<const double> diag, std::span<const double> upper) {
    if (diag.empty()) throw ValidationError("empty trajectory");
    if (upper.size() + 1 != diag.size())
        throw ValidationError("bidiagonal factor needs T-1 superdiagonal entries");
    for (double v : diag)
        if (!(v > 0.0)) throw ValidationError("Cholesky diagonal entries must be positive");
}

}  // namespace

WorkspaceStats workspace_stats() { return g_workspace; }
void reset_workspace_stats() { g_workspace = {}; }

void solve_upper(std::span<const double> diag, std::span<const double> upper,
                 std::span<const double> rhs, std::span<double> out) {
    check_bidiagonal(diag, upper);
    const std::size_t n = diag.size();
    out[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t t = n - 1; t-- > 0;) out[t] = (rhs[t] - upper[t] * out[t + 1]) / diag[t];
}

void solve_upper_transposed(std::span<const double> diag, std::span<const double> upper,
                            std::span<const double> rhs, std::span<double> out) {
    check_bidiagonal(diag, upper);
    out[0] = rhs[0] / diag[0];
    for (std::size_t t = 1; t < diag.size(); ++t)
        out[t] = (rhs[t] - upper[t - 1] * out[t - 1]) / diag[t];
}

void sample_trajectory(std::span<const double> mean, std::span<const double> diag,
                       std::span<const double> upper, std::span<const double> noise,
                       std::span<double> sample, std::span<double> displacement) {
    solve_upper(diag, upper, noise, displacement);
    for (std::size_t t = 0; t < mean.size(); ++t) sample[t] = mean[t] + displacement[t];
}

double entropy_term(std::span<const double> diag) {
    double total = 0.0;
    for (double v : diag) {
        if (!(v > 0.0)) throw ValidationError("Cholesky diagonal entries must be positive");
        total -= std::log(v);
    }
    return total;
}

void grad_mu(std::span<const double> pull, const PriorPrecision& prior,
             std::span<const double> sample, std::span<double> out) {
    prior.multiply(sample, out);
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = pull[t] - out[t];
}

void grad_nu_omega(std::span<const double> residual, std::span<const double> displacement,
                   std::span<const double> diag, std::span<const double> upper,
                   std::span<double> scratch, std::span<double> grad_diag,
                   std::span<double> grad_upper) {
    solve_upper_transposed(diag, upper, residual, scratch);
    for (std::size_t t = 0; t < diag.size(); ++t)
        grad_diag[t] = -scratch[t] * displacement[t] - 1.0 / diag[t];
    for (std::size_t t = 0; t < upper.size(); ++t)
        grad_upper[t] = -scratch[t] * displacement[t + 1];
}

NaturalBasis::NaturalBasis(const PriorPrecision& prior) {
    const std::size_t n = prior.size();
    if (n == 0) throw ValidationError("natural basis needs at least one step");
    diag_.resize(n);
    upper_.resize(n - 1);
    for (std::size_t t = 0; t < n; ++t) {
        const double carried = t == 0 ? 0.0 : upper_[t - 1] * upper_[t - 1];
        const double pivot = prior.diagonal[t] - carried;
        if (!(pivot > 0.0)) throw Error("prior precision is not positive definite");
        diag_[t] = std::sqrt(pivot);
        if (t + 1 < n) upper_[t] = prior.offdiagonal[t] / diag_[t];
    }
}

void NaturalBasis::to_natural(std::span<const double> mean, std::span<double> coefficients) const {
    const std::size_t n = size();
    for (std::size_t t = 0; t < n; ++t) {
        coefficients[t] = diag_[t] * mean[t];
        if (t + 1 < n) coefficients[t] += upper_[t] * mean[t + 1];
    }
}

void NaturalBasis::from_natural(std::span<const double> coefficients, std::span<double> mean) const {
    solve_upper(diag_, upper_, coefficients, mean);
}

void NaturalBasis::gradient_to_natural(std::span<const double> grad_mean,
                                       std::span<double> out) const {
    solve_upper_transposed(diag_, upper_, grad_mean, out);
}

SmoothFactorParams SmoothFactorParams::zeros(std::size_t vocab_size, std::size_t dimension,
                                             std::size_t steps) {
    if (steps == 0) throw ValidationError("factor parameters need at least one step");
    SmoothFactorParams p;
    p.vocab_size = vocab_size;
    p.dimension = dimension;
    p.steps = steps;
    p.mean.assign(vocab_size * dimension * steps, 0.0);
    p.diag.assign(vocab_size * dimension * steps, 0.0);
    p.upper.assign(vocab_size * dimension * (steps - 1), 0.0);
    return p;
}

std::span<double> SmoothFactorParams::mean_of(std::size_t f) {
    return std::span<double>(mean).subspan(f * steps, steps);
}
std::span<const double> SmoothFactorParams::mean_of(std::size_t f) const {
    return std::span<const double>(mean).subspan(f * steps, steps);
}
std::span<double> SmoothFactorParams::diag_of(std::size_t f) {
    return std::span<double>(diag).subspan(f * steps, steps);
}
std::span<const double> SmoothFactorParams::diag_of(std::size_t f) const {
    return std::span<const double>(diag).subspan(f * steps, steps);
}
std::span<double> SmoothFactorParams::upper_of(std::size_t f) {
    return std::span<double>(upper).subspan(f * (steps - 1), steps - 1);
}
std::span<const double> SmoothFactorParams::upper_of(std::size_t f) const {
    return std::span<const double>(upper).subspan(f * (steps - 1), steps - 1);
}

Matrix SmoothFactorParams::mean_at(std::size_t t) const {
    if (t >= steps) throw ValidationError("step index out of range");
    Matrix m(static_cast<Eigen::Index>(vocab_size), static_cast<Eigen::Index>(dimension));
    for (std::size_t i = 0; i < vocab_size; ++i)
        for (std::size_t k = 0; k < dimension; ++k)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                mean[(i * dimension + k) * steps + t];
    return m;
}

std::vector<double> SmoothFactorParams::marginal_variances(std::size_t f) const {
    const auto d = diag_of(f);
    const auto w = upper_of(f);
    check_bidiagonal(d, w);
    std::vector<double> out(steps);
    // Sigma = B^-1 B^-T; from B Sigma = B^-T, Sigma_tt = (1 + w_t^2 Sigma_{t+1,t+1}) / nu_t^2.
    out[steps - 1] = 1.0 / (d[steps - 1] * d[steps - 1]);
    for (std::size_t t = steps - 1; t-- > 0;)
        out[t] = (1.0 + w[t] * w[t] * out[t + 1]) / (d[t] * d[t]);
    return out;
}

SmoothFactorParams prior_factors(std::size_t vocab_size, std::size_t dimension,
                                 const NaturalBasis& basis) {
    SmoothFactorParams p = SmoothFactorParams::zeros(vocab_size, dimension, basis.size());
    for (std::size_t f = 0; f < p.factor_count(); ++f) {
        std::copy(basis.diagonal().begin(), basis.diagonal().end(), p.diag_of(f).begin());
        std::copy(basis.upper().begin(), basis.upper().end(), p.upper_of(f).begin());
    }
    return p;
}

LikelihoodGradient SkipGramLikelihood::evaluate(std::size_t t, const Matrix& words,
                                                const Matrix& contexts,
                                                std::span<const WordId> word_ids,
                                                std::span<const WordId> context_ids,
                                                double scale) const {
    return likelihood_gradient(counts_.slices.at(t), words, contexts, word_ids, context_ids,
                               scale);
}

namespace {

void check_params(const SmoothFactorParams& p, std::size_t vocab, std::size_t dim,
                  std::size_t steps) {
    if (p.vocab_size != vocab || p.dimension != dim || p.steps != steps ||
        p.mean.size() != vocab * dim * steps || p.diag.size() != p.mean.size() ||
        p.upper.size() != vocab * dim * (steps - 1))
        throw ValidationError("smoothing parameters have inconsistent shapes");
}

void check_ids(std::span<const WordId> ids, std::size_t vocab) {
    std::vector<char> seen(vocab, 0);
    for (WordId i : ids) {
        if (i >= vocab) throw ValidationError("row id out of range");
        if (seen[i]) throw ValidationError("row ids must be distinct");
        seen[i] = 1;
    }
}

// Everything smooth_gradient needs per embedding matrix.
struct MatrixPass {
    const SmoothFactorParams* params;
    const std::vector<double>* noise;
    std::span<const WordId> ids;
    SmoothFactorParams* gradient;
};

}  // namespace

SmoothGradient smooth_gradient(const SmoothingLikelihood& likelihood, const PriorPrecision& prior,
                               const SmoothFactorParams& words,
                               const SmoothFactorParams& contexts, const SmoothNoise& noise,
                               std::span<const WordId> word_ids,
                               std::span<const WordId> context_ids, double scale) {
    const std::size_t steps = prior.size();
    const std::size_t vocab = likelihood.vocab_size();
    const std::size_t dim = words.dimension;
    if (likelihood.steps() != steps) throw ValidationError("likelihood and prior differ in T");
    check_params(words, vocab, dim, steps);
    check_params(contexts, vocab, dim, steps);
    if (noise.words.size() != words.mean.size() || noise.contexts.size() != contexts.mean.size())
        throw ValidationError("noise shape does not match the parameters");
    check_ids(word_ids, vocab);
    check_ids(context_ids, vocab);

    SmoothGradient out;
    out.words = SmoothFactorParams::zeros(vocab, dim, steps);
    out.contexts = SmoothFactorParams::zeros(vocab, dim, steps);
    const MatrixPass passes[2] = {{&words, &noise.words, word_ids, &out.words},
                                  {&contexts, &noise.contexts, context_ids, &out.contexts}};

    auto sample = trajectory_buffer(steps);
    auto displacement = trajectory_buffer(steps);
    auto residual = trajectory_buffer(steps);
    auto scratch = trajectory_buffer(steps);

    // Stage 1: draw every listed factor's trajectory into per-step matrices.
    const auto rows = static_cast<Eigen::Index>(vocab);
    const auto cols = static_cast<Eigen::Index>(dim);
    std::vector<Matrix> sampled[2];
    for (int m = 0; m < 2; ++m) {
        sampled[m].assign(steps, Matrix::Zero(rows, cols));
        const auto& pass = passes[m];
        for (WordId i : pass.ids)
            for (std::size_t k = 0; k < dim; ++k) {
                const std::size_t f = i * dim + k;
                const std::span<const double> eps(pass.noise->data() + f * steps, steps);
                sample_trajectory(pass.params->mean_of(f), pass.params->diag_of(f),
                                  pass.params->upper_of(f), eps, sample, displacement);
                for (std::size_t t = 0; t < steps; ++t)
                    sampled[m][t](i, static_cast<Eigen::Index>(k)) = sample[t];
            }
    }

    // Stage 2: likelihood pull Gamma at every step, scattered into gradient.mean.
    for (std::size_t t = 0; t < steps; ++t) {
        const auto lg = likelihood.evaluate(t, sampled[0][t], sampled[1][t], word_ids,
                                            context_ids, scale);
        out.value += lg.value;
        const Matrix* grads[2] = {&lg.words, &lg.contexts};
        for (int m = 0; m < 2; ++m)
            for (std::size_t a = 0; a < passes[m].ids.size(); ++a)
                for (std::size_t k = 0; k < dim; ++k)
                    passes[m].gradient->mean[(passes[m].ids[a] * dim + k) * steps + t] =
                        (*grads[m])(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k));
    }

    // Stage 3: per-factor prior, entropy and Theta(T) gradients.
    const double normalizer = 0.5 * prior.log_determinant() + 0.5 * static_cast<double>(steps);
    for (const auto& pass : passes)
        for (WordId i : pass.ids)
            for (std::size_t k = 0; k < dim; ++k) {
                const std::size_t f = i * dim + k;
                const std::span<const double> eps(pass.noise->data() + f * steps, steps);
                const auto diag = pass.params->diag_of(f);
                const auto upper = pass.params->upper_of(f);
                sample_trajectory(pass.params->mean_of(f), diag, upper, eps, sample, displacement);
                auto g_mean = pass.gradient->mean_of(f);
                std::copy(g_mean.begin(), g_mean.end(), residual.begin());
                grad_mu(residual, prior, sample, g_mean);
                grad_nu_omega(g_mean, displacement, diag, upper, scratch,
                              pass.gradient->diag_of(f), pass.gradient->upper_of(f));
                out.value += normalizer - 0.5 * prior.quadratic_form(sample) + entropy_term(diag);
            }
    return out;
}

SmoothOptions smooth_options(const Hyperparameters& hyper) {
    SmoothOptions o;
    o.batch_size = hyper.batch_size;
    o.pretrain_steps = hyper.smooth_pretrain_steps;
    o.pretrain_adam = {hyper.smooth_pretrain_learning_rate, hyper.beta1, hyper.smooth_beta2,
                       hyper.adam_epsilon};
    o.steps = hyper.smooth_steps;
    o.adam = {hyper.smooth_learning_rate, hyper.beta1, hyper.smooth_beta2, hyper.adam_epsilon};
    return o;
}

SmoothState initial_smooth_state(std::size_t vocab_size, std::size_t dimension,
                                 const NaturalBasis& basis, const SmoothOptions& options) {
    SmoothState s;
    s.words = prior_factors(vocab_size, dimension, basis);
    s.contexts = prior_factors(vocab_size, dimension, basis);
    const AdamConfig first = options.pretrain_steps > 0 ? options.pretrain_adam : options.adam;
    const std::size_t n = s.words.mean.size();
    const std::size_t n_upper = s.words.upper.size();
    s.word_coefficients = AdamState(n, first);
    s.word_diag = AdamState(n, first);
    s.word_upper = AdamState(n_upper, first);
    s.context_coefficients = AdamState(n, first);
    s.context_diag = AdamState(n, first);
    s.context_upper = AdamState(n_upper, first);
    return s;
}

SmoothFactorParams to_mean_parameters(const SmoothFactorParams& natural, const NaturalBasis& basis) {
    SmoothFactorParams p = natural;
    for (std::size_t f = 0; f < p.factor_count(); ++f)
        basis.from_natural(natural.mean_of(f), p.mean_of(f));
    return p;
}

namespace {

std::vector<double> pack_rows(const std::vector<double>& values, std::span<const WordId> ids,
                              std::size_t width) {
    std::vector<double> packed(ids.size() * width);
    for (std::size_t a = 0; a < ids.size(); ++a)
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(ids[a] * width), width,
                    packed.begin() + static_cast<std::ptrdiff_t>(a * width));
    return packed;
}

void check_finite_rows(const std::vector<double>& packed, std::span<const WordId> ids,
                       std::size_t width, std::size_t iteration, const char* matrix) {
    for (std::size_t a = 0; a < ids.size(); ++a)
        for (std::size_t c = 0; c < width; ++c)
            if (!std::isfinite(packed[a * width + c]))
                throw Error("smoothing diverged at iteration " + std::to_string(iteration) +
                            ": non-finite " + matrix + " parameter for word id " +
                            std::to_string(ids[a]));
}

void update_matrix(SmoothFactorParams& natural, const SmoothFactorParams& grad,
                   std::span<const WordId> ids, const NaturalBasis& basis, AdamState& adam_rho,
                   AdamState& adam_diag, AdamState& adam_upper, std::size_t iteration,
                   const char* matrix) {
    const std::size_t steps = natural.steps;
    const std::size_t dim = natural.dimension;
    const std::size_t width = natural.word_width();
    const std::size_t upper_width = natural.word_upper_width();
    const std::vector<std::size_t> rows(ids.begin(), ids.end());

    // dL/drho = C^-T dL/dmu, row by row.
    std::vector<double> g_rho(ids.size() * width);
    for (std::size_t a = 0; a < ids.size(); ++a)
        for (std::size_t k = 0; k < dim; ++k) {
            const std::size_t f = ids[a] * dim + k;
            basis.gradient_to_natural(grad.mean_of(f),
                                      std::span<double>(g_rho).subspan((a * dim + k) * steps, steps));
        }
    const auto g_diag = pack_rows(grad.diag, ids, width);
    const auto g_upper = pack_rows(grad.upper, ids, upper_width);
    check_finite_rows(g_rho, ids, width, iteration, matrix);
    check_finite_rows(g_diag, ids, width, iteration, matrix);
    check_finite_rows(g_upper, ids, upper_width, iteration, matrix);

    std::vector<double> delta(g_rho.size());
    adam_rho.step_rows(rows, width, g_rho, delta);
    for (std::size_t a = 0; a < ids.size(); ++a)
        for (std::size_t c = 0; c < width; ++c) natural.mean[ids[a] * width + c] += delta[a * width + c];

    adam_diag.step_rows(rows, width, g_diag, delta);
    for (std::size_t a = 0; a < ids.size(); ++a)
        for (std::size_t c = 0; c < width; ++c) {
            double& nu = natural.diag[ids[a] * width + c];
            nu = mirror_ascent_update(nu, delta[a * width + c]);
        }

    if (upper_width > 0) {
        std::vector<double> delta_upper(g_upper.size());
        adam_upper.step_rows(rows, upper_width, g_upper, delta_upper);
        for (std::size_t a = 0; a < ids.size(); ++a)
            for (std::size_t c = 0; c < upper_width; ++c)
                natural.upper[ids[a] * upper_width + c] += delta_upper[a * upper_width + c];
    }

    for (std::size_t a = 0; a < ids.size(); ++a) {
        bool ok = true;
        for (std::size_t c = 0; c < width; ++c)
            ok = ok && std::isfinite(natural.mean[ids[a] * width + c]) &&
                 natural.diag[ids[a] * width + c] > 0.0 &&
                 std::isfinite(natural.diag[ids[a] * width + c]);
        for (std::size_t c = 0; c < upper_width; ++c)
            ok = ok && std::isfinite(natural.upper[ids[a] * upper_width + c]);
        if (!ok)
            throw Error("smoothing diverged at iteration " + std::to_string(iteration) +
                        ": invalid " + matrix + " parameter for word id " + std::to_string(ids[a]));
    }
}

void fill_noise(std::vector<double>& noise, std::span<const WordId> ids, std::size_t width,
                std::uint64_t seed, std::uint64_t matrix, std::size_t iteration) {
    for (WordId i : ids) {
        Rng rng(derive_seed(seed, "smooth/noise", {matrix, i, iteration}));
        for (std::size_t c = 0; c < width; ++c) noise[i * width + c] = rng.normal();
    }
}

}  // namespace

void run_smoother(const SmoothingLikelihood& likelihood, const PriorPrecision& prior,
                  const SmoothOptions& options, std::uint64_t seed, SmoothState& state,
                  const SmoothObserver& observer, std::size_t max_iterations) {
    const NaturalBasis basis(prior);
    const std::size_t vocab = likelihood.vocab_size();
    const std::size_t steps = prior.size();
    const std::size_t dim = state.words.dimension;
    check_params(state.words, vocab, dim, steps);
    check_params(state.contexts, vocab, dim, steps);
    if (options.pretrain_steps > 0 && (options.batch_size == 0 || options.batch_size > vocab))
        throw ValidationError("minibatch size must be between 1 and the vocabulary size");

    std::vector<WordId> all(vocab);
    for (std::size_t i = 0; i < vocab; ++i) all[i] = static_cast<WordId>(i);
    const std::size_t total = options.pretrain_steps + options.steps;
    const std::size_t width = state.words.word_width();
    SmoothNoise noise{std::vector<double>(state.words.mean.size(), 0.0),
                      std::vector<double>(state.contexts.mean.size(), 0.0)};
    AdamState* adams[6] = {&state.word_coefficients, &state.word_diag, &state.word_upper,
                           &state.context_coefficients, &state.context_diag,
                           &state.context_upper};

    for (std::size_t done = 0; state.iteration < total && done < max_iterations; ++done) {
        const std::size_t it = state.iteration;
        const bool minibatch = it < options.pretrain_steps;
        if (it == options.pretrain_steps && it > 0)
            for (AdamState* a : adams) a->reset();
        for (AdamState* a : adams) a->set_config(minibatch ? options.pretrain_adam : options.adam);

        std::vector<WordId> word_ids = all, context_ids = all;
        double scale = 1.0;
        if (minibatch && options.batch_size < vocab) {
            Rng rng(derive_seed(seed, "smooth/batch", {it}));
            const auto pick_words = rng.sample_without_replacement(vocab, options.batch_size);
            const auto pick_contexts = rng.sample_without_replacement(vocab, options.batch_size);
            word_ids.assign(pick_words.begin(), pick_words.end());
            context_ids.assign(pick_contexts.begin(), pick_contexts.end());
            scale = static_cast<double>(vocab) / static_cast<double>(options.batch_size);
        }
        fill_noise(noise.words, word_ids, width, seed, 0, it);
        fill_noise(noise.contexts, context_ids, width, seed, 1, it);

        const SmoothFactorParams words = to_mean_parameters(state.words, basis);
        const SmoothFactorParams contexts = to_mean_parameters(state.contexts, basis);
        const SmoothGradient g = smooth_gradient(likelihood, prior, words, contexts, noise,
                                                 word_ids, context_ids, scale);
        update_matrix(state.words, g.words, word_ids, basis, state.word_coefficients,
                      state.word_diag, state.word_upper, it, "word");
        update_matrix(state.contexts, g.contexts, context_ids, basis, state.context_coefficients,
                      state.context_diag, state.context_upper, it, "context");
        state.iteration = it + 1;
        if (observer) observer(state.iteration, g.value);
    }
}

SmoothResult smooth_result(const SmoothState& state, const NaturalBasis& basis) {
    SmoothResult r;
    r.words = to_mean_parameters(state.words, basis);
    r.contexts = to_mean_parameters(state.contexts, basis);
    for (std::size_t t = 0; t < r.words.steps; ++t)
        r.means.push_back({r.words.mean_at(t), r.contexts.mean_at(t)});
    return r;
}

SmoothResult smooth_counts(const CountSeries& counts, const Hyperparameters& hyper,
                           std::uint64_t seed, const SmoothObserver& observer) {
    hyper.validate();
    if (counts.steps() == 0) throw ValidationError("no time steps to smooth");
    if (!std::isfinite(hyper.prior_variance))
        throw ValidationError("smoothing needs a finite prior variance");
    const PriorPrecision prior = prior_precision(
        counts.steps(), step_variances(counts.grid, hyper.diffusion), hyper.prior_variance);
    const NaturalBasis basis(prior);
    const SmoothOptions options = smooth_options(hyper);
    SmoothState state =
        initial_smooth_state(counts.vocabulary.size(), hyper.dimension, basis, options);
    const SkipGramLikelihood likelihood(counts);
    run_smoother(likelihood, prior, options, seed, state, observer);
    return smooth_result(state, basis);
}

}  // namespace driftvec
