#include "driftvec/filter.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace driftvec {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;  // log(2 pi)

void check_factors(const GaussianFactors& f) {
    if (f.mean.rows() != f.variance.rows() || f.mean.cols() != f.variance.cols())
        throw ValidationError("Gaussian factor shapes disagree");
    if (!f.mean.allFinite()) throw Error("Gaussian factor has non-finite means");
    if (!(f.variance.array() > 0.0).all() || !f.variance.allFinite())
        throw Error("Gaussian factor variances must be positive and finite");
}

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = rng.normal();
    return m;
}

// Closed-form E_q[log N(u; prior)] + entropy(q) for one array of factors, and
// its gradient with respect to (mean, log-variance).
double gaussian_terms(const Matrix& mean, const Matrix& log_var, const GaussianFactors& prior,
                      Matrix& grad_mean, Matrix& grad_log_var) {
    const auto var = log_var.array().exp();
    const auto diff = mean.array() - prior.mean.array();
    const auto inv_prior = prior.variance.array().inverse();
    const double expected_log_prior =
        (-0.5 * (kLogTwoPi + prior.variance.array().log()) -
         0.5 * (diff.square() + var) * inv_prior)
            .sum();
    const double entropy = (0.5 * (kLogTwoPi + 1.0) + 0.5 * log_var.array()).sum();
    grad_mean.array() -= diff * inv_prior;
    grad_log_var.array() += 0.5 - 0.5 * var * inv_prior;
    return expected_log_prior + entropy;
}

}  // namespace

PropagatedPrior initial_prior(std::size_t vocab_size, std::size_t dimension, double prior_variance) {
    if (!(prior_variance > 0.0) || !std::isfinite(prior_variance))
        throw ValidationError("the first-step prior needs a finite positive variance");
    const auto rows = static_cast<Eigen::Index>(vocab_size);
    const auto cols = static_cast<Eigen::Index>(dimension);
    GaussianFactors f{Matrix::Zero(rows, cols), Matrix::Constant(rows, cols, prior_variance)};
    return {f, f};
}

GaussianFactors propagate_prior(const GaussianFactors& previous, double step_variance,
                                double prior_variance) {
    check_factors(previous);
    if (!(step_variance > 0.0) || !std::isfinite(step_variance))
        throw ValidationError("step variance must be positive and finite");
    if (!(prior_variance > 0.0)) throw ValidationError("prior variance must be positive");
    const auto widened = previous.variance.array() + step_variance;
    GaussianFactors out;
    out.variance = (widened.inverse() + 1.0 / prior_variance).inverse().matrix();
    out.mean = (out.variance.array() / widened * previous.mean.array()).matrix();
    return out;
}

PropagatedPrior propagate_prior(const FilterPosterior& previous, double step_variance,
                                double prior_variance) {
    return {propagate_prior(previous.words, step_variance, prior_variance),
            propagate_prior(previous.contexts, step_variance, prior_variance)};
}

FilterPosterior FilterVariational::posterior() const {
    return {{word_mean, word_log_variance.array().exp().matrix()},
            {context_mean, context_log_variance.array().exp().matrix()}};
}

FilterVariational FilterVariational::from(const PropagatedPrior& prior) {
    return {prior.words.mean, prior.words.variance.array().log().matrix(), prior.contexts.mean,
            prior.contexts.variance.array().log().matrix()};
}

FilterNoise draw_filter_noise(std::size_t vocab_size, std::size_t dimension, Rng& rng) {
    const auto rows = static_cast<Eigen::Index>(vocab_size);
    const auto cols = static_cast<Eigen::Index>(dimension);
    FilterNoise n;
    n.words = standard_normal(rows, cols, rng);
    n.contexts = standard_normal(rows, cols, rng);
    return n;
}

FilterElbo estimate_elbo_gradient(const FilterVariational& q, const PropagatedPrior& prior,
                                  const CountSlice& slice, std::span<const FilterNoise> noise) {
    if (noise.empty()) throw ValidationError("at least one noise sample is required");
    const auto rows = q.word_mean.rows();
    const auto cols = q.word_mean.cols();
    FilterElbo out;
    out.gradient = {Matrix::Zero(rows, cols), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols),
                    Matrix::Zero(rows, cols)};
    const Matrix word_sd = (0.5 * q.word_log_variance.array()).exp().matrix();
    const Matrix context_sd = (0.5 * q.context_log_variance.array()).exp().matrix();
    const double inv_samples = 1.0 / static_cast<double>(noise.size());

    if (!slice.empty()) {
        for (const auto& eps : noise) {
            const Matrix u = q.word_mean + word_sd.cwiseProduct(eps.words);
            const Matrix v = q.context_mean + context_sd.cwiseProduct(eps.contexts);
            const auto lg = likelihood_gradient(slice, u, v);
            out.value += inv_samples * lg.value;
            out.gradient.word_mean += inv_samples * lg.words;
            out.gradient.context_mean += inv_samples * lg.contexts;
            // d u / d log-variance = eps * sd / 2.
            out.gradient.word_log_variance.array() +=
                inv_samples * 0.5 * lg.words.array() * eps.words.array() * word_sd.array();
            out.gradient.context_log_variance.array() +=
                inv_samples * 0.5 * lg.contexts.array() * eps.contexts.array() * context_sd.array();
        }
    }
    out.value += gaussian_terms(q.word_mean, q.word_log_variance, prior.words,
                                out.gradient.word_mean, out.gradient.word_log_variance);
    out.value += gaussian_terms(q.context_mean, q.context_log_variance, prior.contexts,
                                out.gradient.context_mean, out.gradient.context_log_variance);
    return out;
}

FilterElbo estimate_elbo_gradient(const FilterVariational& q, const PropagatedPrior& prior,
                                  const CountSlice& slice, std::size_t samples, Rng& rng) {
    std::vector<FilterNoise> noise;
    noise.reserve(samples);
    for (std::size_t s = 0; s < samples; ++s)
        noise.push_back(draw_filter_noise(static_cast<std::size_t>(q.word_mean.rows()),
                                          static_cast<std::size_t>(q.word_mean.cols()), rng));
    return estimate_elbo_gradient(q, prior, slice, noise);
}

FilterOptions filter_options(const Hyperparameters& hyper) {
    FilterOptions o;
    o.steps = hyper.filter_steps;
    o.adam = {hyper.filter_learning_rate, hyper.beta1, hyper.filter_beta2, hyper.adam_epsilon};
    return o;
}

namespace {

void adam_apply(AdamState& adam, Matrix& param, const Matrix& grad, std::vector<double>& buffer) {
    buffer.resize(static_cast<std::size_t>(param.size()));
    adam.step({grad.data(), buffer.size()}, buffer);
    Eigen::Map<const Eigen::ArrayXd> delta(buffer.data(), param.size());
    Eigen::Map<Eigen::ArrayXd>(param.data(), param.size()) += delta;
}

}  // namespace

FilterPosterior filter_step(const PropagatedPrior& prior, const FilterVariational& start,
                            const CountSlice& slice, const FilterOptions& options,
                            std::uint64_t seed, FilterStepStats* stats) {
    check_factors(prior.words);
    check_factors(prior.contexts);
    if (options.samples == 0) throw ValidationError("filter needs at least one sample per step");
    FilterVariational q = start;
    const auto size = static_cast<std::size_t>(q.word_mean.size());
    AdamState adam_wm(size, options.adam), adam_wv(size, options.adam);
    AdamState adam_cm(size, options.adam), adam_cv(size, options.adam);
    std::vector<double> buffer;
    Rng rng(seed);

    FilterStepStats local;
    double previous_window = 0.0, window_sum = 0.0;
    bool have_previous = false;
    for (std::size_t it = 0; it < options.steps; ++it) {
        const FilterElbo elbo = estimate_elbo_gradient(q, prior, slice, options.samples, rng);
        local.elbo_trace.push_back(elbo.value);
        adam_apply(adam_wm, q.word_mean, elbo.gradient.word_mean, buffer);
        adam_apply(adam_wv, q.word_log_variance, elbo.gradient.word_log_variance, buffer);
        adam_apply(adam_cm, q.context_mean, elbo.gradient.context_mean, buffer);
        adam_apply(adam_cv, q.context_log_variance, elbo.gradient.context_log_variance, buffer);
        local.iterations = it + 1;

        window_sum += elbo.value;
        const std::size_t window = options.early_stop_window;
        if (window > 0 && (it + 1) % window == 0) {
            const double mean = window_sum / static_cast<double>(window);
            window_sum = 0.0;
            local.final_elbo = mean;
            if (have_previous &&
                mean - previous_window < options.early_stop_tolerance * std::abs(previous_window))
                break;
            previous_window = mean;
            have_previous = true;
        }
    }
    if (options.early_stop_window == 0 || local.iterations % options.early_stop_window != 0) {
        const std::size_t tail = std::min<std::size_t>(local.elbo_trace.size(), 200);
        double sum = 0.0;
        for (std::size_t k = local.elbo_trace.size() - tail; k < local.elbo_trace.size(); ++k)
            sum += local.elbo_trace[k];
        local.final_elbo = tail ? sum / static_cast<double>(tail) : 0.0;
    }

    FilterPosterior post = q.posterior();
    check_factors(post.words);
    check_factors(post.contexts);
    if (stats) *stats = std::move(local);
    return post;
}

FilterResult run_filter(const CountSeries& counts, const Hyperparameters& hyper,
                        const FilterOptions& options, std::uint64_t seed,
                        std::vector<FilterPosterior> completed, const FilterObserver& observer) {
    hyper.validate();
    if (counts.steps() == 0) throw ValidationError("no time steps to filter");
    if (!std::isfinite(hyper.prior_variance))
        throw ValidationError("filtering needs a finite prior variance");
    if (completed.size() > counts.steps())
        throw ValidationError("resumed filter state is longer than the count series");
    const std::size_t vocab = counts.vocabulary.size();
    const std::size_t dim = hyper.dimension;
    for (const auto& c : completed)
        if (c.words.mean.rows() != static_cast<Eigen::Index>(vocab) ||
            c.words.mean.cols() != static_cast<Eigen::Index>(dim))
            throw ValidationError("resumed filter state does not match vocabulary or dimension");
    const auto vars = step_variances(counts.grid, hyper.diffusion);

    FilterResult result;
    result.posteriors = std::move(completed);
    for (std::size_t t = result.posteriors.size(); t < counts.steps(); ++t) {
        PropagatedPrior prior = t == 0 ? initial_prior(vocab, dim, hyper.prior_variance)
                                       : propagate_prior(result.posteriors[t - 1], vars[t - 1],
                                                         hyper.prior_variance);
        FilterVariational start = FilterVariational::from(prior);
        if (t == 0 && options.init_jitter > 0.0) {
            Rng init(derive_seed(seed, "filter/init"));
            for (Matrix* m : {&start.word_mean, &start.context_mean})
                for (Eigen::Index k = 0; k < m->size(); ++k)
                    m->data()[k] = options.init_jitter * init.normal();
        }
        FilterStepStats stats;
        try {
            result.posteriors.push_back(filter_step(prior, start, counts.slices[t], options,
                                                    derive_seed(seed, "filter/step", {t}), &stats));
        } catch (const ValidationError&) {
            throw;
        } catch (const Error& e) {
            throw Error("filter failed at step " + std::to_string(t) + ": " + e.what());
        }
        if (observer) observer(t, result.posteriors.back(), stats);
    }
    for (const auto& p : result.posteriors)
        result.means.push_back({p.words.mean, p.contexts.mean});
    return result;
}

}  // namespace driftvec
