#include "driftvec/baselines.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <string>

#include "driftvec/random.hpp"

namespace driftvec {

StaticOptions static_options(const Hyperparameters& hyper) {
    StaticOptions o;
    o.steps = hyper.filter_steps;
    o.adam = {hyper.filter_learning_rate, hyper.beta1, hyper.filter_beta2, hyper.adam_epsilon};
    o.prior_variance = hyper.prior_variance;
    return o;
}

double static_objective(const CountSlice& slice, const Matrix& words, const Matrix& contexts,
                        double prior_variance) {
    return log_likelihood(slice, words, contexts) -
           (words.squaredNorm() + contexts.squaredNorm()) / (2.0 * prior_variance);
}

namespace {

void adam_ascend(AdamState& adam, Matrix& param, const Matrix& grad, std::vector<double>& delta) {
    delta.resize(static_cast<std::size_t>(param.size()));
    adam.step({grad.data(), delta.size()}, delta);
    Eigen::Map<Eigen::ArrayXd>(param.data(), param.size()) +=
        Eigen::Map<const Eigen::ArrayXd>(delta.data(), param.size());
}

}  // namespace

StaticFit train_static(const CountSlice& slice, Matrix words, Matrix contexts,
                       const StaticOptions& options) {
    if (words.rows() != static_cast<Eigen::Index>(slice.vocab_size()) ||
        contexts.rows() != words.rows() || contexts.cols() != words.cols())
        throw ValidationError("static fit: initial embeddings do not match the vocabulary");
    if (!(options.prior_variance > 0.0))
        throw ValidationError("static fit needs a positive prior variance");
    const double inv_prior = std::isfinite(options.prior_variance) ? 1.0 / options.prior_variance : 0.0;
    AdamState adam_words(static_cast<std::size_t>(words.size()), options.adam);
    AdamState adam_contexts(static_cast<std::size_t>(contexts.size()), options.adam);
    std::vector<double> delta;
    StaticFit fit;
    fit.objective_trace.reserve(options.steps);
    for (std::size_t it = 0; it < options.steps; ++it) {
        LikelihoodGradient g = likelihood_gradient(slice, words, contexts);
        fit.objective_trace.push_back(
            g.value - 0.5 * inv_prior * (words.squaredNorm() + contexts.squaredNorm()));
        g.words -= inv_prior * words;
        g.contexts -= inv_prior * contexts;
        try {
            adam_ascend(adam_words, words, g.words, delta);
            adam_ascend(adam_contexts, contexts, g.contexts, delta);
        } catch (const ValidationError&) {
            throw;
        } catch (const Error& e) {
            throw Error("static fit diverged at iteration " + std::to_string(it) + ": " + e.what());
        }
    }
    fit.log_likelihood = log_likelihood(slice, words, contexts);
    fit.objective = fit.log_likelihood - 0.5 * inv_prior * (words.squaredNorm() + contexts.squaredNorm());
    if (!std::isfinite(fit.objective)) throw Error("static fit produced a non-finite objective");
    fit.words = std::move(words);
    fit.contexts = std::move(contexts);
    return fit;
}

EmbeddingSnapshot random_init(std::size_t vocab_size, std::size_t dimension, double scale,
                              std::uint64_t seed, std::size_t t) {
    Rng rng(derive_seed(seed, "static/init", {t}));
    EmbeddingSnapshot s;
    for (Matrix* m : {&s.words, &s.contexts}) {
        m->resize(static_cast<Eigen::Index>(vocab_size), static_cast<Eigen::Index>(dimension));
        for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = scale * rng.normal();
    }
    return s;
}

Matrix procrustes_align(const Matrix& reference, const Matrix& current) {
    if (reference.rows() != current.rows() || reference.cols() != current.cols())
        throw ValidationError("Procrustes alignment needs matrices of equal shape");
    const Eigen::MatrixXd cross = current.transpose() * reference;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().transpose();
}

namespace {

void check_counts(const CountSeries& counts, std::size_t dimension) {
    if (counts.steps() == 0) throw ValidationError("no time steps to fit");
    if (dimension == 0) throw ValidationError("embedding dimension must be positive");
}

}  // namespace

StaticTrajectory run_sgi(const CountSeries& counts, const StaticOptions& options,
                         std::size_t dimension, double init_scale, std::uint64_t seed,
                         const StaticObserver& observer) {
    check_counts(counts, dimension);
    const std::size_t vocab = counts.vocabulary.size();
    StaticTrajectory out;
    for (std::size_t t = 0; t < counts.steps(); ++t) {
        EmbeddingSnapshot init = random_init(vocab, dimension, init_scale, seed, t);
        out.fits.push_back(train_static(counts.slices[t], std::move(init.words),
                                        std::move(init.contexts), options));
        if (observer) observer(t, out.fits.back());
        const StaticFit& fit = out.fits.back();
        Matrix rotation = t == 0 ? Matrix::Identity(static_cast<Eigen::Index>(dimension),
                                                    static_cast<Eigen::Index>(dimension))
                                 : procrustes_align(out.embeddings.back().words, fit.words);
        out.embeddings.push_back({fit.words * rotation, fit.contexts * rotation});
        out.rotations.push_back(std::move(rotation));
    }
    return out;
}

StaticTrajectory run_sgp(const CountSeries& counts, const StaticOptions& options,
                         std::size_t dimension, double init_scale, std::uint64_t seed,
                         const StaticObserver& observer) {
    check_counts(counts, dimension);
    const std::size_t vocab = counts.vocabulary.size();
    const Matrix identity = Matrix::Identity(static_cast<Eigen::Index>(dimension),
                                             static_cast<Eigen::Index>(dimension));
    StaticTrajectory out;
    for (std::size_t t = 0; t < counts.steps(); ++t) {
        EmbeddingSnapshot init = t == 0 ? random_init(vocab, dimension, init_scale, seed, 0)
                                        : out.embeddings.back();
        out.fits.push_back(train_static(counts.slices[t], std::move(init.words),
                                        std::move(init.contexts), options));
        if (observer) observer(t, out.fits.back());
        out.embeddings.push_back({out.fits.back().words, out.fits.back().contexts});
        out.rotations.push_back(identity);
    }
    return out;
}

}  // namespace driftvec
