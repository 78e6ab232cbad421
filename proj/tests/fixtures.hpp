#pragma once

// Random instances and the dense reference for whole smoothing gradients,
// shared by the unit tests and the acceptance binary.

#include <cmath>
#include <string>
#include <vector>

#include "driftvec/random.hpp"
#include "driftvec/smooth.hpp"
#include "oracles.hpp"

namespace fixture {

using namespace driftvec;
using oracle::MatrixXd;
using oracle::VectorXd;

inline PriorPrecision random_prior(std::size_t steps, Rng& rng) {
    std::vector<double> vars(steps - 1);
    for (double& v : vars) v = 0.1 + rng.uniform();
    return prior_precision(steps, vars, 0.5 + rng.uniform());
}

inline CountSlice random_slice(std::size_t vocab, Rng& rng) {
    std::vector<Cooccurrence> entries;
    for (WordId i = 0; i < vocab; ++i)
        for (WordId j = 0; j <= i; ++j) {
            const double w = 0.5 + 3.0 * rng.uniform();
            entries.push_back({i, j, w});
            if (i != j) entries.push_back({j, i, w});
        }
    return CountSlice(vocab, entries, 0.75, 1.0);
}

inline CountSeries random_series(std::size_t vocab, std::size_t steps, Rng& rng, bool empty = false) {
    CountSeries s;
    std::vector<std::string> words;
    for (std::size_t i = 0; i < vocab; ++i) words.push_back("w" + std::to_string(i));
    s.vocabulary = Vocabulary(words);
    std::vector<double> grid;
    for (std::size_t t = 0; t < steps; ++t) {
        grid.push_back(static_cast<double>(t));
        s.slices.push_back(empty ? CountSlice(vocab, {}, 0.75, 1.0) : random_slice(vocab, rng));
    }
    s.grid = TimeGrid(grid);
    return s;
}

inline SmoothFactorParams random_params(std::size_t vocab, std::size_t dim, std::size_t steps, Rng& rng) {
    auto p = SmoothFactorParams::zeros(vocab, dim, steps);
    for (double& x : p.mean) x = 0.5 * rng.normal();
    for (double& x : p.diag) x = 0.7 + rng.uniform();
    for (double& x : p.upper) x = 0.5 * rng.normal();
    return p;
}

inline SmoothNoise random_noise(const SmoothFactorParams& p, Rng& rng) {
    SmoothNoise n{std::vector<double>(p.mean.size()), std::vector<double>(p.mean.size())};
    for (double& x : n.words) x = rng.normal();
    for (double& x : n.contexts) x = rng.normal();
    return n;
}

inline std::vector<WordId> all_ids(std::size_t n) {
    std::vector<WordId> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<WordId>(i);
    return ids;
}

inline MatrixXd factor_precision(const SmoothFactorParams& p, std::size_t f) {
    const auto d = p.diag_of(f);
    const auto u = p.upper_of(f);
    const MatrixXd b = oracle::upper_bidiagonal({d.begin(), d.end()}, {u.begin(), u.end()});
    return b.transpose() * b;
}

// Dense reference for a whole smooth_gradient call with full id lists.
inline SmoothGradient dense_smooth_gradient(const CountSeries& counts, const PriorPrecision& prior,
                                     const SmoothFactorParams& words, const SmoothFactorParams& contexts,
                                     const SmoothNoise& noise) {
    const std::size_t steps = prior.size(), vocab = words.vocab_size, dim = words.dimension;
    const SmoothFactorParams* params[2] = {&words, &contexts};
    const std::vector<double>* eps[2] = {&noise.words, &noise.contexts};
    // Samples through explicit B^-1.
    std::vector<Matrix> sampled[2];
    for (int m = 0; m < 2; ++m) {
        sampled[m].assign(steps, Matrix::Zero(static_cast<Eigen::Index>(vocab), static_cast<Eigen::Index>(dim)));
        for (std::size_t f = 0; f < vocab * dim; ++f) {
            const auto d = params[m]->diag_of(f);
            const auto u = params[m]->upper_of(f);
            const MatrixXd b_inv = oracle::upper_bidiagonal({d.begin(), d.end()}, {u.begin(), u.end()}).inverse();
            const VectorXd x = b_inv * Eigen::Map<const VectorXd>(eps[m]->data() + f * steps, static_cast<Eigen::Index>(steps));
            for (std::size_t t = 0; t < steps; ++t)
                sampled[m][t](static_cast<Eigen::Index>(f / dim), static_cast<Eigen::Index>(f % dim)) =
                    params[m]->mean_of(f)[t] + x(static_cast<Eigen::Index>(t));
        }
    }
    std::vector<LikelihoodGradient> pulls;
    for (std::size_t t = 0; t < steps; ++t)
        pulls.push_back(likelihood_gradient(counts.slices[t], sampled[0][t], sampled[1][t]));
    SmoothGradient out;
    out.words = SmoothFactorParams::zeros(vocab, dim, steps);
    out.contexts = SmoothFactorParams::zeros(vocab, dim, steps);
    SmoothFactorParams* grads[2] = {&out.words, &out.contexts};
    for (int m = 0; m < 2; ++m)
        for (std::size_t f = 0; f < vocab * dim; ++f) {
            const auto i = static_cast<Eigen::Index>(f / dim), k = static_cast<Eigen::Index>(f % dim);
            const auto mu = params[m]->mean_of(f);
            const auto d = params[m]->diag_of(f);
            const auto u = params[m]->upper_of(f);
            const std::vector<double> e(eps[m]->begin() + static_cast<std::ptrdiff_t>(f * steps),
                                        eps[m]->begin() + static_cast<std::ptrdiff_t>((f + 1) * steps));
            const auto dense = oracle::dense_factor_gradient(
                {mu.begin(), mu.end()}, {d.begin(), d.end()}, {u.begin(), u.end()}, e, prior,
                [&](const VectorXd&) {
                    VectorXd g(static_cast<Eigen::Index>(steps));
                    for (std::size_t t = 0; t < steps; ++t)
                        g(static_cast<Eigen::Index>(t)) = (m == 0 ? pulls[t].words : pulls[t].contexts)(i, k);
                    return g;
                });
            for (std::size_t t = 0; t < steps; ++t) {
                grads[m]->mean_of(f)[t] = dense.grad_mean(static_cast<Eigen::Index>(t));
                grads[m]->diag_of(f)[t] = dense.grad_diag(static_cast<Eigen::Index>(t));
                if (t + 1 < steps) grads[m]->upper_of(f)[t] = dense.grad_upper(static_cast<Eigen::Index>(t));
            }
        }
    return out;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

}  // namespace fixture
