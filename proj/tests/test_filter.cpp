#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "driftvec/baselines.hpp"
#include "driftvec/filter.hpp"
#include "oracles.hpp"

using namespace driftvec;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

GaussianFactors factors(Eigen::Index rows, Eigen::Index cols, double mean, double variance) {
    return {Matrix::Constant(rows, cols, mean), Matrix::Constant(rows, cols, variance)};
}

CountSlice random_slice(std::size_t vocab, Rng& rng, double eta = 1.0) {
    std::vector<Cooccurrence> entries;
    for (WordId i = 0; i < vocab; ++i)
        for (WordId j = 0; j <= i; ++j) {
            const double w = 0.5 + 4.0 * rng.uniform();
            entries.push_back({i, j, w});
            if (i != j) entries.push_back({j, i, w});
        }
    return CountSlice(vocab, entries, 0.75, eta);
}

CountSeries series_of(std::vector<CountSlice> slices, std::size_t vocab) {
    CountSeries s;
    std::vector<std::string> words;
    for (std::size_t i = 0; i < vocab; ++i) words.push_back("w" + std::to_string(i));
    s.vocabulary = Vocabulary(words);
    std::vector<double> grid;
    for (std::size_t t = 0; t < slices.size(); ++t) grid.push_back(static_cast<double>(t));
    s.grid = TimeGrid(grid);
    s.slices = std::move(slices);
    return s;
}

Hyperparameters small_hyper(std::size_t vocab, std::size_t dim) {
    Hyperparameters h;
    h.vocab_size = vocab;
    h.dimension = dim;
    h.batch_size = vocab;
    h.filter_steps = 1500;
    h.diffusion = 0.05;
    return h;
}

std::vector<double> flatten(const FilterVariational& q) {
    std::vector<double> x;
    for (const Matrix* m : {&q.word_mean, &q.word_log_variance, &q.context_mean, &q.context_log_variance})
        x.insert(x.end(), m->data(), m->data() + m->size());
    return x;
}

FilterVariational unflatten(const std::vector<double>& x, Eigen::Index rows, Eigen::Index cols) {
    FilterVariational q;
    std::size_t off = 0;
    for (Matrix* m : {&q.word_mean, &q.word_log_variance, &q.context_mean, &q.context_log_variance}) {
        *m = Eigen::Map<const Matrix>(x.data() + off, rows, cols);
        off += static_cast<std::size_t>(rows * cols);
    }
    return q;
}

// Exact log p(n) for one word, one context and d = 1 by 2-d quadrature over
// the N(0, s0^2) prior.
double log_evidence_1d(const CountSlice& s, double prior_variance) {
    const double sd = std::sqrt(prior_variance);
    const double pos = s.positive(0, 0), neg = s.negative(0, 0);
    auto density = [&](double u, double v) {
        const double x = u * v;
        const double loglik = pos * log_sigmoid(x) + neg * log_sigmoid(-x);
        const double lp = -0.5 * (u * u + v * v) / prior_variance - std::log(2 * std::numbers::pi * prior_variance);
        return std::exp(loglik + lp);
    };
    const double z = oracle::integrate(
        [&](double u) { return oracle::integrate([&](double v) { return density(u, v); }, -9 * sd, 9 * sd, 900); },
        -9 * sd, 9 * sd, 900);
    return std::log(z);
}

// Exact ELBO of a factorized q for the same instance.
double exact_elbo_1d(const CountSlice& s, const FilterPosterior& q, double prior_variance) {
    const double mu = q.words.mean(0, 0), su = std::sqrt(q.words.variance(0, 0));
    const double mv = q.contexts.mean(0, 0), sv = std::sqrt(q.contexts.variance(0, 0));
    const double pos = s.positive(0, 0), neg = s.negative(0, 0);
    auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi); };
    const double expected_loglik = oracle::integrate(
        [&](double a) {
            return phi(a) * oracle::integrate(
                                [&](double b) {
                                    const double x = (mu + su * a) * (mv + sv * b);
                                    return phi(b) * (pos * log_sigmoid(x) + neg * log_sigmoid(-x));
                                },
                                -9, 9, 900);
        },
        -9, 9, 900);
    double gaussian = 0.0;
    for (auto [m, sd] : {std::pair{mu, su}, std::pair{mv, sv}})
        gaussian += -0.5 * std::log(2 * std::numbers::pi * prior_variance) -
                    0.5 * (m * m + sd * sd) / prior_variance + 0.5 * std::log(2 * std::numbers::pi * std::numbers::e * sd * sd);
    return expected_loglik + gaussian;
}

}  // namespace

TEST(Propagate, WienerLimit) {
    const auto prev = factors(2, 3, 0.7, 1.0);
    const auto out = propagate_prior(prev, 1.0, kInf);
    EXPECT_TRUE(out.variance.isApprox(Matrix::Constant(2, 3, 2.0), 1e-15));
    EXPECT_EQ(out.mean, prev.mean);
}

TEST(Propagate, DampedExample) {
    const auto prev = factors(2, 2, 0.9, 1.0);
    const auto out = propagate_prior(prev, 1.0, 1.0);
    for (Eigen::Index k = 0; k < 4; ++k) {
        EXPECT_NEAR(out.variance.data()[k], 2.0 / 3.0, 1e-15);
        EXPECT_NEAR(out.mean.data()[k], 0.3, 1e-15);
    }
}

TEST(Propagate, InitialPrior) {
    const auto p = initial_prior(4, 2, 2.5);
    EXPECT_EQ(p.words.mean, Matrix::Zero(4, 2));
    EXPECT_EQ(p.contexts.variance, Matrix::Constant(4, 2, 2.5));
    EXPECT_THROW(initial_prior(4, 2, kInf), ValidationError);
}

TEST(Propagate, RejectsNonPositiveVariance) {
    auto prev = factors(1, 2, 0.0, 1.0);
    prev.variance(0, 1) = 0.0;
    EXPECT_THROW(propagate_prior(prev, 1.0, 1.0), Error);
    EXPECT_THROW(propagate_prior(factors(1, 1, 0.0, 1.0), 0.0, 1.0), ValidationError);
}

TEST(Propagate, ShrinksAndStaysPositive) {
    Rng rng(3);
    for (int k = 0; k < 500; ++k) {
        const double var = std::exp(6 * rng.uniform() - 3), s2 = std::exp(6 * rng.uniform() - 3);
        const double s0 = std::exp(6 * rng.uniform() - 3);
        const auto out = propagate_prior(factors(1, 1, rng.normal(), var), s2, s0);
        EXPECT_GT(out.variance(0, 0), 0.0);
        EXPECT_LE(out.variance(0, 0), var + s2);
    }
}

TEST(Propagate, MatchesTwoStepGaussianChain) {
    Rng rng(5);
    for (int k = 0; k < 50; ++k) {
        const double mu = rng.normal(), var = 0.1 + rng.uniform(), s2 = 0.05 + rng.uniform();
        const double s0 = 0.2 + 2 * rng.uniform();
        // Joint of (u_prev, u_next): prior message on u_prev, random-walk link
        // and the sigma_0 potential on u_next.
        Eigen::Matrix2d p;
        p << 1 / var + 1 / s2, -1 / s2, -1 / s2, 1 / s2 + 1 / s0;
        const Eigen::Vector2d b(mu / var, 0.0);
        const Eigen::Matrix2d cov = p.inverse();
        const auto out = propagate_prior(factors(1, 1, mu, var), s2, s0);
        EXPECT_NEAR(out.variance(0, 0), cov(1, 1), 1e-10);
        EXPECT_NEAR(out.mean(0, 0), (cov * b)(1), 1e-10);
    }
}

TEST(Propagate, IteratedMatchesChainMarginal) {
    // Without likelihood, filtering the chain prior forward gives the marginal
    // of the last step of the chain truncated there.
    const std::vector<double> vars{0.3, 0.8, 0.5, 1.2};
    const double s0 = 1.7;
    GaussianFactors f = initial_prior(1, 1, s0).words;
    for (std::size_t t = 1; t <= vars.size(); ++t) {
        f = propagate_prior(f, vars[t - 1], s0);
        const auto pi = prior_precision(t + 1, std::span(vars.data(), t), s0);
        const Eigen::MatrixXd cov = oracle::dense(pi).inverse();
        EXPECT_NEAR(f.variance(0, 0), cov(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t)), 1e-10);
    }
}

TEST(FilterElboTest, ZeroEvidenceFixedPoint) {
    const auto prior = initial_prior(3, 2, 1.0);
    const auto q = FilterVariational::from(prior);
    const CountSlice empty(3, {}, 0.75, 1.0);
    Rng rng(1);
    Matrix sum = Matrix::Zero(3, 2);
    for (int s = 0; s < 10000; ++s) {
        const auto e = estimate_elbo_gradient(q, prior, empty, 1, rng);
        sum += e.gradient.word_mean + e.gradient.word_log_variance + e.gradient.context_mean +
               e.gradient.context_log_variance;
    }
    EXPECT_LT((sum / 10000.0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FilterElboTest, StrongPositiveCountPushesInnerProductUp) {
    const CountSlice s(1, {{0, 0, 50.0}}, 0.75, 0.01);
    const auto prior = initial_prior(1, 1, 1.0);
    FilterVariational q = FilterVariational::from(prior);
    q.word_mean(0, 0) = 0.5;
    q.context_mean(0, 0) = 0.5;
    Rng rng(2);
    const auto e = estimate_elbo_gradient(q, prior, s, 1000, rng);
    EXPECT_GT(e.gradient.word_mean(0, 0), 0.0);
    EXPECT_GT(e.gradient.context_mean(0, 0), 0.0);
}

TEST(FilterElboTest, GradientMatchesFiniteDifferences) {
    Rng rng(7);
    const auto slice = random_slice(2, rng);
    PropagatedPrior prior{factors(2, 2, 0.1, 0.8), factors(2, 2, -0.2, 1.3)};
    FilterVariational q = FilterVariational::from(prior);
    for (Matrix* m : {&q.word_mean, &q.context_mean, &q.word_log_variance, &q.context_log_variance})
        for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] += 0.3 * rng.normal();
    std::vector<FilterNoise> noise{draw_filter_noise(2, 2, rng)};
    const auto e = estimate_elbo_gradient(q, prior, slice, noise);
    const auto numeric = oracle::numeric_gradient(
        [&](const std::vector<double>& x) {
            return estimate_elbo_gradient(unflatten(x, 2, 2), prior, slice, noise).value;
        },
        flatten(q), 1e-5);
    const auto analytic = flatten(e.gradient);
    for (std::size_t group = 0; group < 4; ++group) {
        const std::vector<double> a(analytic.begin() + 4 * group, analytic.begin() + 4 * group + 4);
        const std::vector<double> n(numeric.begin() + 4 * group, numeric.begin() + 4 * group + 4);
        EXPECT_LT(oracle::relative_error(a, n), 1e-4) << "group " << group;
    }
}

TEST(FilterElboTest, EquivariantUnderRelabeling) {
    Rng rng(11);
    const std::size_t vocab = 4;
    const auto slice = random_slice(vocab, rng);
    const std::vector<WordId> perm{2, 0, 3, 1};  // new id of old word i
    std::vector<Cooccurrence> moved;
    for (const auto& c : slice.entries()) moved.push_back({perm[c.word], perm[c.context], c.weight});
    const CountSlice permuted(vocab, moved, 0.75, 1.0);
    auto permute = [&](const Matrix& m) {
        Matrix out(m.rows(), m.cols());
        for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(perm[static_cast<std::size_t>(i)]) = m.row(i);
        return out;
    };
    PropagatedPrior prior{factors(4, 2, 0.0, 1.0), factors(4, 2, 0.0, 1.0)};
    FilterVariational q = FilterVariational::from(prior);
    for (Matrix* m : {&q.word_mean, &q.context_mean}) *m = Matrix::Random(4, 2);
    const FilterNoise noise = draw_filter_noise(4, 2, rng);
    const FilterNoise noise_p{permute(noise.words), permute(noise.contexts)};
    const FilterVariational q_p{permute(q.word_mean), permute(q.word_log_variance),
                                permute(q.context_mean), permute(q.context_log_variance)};
    const auto a = estimate_elbo_gradient(q, prior, slice, std::span(&noise, 1));
    const auto b = estimate_elbo_gradient(q_p, prior, permuted, std::span(&noise_p, 1));
    EXPECT_NEAR(a.value, b.value, 1e-10);
    EXPECT_LT((permute(a.gradient.word_mean) - b.gradient.word_mean).norm(), 1e-10);
    EXPECT_LT((permute(a.gradient.context_log_variance) - b.gradient.context_log_variance).norm(), 1e-10);
}

TEST(FilterStepTest, ZeroCountsReturnPropagatedPrior) {
    const std::size_t vocab = 3, dim = 2;
    CountSeries counts = series_of({CountSlice(vocab, {}, 0.75, 1.0), CountSlice(vocab, {}, 0.75, 1.0),
                                    CountSlice(vocab, {}, 0.75, 1.0)},
                                   vocab);
    const auto h = small_hyper(vocab, dim);
    const auto r = run_filter(counts, h, filter_options(h), 4);
    for (std::size_t t = 0; t < 3; ++t) {
        const auto prior = t == 0 ? initial_prior(vocab, dim, h.prior_variance)
                                  : propagate_prior(r.posteriors[t - 1], h.diffusion, h.prior_variance);
        EXPECT_LT((r.posteriors[t].words.mean - prior.words.mean).cwiseAbs().maxCoeff(), 1e-2);
        EXPECT_LT((r.posteriors[t].contexts.variance - prior.contexts.variance).cwiseAbs().maxCoeff(), 1e-2);
    }
}

TEST(FilterStepTest, LowerBoundOnLogEvidence) {
    const CountSlice s(1, {{0, 0, 3.0}}, 0.75, 0.2);
    const auto prior = initial_prior(1, 1, 1.0);
    FilterVariational start = FilterVariational::from(prior);
    start.word_mean(0, 0) = 0.1;
    start.context_mean(0, 0) = 0.1;
    FilterOptions o;
    o.steps = 5000;
    FilterStepStats stats;
    const auto post = filter_step(prior, start, s, o, 9, &stats);
    const double evidence = log_evidence_1d(s, 1.0);
    const double elbo = exact_elbo_1d(s, post, 1.0);
    EXPECT_LE(elbo, evidence + 1e-3);
    EXPECT_LE(stats.final_elbo, evidence + 1e-3);
    // The bound is not vacuous: the fit beats the prior itself.
    EXPECT_GT(elbo, exact_elbo_1d(s, FilterVariational::from(prior).posterior(), 1.0));
}

TEST(FilterStepTest, VariancesStayPositive) {
    Rng rng(12);
    const auto slice = random_slice(3, rng);
    const auto prior = initial_prior(3, 2, 1.0);
    FilterOptions o;
    o.steps = 300;
    o.early_stop_window = 0;
    const auto post = filter_step(prior, FilterVariational::from(prior), slice, o, 1);
    EXPECT_TRUE((post.words.variance.array() > 0.0).all());
    EXPECT_TRUE((post.contexts.variance.array() > 0.0).all());
}

TEST(RunFilterTest, RepeatedEvidenceAccumulatesInformation) {
    const CountSlice s(1, {{0, 0, 20.0}}, 1.0, 0.2);
    CountSeries counts = series_of(std::vector<CountSlice>(6, s), 1);
    auto h = small_hyper(1, 1);
    h.diffusion = 0.01;
    h.filter_steps = 3000;
    const auto r = run_filter(counts, h, filter_options(h), 2);
    std::vector<double> total;
    for (const auto& p : r.posteriors) total.push_back(p.words.variance(0, 0) + p.contexts.variance(0, 0));
    for (std::size_t t = 1; t < total.size(); ++t) EXPECT_LE(total[t], total[t - 1] * 1.05) << "t=" << t;
    EXPECT_LT(total.back(), total.front());
}

TEST(RunFilterTest, DeterministicAndResumable) {
    Rng rng(13);
    CountSeries counts = series_of({random_slice(3, rng), random_slice(3, rng), random_slice(3, rng),
                                    random_slice(3, rng)},
                                   3);
    const auto h = small_hyper(3, 2);
    const auto o = filter_options(h);
    const auto a = run_filter(counts, h, o, 21);
    const auto b = run_filter(counts, h, o, 21);
    std::vector<FilterPosterior> prefix(a.posteriors.begin(), a.posteriors.begin() + 2);
    const auto resumed = run_filter(counts, h, o, 21, prefix);
    for (std::size_t t = 0; t < 4; ++t) {
        EXPECT_EQ(a.posteriors[t].words.mean, b.posteriors[t].words.mean);
        EXPECT_EQ(a.posteriors[t].contexts.variance, b.posteriors[t].contexts.variance);
        EXPECT_EQ(a.posteriors[t].words.mean, resumed.posteriors[t].words.mean);
        EXPECT_EQ(a.posteriors[t].contexts.variance, resumed.posteriors[t].contexts.variance);
    }
    const auto other = run_filter(counts, h, o, 22);
    EXPECT_NE(a.posteriors[3].words.mean, other.posteriors[3].words.mean);
    EXPECT_EQ(a.means.size(), 4u);
    EXPECT_EQ(a.means[2].words, a.posteriors[2].words.mean);
}

TEST(RunFilterTest, SingleStepIsStaticBayesianFit) {
    Rng rng(14);
    const std::size_t vocab = 5;
    // Plenty of evidence, so the posterior mean sits near the mode.
    std::vector<Cooccurrence> strong;
    for (const auto& c : random_slice(vocab, rng, 0.5).entries()) strong.push_back({c.word, c.context, 20.0 * c.weight});
    CountSeries counts = series_of({CountSlice(vocab, strong, 0.75, 0.5)}, vocab);
    auto h = small_hyper(vocab, 2);
    h.filter_steps = 4000;
    const auto o = filter_options(h);
    const auto r = run_filter(counts, h, o, 3);
    // Same computation spelled out: one step from the N(0, s0^2) prior.
    const auto prior = initial_prior(vocab, 2, h.prior_variance);
    FilterVariational start = FilterVariational::from(prior);
    Rng init(derive_seed(3, "filter/init"));
    for (Matrix* m : {&start.word_mean, &start.context_mean})
        for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = o.init_jitter * init.normal();
    const auto direct = filter_step(prior, start, counts.slices[0], o, derive_seed(3, "filter/step", {0}));
    EXPECT_EQ(r.posteriors[0].words.mean, direct.words.mean);
    // Its inner products agree with the MAP fit of the static model.
    StaticOptions so;
    so.steps = 4000;
    const auto init_fit = random_init(vocab, 2, 0.1, 3, 0);
    const auto fit = train_static(counts.slices[0], init_fit.words, init_fit.contexts, so);
    const Matrix gram_filter = r.means[0].words * r.means[0].contexts.transpose();
    const Matrix gram_static = fit.words * fit.contexts.transpose();
    const double corr = (gram_filter.array() * gram_static.array()).sum() /
                        (gram_filter.norm() * gram_static.norm());
    EXPECT_GT(corr, 0.9);
}

TEST(RunFilterTest, RejectsWienerPrior) {
    Rng rng(1);
    CountSeries counts = series_of({random_slice(2, rng)}, 2);
    auto h = small_hyper(2, 1);
    h.prior_variance = kInf;
    EXPECT_THROW(run_filter(counts, h, filter_options(h), 1), ValidationError);
}
