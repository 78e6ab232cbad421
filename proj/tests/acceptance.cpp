// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "driftvec/baselines.hpp"
#include "driftvec/commands.hpp"
#include "driftvec/corpus.hpp"
#include "driftvec/eval.hpp"
#include "driftvec/filter.hpp"
#include "driftvec/smooth.hpp"
#include "driftvec/synthetic.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace driftvec;
using namespace fixture;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(bool pass, int id, const std::string& name, const std::string& details) {
    std::printf("%s %d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), details.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* format, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---- Synthetic drift benchmark -------------------------------------------

constexpr std::size_t kSeeds = 5;
constexpr std::size_t kRef = 5;
const std::vector<std::size_t> kDeltas{1, 2, 3, 4, 5};

struct BenchmarkRun {
    double smooth = 0, filter = 0, sgi = 0, sgp = 0;
    std::vector<double> filter_medians, sgi_medians;
    CountSeries counts;
};

Hyperparameters benchmark_hyper() {
    Hyperparameters h;
    h.vocab_size = 100;
    h.dimension = 10;
    h.batch_size = 50;
    h.diffusion = 0.01;
    h.filter_steps = 500;
    h.smooth_pretrain_steps = 1000;
    h.smooth_steps = 1000;
    return h;
}

BenchmarkRun run_benchmark(std::uint64_t seed) {
    SyntheticOptions so;
    so.vocab_size = 100;
    so.steps = 20;
    so.dimension = 10;
    so.docs_per_step = 200;
    so.drift_rate = 0.05;
    so.seed = seed;
    const SyntheticCorpus corpus = generate_synthetic_corpus(so);
    const BinnedCorpus binned = bin_documents(corpus.documents, BinningRule::ByYear);
    const auto [train, heldout] = split_heldout(binned, 0.1, seed);
    const Hyperparameters h = benchmark_hyper();
    const Vocabulary vocab = build_vocabulary(train.steps, h.vocab_size);
    BenchmarkRun run;
    run.counts = build_count_series(train, vocab, h.window, h.gamma, h.eta);
    const CountSeries held = build_count_series(heldout, vocab, h.window, h.gamma, h.eta);

    const auto filter = run_filter(run.counts, h, filter_options(h), seed);
    const auto smooth = smooth_counts(run.counts, h, seed);
    const auto sgi = run_sgi(run.counts, static_options(h), h.dimension, 0.1, seed);
    const auto sgp = run_sgp(run.counts, static_options(h), h.dimension, 0.1, seed);
    run.filter = mean_predictive(heldout_protocol(Method::Filter, filter.means, held));
    run.smooth = mean_predictive(heldout_protocol(Method::Smooth, smooth.means, held));
    run.sgi = mean_predictive(heldout_protocol(Method::Sgi, sgi.embeddings, held));
    run.sgp = mean_predictive(heldout_protocol(Method::Sgp, sgp.embeddings, held));
    for (const auto& d : displacement_histogram(filter.means, kRef, kDeltas, 20).per_delta)
        run.filter_medians.push_back(d.median);
    for (const auto& d : displacement_histogram(sgi.embeddings, kRef, kDeltas, 20).per_delta)
        run.sgi_medians.push_back(d.median);
    return run;
}

void benchmark_criteria(std::vector<BenchmarkRun>& runs) {
    const auto start = std::chrono::steady_clock::now();
    std::size_t ordered = 0;
    std::ostringstream details;
    for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
        runs.push_back(run_benchmark(seed));
        const auto& r = runs.back();
        const bool ok = r.smooth >= r.filter && r.filter > std::max(r.sgi, r.sgp);
        ordered += ok;
        std::printf("  seed %llu: S %.5f F %.5f SGI %.5f SGP %.5f %s\n",
                    static_cast<unsigned long long>(seed), r.smooth, r.filter, r.sgi, r.sgp,
                    ok ? "ordered" : "not ordered");
    }
    const double elapsed = seconds_since(start);
    details << ordered << "/" << kSeeds << " seeds with S >= F > max(SGI, SGP), runtime "
            << fmt("%.1f", elapsed) << " s";
    report(ordered >= 4 && elapsed < 600.0, 1, "method-ordering", details.str());

    std::size_t directed = 0;
    std::ostringstream drift;
    for (std::size_t k = 0; k < runs.size(); ++k) {
        const auto& r = runs[k];
        std::vector<double> deltas(kDeltas.begin(), kDeltas.end());
        const double rho = spearman_correlation(deltas, r.filter_medians);
        const double ratio = r.sgi_medians[4] / r.sgi_medians[1];
        const bool ok = rho > 0.9 && ratio < 1.3;
        directed += ok;
        drift << (k ? "; " : "") << "seed " << k + 1 << " rho " << fmt("%.3f", rho) << " sgi ratio "
              << fmt("%.3f", ratio);
    }
    report(directed == runs.size(), 2, "directed-drift", drift.str());
}

// ---- Gradient checks -----------------------------------------------------

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

void gradient_criterion() {
    Rng rng(31);
    const std::size_t steps = 3, vocab = 2, dim = 2;
    const auto counts = random_series(vocab, steps, rng);
    double worst = 0.0;

    // Filter: every step of a T = 3 run, at a perturbed point of each step's prior.
    Hyperparameters h;
    h.vocab_size = vocab;
    h.dimension = dim;
    h.batch_size = vocab;
    h.filter_steps = 200;
    h.diffusion = 0.1;
    const auto filtered = run_filter(counts, h, filter_options(h), 3);
    for (std::size_t t = 0; t < steps; ++t) {
        const PropagatedPrior prior =
            t == 0 ? initial_prior(vocab, dim, h.prior_variance)
                   : propagate_prior(filtered.posteriors[t - 1], h.diffusion, h.prior_variance);
        FilterVariational q = FilterVariational::from(prior);
        for (Matrix* m : {&q.word_mean, &q.context_mean, &q.word_log_variance, &q.context_log_variance})
            for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] += 0.3 * rng.normal();
        const std::vector<FilterNoise> noise{draw_filter_noise(vocab, dim, rng)};
        const auto analytic = flatten(estimate_elbo_gradient(q, prior, counts.slices[t], noise).gradient);
        const auto numeric = oracle::numeric_gradient(
            [&](const std::vector<double>& x) {
                return estimate_elbo_gradient(unflatten(x, 2, 2), prior, counts.slices[t], noise).value;
            },
            flatten(q), 1e-5);
        for (std::size_t group = 0; group < 4; ++group) {
            const std::vector<double> a(analytic.begin() + 4 * group, analytic.begin() + 4 * group + 4);
            const std::vector<double> n(numeric.begin() + 4 * group, numeric.begin() + 4 * group + 4);
            worst = std::max(worst, oracle::relative_error(a, n));
        }
    }
    const double filter_worst = worst;

    // Smoother: mu, nu and omega of both embedding kinds.
    worst = 0.0;
    const auto prior = random_prior(steps, rng);
    const auto words = random_params(vocab, dim, steps, rng);
    const auto contexts = random_params(vocab, dim, steps, rng);
    const auto noise = random_noise(words, rng);
    const SkipGramLikelihood lik(counts);
    const auto ids = all_ids(vocab);
    const auto g = smooth_gradient(lik, prior, words, contexts, noise, ids, ids, 1.0);
    using Field = std::vector<double> SmoothFactorParams::*;
    for (int m = 0; m < 2; ++m)
        for (Field field : {&SmoothFactorParams::mean, &SmoothFactorParams::diag, &SmoothFactorParams::upper}) {
            auto value = [&](const std::vector<double>& x) {
                SmoothFactorParams w = words, c = contexts;
                (m == 0 ? w : c).*field = x;
                return smooth_gradient(lik, prior, w, c, noise, ids, ids, 1.0).value;
            };
            const auto numeric = oracle::numeric_gradient(value, (m == 0 ? words : contexts).*field, 1e-5);
            worst = std::max(worst, oracle::relative_error((m == 0 ? g.words : g.contexts).*field, numeric));
        }
    report(filter_worst < 1e-4 && worst < 1e-4, 3, "gradient-finite-differences",
           "worst relative error filter " + fmt("%.2e", filter_worst) + ", smoother " + fmt("%.2e", worst));
}

void dense_equivalence_criterion() {
    Rng rng(32);
    double worst = 0.0;
    bool linear = true;
    for (std::size_t steps = 1; steps <= 8; ++steps) {
        const auto counts = random_series(3, steps, rng);
        const auto prior = random_prior(steps, rng);
        const auto words = random_params(3, 2, steps, rng);
        const auto contexts = random_params(3, 2, steps, rng);
        const auto noise = random_noise(words, rng);
        const SkipGramLikelihood lik(counts);
        const auto ids = all_ids(3);
        reset_workspace_stats();
        const auto fast = smooth_gradient(lik, prior, words, contexts, noise, ids, ids, 1.0);
        linear = linear && workspace_stats().max_length == steps;
        const auto dense = dense_smooth_gradient(counts, prior, words, contexts, noise);
        for (auto [a, b] : {std::pair{&fast.words, &dense.words}, std::pair{&fast.contexts, &dense.contexts}}) {
            worst = std::max(worst, max_abs_diff(a->mean, b->mean));
            worst = std::max(worst, max_abs_diff(a->diag, b->diag));
            worst = std::max(worst, max_abs_diff(a->upper, b->upper));
        }
    }
    report(worst < 1e-9 && linear, 4, "linear-kernel-equivalence",
           "max |fast - dense| " + fmt("%.2e", worst) + " for T <= 8, workspace buffers of length T: " +
               (linear ? "yes" : "no"));
}

// ---- Identities ----------------------------------------------------------

void identity_criterion(const CountSeries& benchmark_counts) {
    Rng rng(33);
    double entropy_err = 0.0;
    for (std::size_t steps = 1; steps <= 6; ++steps) {
        std::vector<double> d(steps), w(steps - 1);
        for (double& v : d) v = 0.3 + 2 * rng.uniform();
        for (double& v : w) v = rng.normal();
        const MatrixXd b = oracle::upper_bidiagonal(d, w);
        const double half_log_det_cov = 0.5 * std::log((b.transpose() * b).inverse().determinant());
        entropy_err = std::max(entropy_err, std::abs(entropy_term(d) - half_log_det_cov));
    }

    double mass_err = 0.0;
    for (const auto& slice : benchmark_counts.slices) {
        if (slice.empty()) continue;
        double negative = 0.0;
        const auto n = static_cast<WordId>(slice.vocab_size());
        for (WordId i = 0; i < n; ++i)
            for (WordId j = 0; j < n; ++j) negative += slice.negative(i, j);
        const double expected = slice.eta() * slice.total_positive();
        mass_err = std::max(mass_err, std::abs(negative - expected) / expected);
    }

    double init_err = 0.0;
    for (std::size_t steps = 1; steps <= 6; ++steps) {
        const auto prior = random_prior(steps, rng);
        const auto p = prior_factors(2, 2, NaturalBasis(prior));
        for (std::size_t f = 0; f < p.factor_count(); ++f)
            init_err = std::max(init_err, (factor_precision(p, f) - oracle::dense(prior)).cwiseAbs().maxCoeff());
    }

    double procrustes_err = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        Matrix reference(20, 4);
        for (Eigen::Index k = 0; k < reference.size(); ++k) reference.data()[k] = rng.normal();
        Matrix raw(4, 4);
        for (Eigen::Index k = 0; k < raw.size(); ++k) raw.data()[k] = rng.normal();
        const Matrix q = Eigen::HouseholderQR<Eigen::MatrixXd>(raw).householderQ();
        const Matrix current = reference * q;
        procrustes_err = std::max(procrustes_err, (current * procrustes_align(reference, current) - reference).norm());
    }
    const bool pass = entropy_err < 1e-10 && mass_err < 1e-12 && init_err < 1e-10 && procrustes_err < 1e-8;
    report(pass, 5, "exact-identities",
           "entropy " + fmt("%.1e", entropy_err) + ", negative mass " + fmt("%.1e", mass_err) +
               ", initial precision " + fmt("%.1e", init_err) + ", procrustes " + fmt("%.1e", procrustes_err));
}

void kalman_criterion() {
    Rng rng(15);
    const std::size_t vocab = 2, dim = 2, steps = 5;
    std::vector<Matrix> a, b;
    for (std::size_t t = 0; t < steps; ++t) {
        a.push_back(Matrix::Zero(2, 2));
        b.push_back(Matrix::Zero(2, 2));
        for (Eigen::Index k = 0; k < 4; ++k) {
            a.back().data()[k] = rng.normal();
            b.back().data()[k] = rng.normal();
        }
    }
    const oracle::QuadraticLikelihood lik(a, b, 0.5);
    const auto prior = prior_precision(steps, std::vector<double>(steps - 1, 0.3), 1.0);
    SmoothOptions o;
    o.batch_size = vocab;
    // A long small-step final phase averages out the single-sample noise.
    o.pretrain_steps = 3000;
    o.steps = 200000;
    o.adam.learning_rate = 3e-5;
    const NaturalBasis basis(prior);
    SmoothState state = initial_smooth_state(vocab, dim, basis, o);
    run_smoother(lik, prior, o, 5, state);
    const auto r = smooth_result(state, basis);
    double mean_err = 0.0, var_err = 0.0;
    for (int m = 0; m < 2; ++m) {
        const auto& fit = m == 0 ? r.words : r.contexts;
        const auto& targets = m == 0 ? a : b;
        for (std::size_t f = 0; f < vocab * dim; ++f) {
            VectorXd y(static_cast<Eigen::Index>(steps));
            for (std::size_t t = 0; t < steps; ++t) y(static_cast<Eigen::Index>(t)) = targets[t].data()[f];
            const auto [mean, var] = lik.posterior(prior, y);
            const auto fit_var = fit.marginal_variances(f);
            for (std::size_t t = 0; t < steps; ++t) {
                mean_err = std::max(mean_err, std::abs(fit.mean_of(f)[t] - mean(static_cast<Eigen::Index>(t))));
                var_err = std::max(var_err, std::abs(fit_var[t] - var(static_cast<Eigen::Index>(t))));
            }
        }
    }
    report(mean_err < 1e-2 && var_err < 5e-2, 6, "kalman-oracle",
           "max mean error " + fmt("%.2e", mean_err) + ", max variance error " + fmt("%.2e", var_err));
}

void filter_fixed_point_criterion() {
    const std::size_t vocab = 3, dim = 2;
    CountSeries counts;
    counts.vocabulary = Vocabulary({"a", "b", "c"});
    counts.grid = TimeGrid({0.0, 1.0, 2.0});
    counts.slices.assign(3, CountSlice(vocab, {}, 0.75, 1.0));
    Hyperparameters h;
    h.vocab_size = vocab;
    h.dimension = dim;
    h.batch_size = vocab;
    h.filter_steps = 1500;
    h.diffusion = 0.05;
    const auto r = run_filter(counts, h, filter_options(h), 4);
    double deviation = 0.0;
    for (std::size_t t = 0; t < 3; ++t) {
        const auto prior = t == 0 ? initial_prior(vocab, dim, h.prior_variance)
                                  : propagate_prior(r.posteriors[t - 1], h.diffusion, h.prior_variance);
        for (auto [post, pri] : {std::pair{&r.posteriors[t].words, &prior.words},
                                 std::pair{&r.posteriors[t].contexts, &prior.contexts}}) {
            deviation = std::max(deviation, (post->mean - pri->mean).cwiseAbs().maxCoeff());
            deviation = std::max(deviation, (post->variance - pri->variance).cwiseAbs().maxCoeff());
        }
    }

    Rng rng(34);
    double closed_form_err = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const double mu = rng.normal(), var = std::exp(4 * rng.uniform() - 2);
        const double s2 = std::exp(4 * rng.uniform() - 2), s0 = std::exp(4 * rng.uniform() - 2);
        const auto out = propagate_prior(GaussianFactors{Matrix::Constant(1, 1, mu), Matrix::Constant(1, 1, var)},
                                         s2, s0);
        const double spread = var + s2;
        const double expected_var = 1.0 / (1.0 / spread + 1.0 / s0);
        const double expected_mean = expected_var / spread * mu;
        closed_form_err = std::max(closed_form_err, std::abs(out.variance(0, 0) - expected_var) / expected_var);
        closed_form_err = std::max(closed_form_err, std::abs(out.mean(0, 0) - expected_mean));
    }
    report(deviation < 1e-2 && closed_form_err < 1e-12, 7, "filter-fixed-point",
           "max deviation from propagated prior " + fmt("%.2e", deviation) + ", closed-form error " +
               fmt("%.1e", closed_form_err));
}

// ---- Reproducibility -----------------------------------------------------

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "driftvec");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) std::printf("  command %s failed: %s", args[1].c_str(), err.str().c_str());
    return code;
}

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void reproducibility_criterion() {
    const fs::path root = fs::temp_directory_path() / "driftvec-acceptance";
    fs::remove_all(root);
    const fs::path config = root / "run.cfg";
    fs::create_directories(root);
    std::ofstream(config) << "synth_vocab = 30\nsynth_steps = 5\nsynth_dimension = 4\nsynth_docs = 60\n"
                          << "vocab_size = 30\ndimension = 4\nbatch_size = 15\ndiffusion = 0.01\n"
                          << "filter_steps = 150\nsmooth_pretrain_steps = 100\nsmooth_steps = 50\n";
    bool commands_ok = true;
    for (const char* run : {"a", "b"}) {
        const std::string dir = (root / run).string();
        const std::vector<std::string> base{"--config", config.string(), "--out", dir};
        auto with = [&](std::vector<std::string> head, std::vector<std::string> tail = {}) {
            head.insert(head.end(), base.begin(), base.end());
            head.insert(head.end(), tail.begin(), tail.end());
            return head;
        };
        commands_ok = commands_ok && cli(with({"synth"})) == 0;
        commands_ok = commands_ok && cli(with({"preprocess"}, {"--set", "corpus=" + dir + "/corpus.tsv"})) == 0;
        for (const char* m : {"filter", "smooth", "sgi", "sgp"})
            commands_ok = commands_ok && cli(with({"train"}, {"--method", m})) == 0;
        commands_ok = commands_ok && cli(with({"evaluate"})) == 0;
    }
    std::size_t compared = 0, identical = 0;
    for (const auto& entry : fs::directory_iterator(root / "a")) {
        const auto ext = entry.path().extension();
        if (ext != ".ckpt" && ext != ".csv") continue;
        ++compared;
        identical += read_bytes(entry.path()) == read_bytes(root / "b" / entry.path().filename());
    }
    fs::remove_all(root);
    report(commands_ok && compared >= 9 && identical == compared, 8, "reproducibility",
           std::to_string(identical) + "/" + std::to_string(compared) +
               " checkpoint and CSV files bit-identical across reruns");
}

}  // namespace

int main() {
    std::vector<BenchmarkRun> runs;
    benchmark_criteria(runs);
    gradient_criterion();
    dense_equivalence_criterion();
    identity_criterion(runs.front().counts);
    kalman_criterion();
    filter_fixed_point_criterion();
    reproducibility_criterion();
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
