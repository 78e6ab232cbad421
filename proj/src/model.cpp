#include "driftvec/model.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "driftvec/format.hpp"

namespace driftvec {

void Hyperparameters::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || std::isnan(v))
            throw ValidationError(std::string(name) + " must be positive");
    };
    auto finite_positive = [&](double v, const char* name) {
        positive(v, name);
        if (!std::isfinite(v)) throw ValidationError(std::string(name) + " must be finite");
    };
    auto count = [](std::size_t v, const char* name) {
        if (v == 0) throw ValidationError(std::string(name) + " must be at least 1");
    };
    auto unit = [](double v, const char* name) {
        if (!(v >= 0.0 && v < 1.0)) throw ValidationError(std::string(name) + " must lie in [0, 1)");
    };
    finite_positive(diffusion, "diffusion");
    positive(prior_variance, "prior_variance");
    finite_positive(eta, "eta");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("gamma must be >= 0");
    count(window, "window");
    count(dimension, "dimension");
    count(vocab_size, "vocab_size");
    count(batch_size, "batch_size");
    if (batch_size > vocab_size)
        throw ValidationError("batch_size (L') must not exceed vocab_size (L)");
    finite_positive(filter_learning_rate, "filter_learning_rate");
    finite_positive(smooth_pretrain_learning_rate, "smooth_pretrain_learning_rate");
    finite_positive(smooth_learning_rate, "smooth_learning_rate");
    unit(beta1, "beta1");
    unit(filter_beta2, "filter_beta2");
    unit(smooth_beta2, "smooth_beta2");
    finite_positive(adam_epsilon, "adam_epsilon");
}

namespace {

// Field table shared by hyperparameter_entries and assign_hyperparameter.
template <typename Visitor>
void visit_fields(Hyperparameters& h, Visitor&& visit) {
    visit("diffusion", h.diffusion);
    visit("prior_variance", h.prior_variance);
    visit("eta", h.eta);
    visit("gamma", h.gamma);
    visit("window", h.window);
    visit("dimension", h.dimension);
    visit("vocab_size", h.vocab_size);
    visit("batch_size", h.batch_size);
    visit("filter_learning_rate", h.filter_learning_rate);
    visit("filter_beta2", h.filter_beta2);
    visit("filter_steps", h.filter_steps);
    visit("smooth_pretrain_learning_rate", h.smooth_pretrain_learning_rate);
    visit("smooth_pretrain_steps", h.smooth_pretrain_steps);
    visit("smooth_learning_rate", h.smooth_learning_rate);
    visit("smooth_steps", h.smooth_steps);
    visit("smooth_beta2", h.smooth_beta2);
    visit("beta1", h.beta1);
    visit("adam_epsilon", h.adam_epsilon);
}

std::string field_text(double v) { return format_double(v); }
std::string field_text(std::size_t v) { return std::to_string(v); }
void parse_field(std::string_view text, double& out) { out = parse_double(text); }
void parse_field(std::string_view text, std::size_t& out) {
    out = static_cast<std::size_t>(parse_unsigned(text));
}

}  // namespace

std::vector<std::pair<std::string, std::string>> hyperparameter_entries(const Hyperparameters& hyper) {
    std::vector<std::pair<std::string, std::string>> out;
    Hyperparameters copy = hyper;
    visit_fields(copy, [&](const char* name, auto& field) { out.emplace_back(name, field_text(field)); });
    return out;
}

bool assign_hyperparameter(Hyperparameters& hyper, std::string_view name, std::string_view value) {
    bool found = false;
    visit_fields(hyper, [&](const char* field_name, auto& field) {
        if (name != field_name) return;
        found = true;
        try {
            parse_field(value, field);
        } catch (const ValidationError&) {
            throw ValidationError("invalid value '" + std::string(value) + "' for " + field_name);
        }
    });
    return found;
}

void validate_trajectory(const EmbeddingTrajectory& trajectory) {
    if (trajectory.empty()) throw ValidationError("empty embedding trajectory");
    const auto rows = trajectory.front().words.rows();
    const auto cols = trajectory.front().words.cols();
    for (const auto& s : trajectory) {
        if (s.words.rows() != rows || s.words.cols() != cols || s.contexts.rows() != rows ||
            s.contexts.cols() != cols)
            throw ValidationError("embedding trajectory shapes disagree across steps");
        if (!s.words.allFinite() || !s.contexts.allFinite())
            throw Error("embedding trajectory contains non-finite entries");
    }
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sigmoid(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

TransitionParams transition_params(double step_variance, double prior_variance) {
    if (!(step_variance > 0.0) || !std::isfinite(step_variance))
        throw ValidationError("transition step variance must be positive and finite");
    if (!(prior_variance > 0.0)) throw ValidationError("prior variance must be positive");
    // 1 / inf == 0 reproduces the Wiener limit.
    return {1.0 / (1.0 + step_variance / prior_variance),
            1.0 / (1.0 / step_variance + 1.0 / prior_variance)};
}

double step_variance(double diffusion, double earlier, double later) {
    if (!(later > earlier)) throw ValidationError("timestamps must be strictly increasing");
    if (!(diffusion > 0.0)) throw ValidationError("diffusion constant must be positive");
    return diffusion * (later - earlier);
}

std::vector<double> step_variances(const TimeGrid& grid, double diffusion) {
    std::vector<double> out;
    for (std::size_t t = 0; t + 1 < grid.size(); ++t)
        out.push_back(step_variance(diffusion, grid[t], grid[t + 1]));
    return out;
}

void PriorPrecision::multiply(std::span<const double> in, std::span<double> out) const {
    const std::size_t n = size();
    for (std::size_t t = 0; t < n; ++t) {
        double v = diagonal[t] * in[t];
        if (t > 0) v += offdiagonal[t - 1] * in[t - 1];
        if (t + 1 < n) v += offdiagonal[t] * in[t + 1];
        out[t] = v;
    }
}

double PriorPrecision::quadratic_form(std::span<const double> in) const {
    double q = 0.0;
    for (std::size_t t = 0; t < size(); ++t) {
        q += diagonal[t] * in[t] * in[t];
        if (t + 1 < size()) q += 2.0 * offdiagonal[t] * in[t] * in[t + 1];
    }
    return q;
}

double PriorPrecision::log_determinant() const {
    double pivot = 0.0, logdet = 0.0;
    for (std::size_t t = 0; t < size(); ++t) {
        pivot = t == 0 ? diagonal[0] : diagonal[t] - offdiagonal[t - 1] * offdiagonal[t - 1] / pivot;
        if (!(pivot > 0.0)) throw Error("prior precision is not positive definite");
        logdet += std::log(pivot);
    }
    return logdet;
}

PriorPrecision prior_precision(std::size_t steps, std::span<const double> step_vars,
                               double prior_variance) {
    if (steps == 0) throw ValidationError("prior precision needs at least one time step");
    if (step_vars.size() + 1 != steps)
        throw ValidationError("prior precision needs T-1 step variances");
    if (!(prior_variance > 0.0)) throw ValidationError("prior variance must be positive");
    PriorPrecision pi;
    pi.diagonal.assign(steps, 1.0 / prior_variance);
    pi.offdiagonal.assign(steps - 1, 0.0);
    for (std::size_t t = 0; t + 1 < steps; ++t) {
        if (!(step_vars[t] > 0.0)) throw ValidationError("step variances must be positive");
        const double link = 1.0 / step_vars[t];
        pi.diagonal[t] += link;
        pi.diagonal[t + 1] += link;
        pi.offdiagonal[t] = -link;
    }
    return pi;
}

namespace {

void check_shapes(const CountSlice& slice, const Matrix& words, const Matrix& contexts) {
    const auto n = static_cast<Eigen::Index>(slice.vocab_size());
    if (words.rows() != n || contexts.rows() != n || words.cols() != contexts.cols())
        throw ValidationError("embedding shapes do not match the count slice");
    if (!words.allFinite() || !contexts.allFinite())
        throw Error("non-finite embedding entries in likelihood evaluation");
}

// n+ restricted to the (word_ids x context_ids) block.
Matrix positive_block(const CountSlice& slice, std::span<const WordId> word_ids,
                      std::span<const WordId> context_ids) {
    std::vector<std::ptrdiff_t> column_of(slice.vocab_size(), -1);
    for (std::size_t b = 0; b < context_ids.size(); ++b) column_of[context_ids[b]] = static_cast<std::ptrdiff_t>(b);
    Matrix block = Matrix::Zero(static_cast<Eigen::Index>(word_ids.size()),
                                static_cast<Eigen::Index>(context_ids.size()));
    const auto offsets = slice.row_offsets();
    const auto cols = slice.columns();
    const auto weights = slice.weights();
    for (std::size_t a = 0; a < word_ids.size(); ++a) {
        const WordId i = word_ids[a];
        for (std::size_t p = offsets[i]; p < offsets[i + 1]; ++p)
            if (column_of[cols[p]] >= 0) block(static_cast<Eigen::Index>(a), column_of[cols[p]]) = weights[p];
    }
    return block;
}

Matrix gather_rows(const Matrix& m, std::span<const WordId> ids) {
    Matrix out(static_cast<Eigen::Index>(ids.size()), m.cols());
    for (std::size_t a = 0; a < ids.size(); ++a) out.row(static_cast<Eigen::Index>(a)) = m.row(ids[a]);
    return out;
}

std::vector<WordId> all_ids(std::size_t n) {
    std::vector<WordId> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<WordId>(i);
    return ids;
}

}  // namespace

double log_likelihood(const CountSlice& slice, const Matrix& words, const Matrix& contexts) {
    check_shapes(slice, words, contexts);
    if (slice.empty()) return 0.0;
    const Matrix scores = words * contexts.transpose();
    const auto& p = slice.word_marginal();
    const auto& pc = slice.context_distribution();
    const double neg_scale = slice.total_negative();
    double negative = 0.0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        if (p[i] == 0.0) continue;
        double row = 0.0;
        for (Eigen::Index j = 0; j < scores.cols(); ++j)
            if (pc[j] != 0.0) row += pc[j] * log_sigmoid(-scores(i, j));
        negative += p[i] * row;
    }
    double positive = 0.0;
    const auto offsets = slice.row_offsets();
    const auto cols = slice.columns();
    const auto weights = slice.weights();
    for (std::size_t i = 0; i + 1 < offsets.size(); ++i)
        for (std::size_t q = offsets[i]; q < offsets[i + 1]; ++q)
            positive += weights[q] * log_sigmoid(scores(static_cast<Eigen::Index>(i), cols[q]));
    return positive + neg_scale * negative;
}

LikelihoodGradient likelihood_gradient(const CountSlice& slice, const Matrix& words,
                                       const Matrix& contexts) {
    const auto ids = all_ids(slice.vocab_size());
    return likelihood_gradient(slice, words, contexts, ids, ids, 1.0);
}

LikelihoodGradient likelihood_gradient(const CountSlice& slice, const Matrix& words,
                                       const Matrix& contexts, std::span<const WordId> word_ids,
                                       std::span<const WordId> context_ids, double scale) {
    check_shapes(slice, words, contexts);
    const auto rows = static_cast<Eigen::Index>(word_ids.size());
    const auto cols = static_cast<Eigen::Index>(context_ids.size());
    LikelihoodGradient out;
    out.words = Matrix::Zero(rows, words.cols());
    out.contexts = Matrix::Zero(cols, words.cols());
    if (slice.empty() || rows == 0 || cols == 0) return out;

    const Matrix u = gather_rows(words, word_ids);
    const Matrix v = gather_rows(contexts, context_ids);
    const Matrix scores = u * v.transpose();
    Matrix pull = positive_block(slice, word_ids, context_ids);
    const auto& p = slice.word_marginal();
    const auto& pc = slice.context_distribution();
    const double neg_scale = slice.total_negative();
    double value = 0.0;
    for (Eigen::Index a = 0; a < rows; ++a) {
        const double row_neg = neg_scale * p[word_ids[static_cast<std::size_t>(a)]];
        for (Eigen::Index b = 0; b < cols; ++b) {
            const double x = scores(a, b);
            const double pos = pull(a, b);
            const double neg = row_neg * pc[context_ids[static_cast<std::size_t>(b)]];
            // One exp per pair: e = exp(-|x|).
            const double e = std::exp(-std::abs(x));
            const double l1p = std::log1p(e);
            double log_s_pos, log_s_neg, s_neg;
            if (x >= 0.0) {
                log_s_pos = -l1p;
                log_s_neg = -x - l1p;
                s_neg = e / (1.0 + e);
            } else {
                log_s_pos = x - l1p;
                log_s_neg = -l1p;
                s_neg = 1.0 / (1.0 + e);
            }
            value += pos * log_s_pos + neg * log_s_neg;
            pull(a, b) = (pos + neg) * s_neg - neg;
        }
    }
    out.words.noalias() = scale * (pull * v);
    out.contexts.noalias() = scale * (pull.transpose() * u);
    out.value = scale * value;
    return out;
}

double log_joint(const EmbeddingTrajectory& trajectory, const CountSeries& counts,
                 const Hyperparameters& hyper) {
    validate_trajectory(trajectory);
    const std::size_t steps = trajectory.size();
    if (counts.steps() != steps) throw ValidationError("trajectory and counts differ in length");
    if (!std::isfinite(hyper.prior_variance))
        throw ValidationError("log_joint needs a finite prior variance (proper prior)");
    const auto vars = step_variances(counts.grid, hyper.diffusion);
    const PriorPrecision pi = prior_precision(steps, vars, hyper.prior_variance);
    const double normalizer =
        0.5 * pi.log_determinant() - 0.5 * static_cast<double>(steps) * std::log(2.0 * std::numbers::pi);

    double total = 0.0;
    std::vector<double> series(steps);
    for (const Matrix EmbeddingSnapshot::*member : {&EmbeddingSnapshot::words, &EmbeddingSnapshot::contexts}) {
        const Matrix& first = trajectory.front().*member;
        for (Eigen::Index i = 0; i < first.rows(); ++i)
            for (Eigen::Index k = 0; k < first.cols(); ++k) {
                for (std::size_t t = 0; t < steps; ++t) series[t] = (trajectory[t].*member)(i, k);
                total += normalizer - 0.5 * pi.quadratic_form(series);
            }
    }
    for (std::size_t t = 0; t < steps; ++t)
        total += log_likelihood(counts.slices[t], trajectory[t].words, trajectory[t].contexts);
    return total;
}

}  // namespace driftvec
