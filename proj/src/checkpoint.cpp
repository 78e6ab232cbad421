#include "driftvec/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

#include "driftvec/format.hpp"

namespace driftvec {

namespace {

constexpr const char* kFilterTag = "DRIFTVEC-FILTER";
constexpr const char* kSmoothTag = "DRIFTVEC-SMOOTH";
constexpr const char* kStaticTag = "DRIFTVEC-STATIC";
constexpr const char* kVersion = "v1";

void write_values(std::ostream& out, const double* data, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) out << (k ? " " : "") << format_double(data[k]);
    out << '\n';
}

void write_matrix(std::ostream& out, const char* name, const Matrix& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        write_values(out, m.data() + i * m.cols(), static_cast<std::size_t>(m.cols()));
}

void write_vector(std::ostream& out, const char* name, const std::vector<double>& v) {
    out << name << ' ' << v.size() << '\n';
    write_values(out, v.data(), v.size());
}

Matrix read_matrix(TextReader& r, const char* name) {
    r.expect(name);
    const auto rows = r.count();
    const auto cols = r.count();
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = r.real();
    return m;
}

std::vector<double> read_vector(TextReader& r, const char* name) {
    r.expect(name);
    std::vector<double> v(r.count());
    for (double& x : v) x = r.real();
    return v;
}

void write_header(std::ostream& out, const char* tag, const CheckpointHeader& h) {
    out << tag << ' ' << kVersion << '\n';
    out << "seed " << h.seed << '\n';
    const auto entries = hyperparameter_entries(h.hyper);
    out << "hyperparameters " << entries.size() << '\n';
    for (const auto& [k, v] : entries) out << k << ' ' << v << '\n';
    out << "vocabulary " << h.vocabulary.size() << '\n';
    for (const auto& w : h.vocabulary.words()) out << w << '\n';
    out << "steps " << h.grid.size() << '\n';
    write_values(out, h.grid.timestamps().data(), h.grid.size());
}

CheckpointHeader read_header(TextReader& r, const char* tag) {
    r.expect(tag);
    r.expect(kVersion);
    CheckpointHeader h;
    r.expect("seed");
    h.seed = r.count();
    r.expect("hyperparameters");
    const auto n = r.count();
    for (std::uint64_t k = 0; k < n; ++k) {
        const std::string name = r.word();
        const std::string value = r.word();
        if (!assign_hyperparameter(h.hyper, name, value)) r.fail("unknown hyperparameter '" + name + "'");
    }
    r.expect("vocabulary");
    std::vector<std::string> words(r.count());
    for (auto& w : words) w = r.word();
    h.vocabulary = Vocabulary(std::move(words));
    r.expect("steps");
    std::vector<double> stamps(r.count());
    for (double& s : stamps) s = r.real();
    h.grid = TimeGrid(std::move(stamps));
    return h;
}

void check_shape(TextReader& r, const Matrix& m, const CheckpointHeader& h) {
    if (m.rows() != static_cast<Eigen::Index>(h.vocabulary.size()) ||
        m.cols() != static_cast<Eigen::Index>(h.hyper.dimension))
        r.fail("matrix shape does not match vocabulary and dimension");
}

void write_factors(std::ostream& out, const char* name, const SmoothFactorParams& p) {
    out << name << ' ' << p.vocab_size << ' ' << p.dimension << ' ' << p.steps << '\n';
    write_vector(out, "values", p.mean);
    write_vector(out, "diagonal", p.diag);
    write_vector(out, "superdiagonal", p.upper);
}

SmoothFactorParams read_factors(TextReader& r, const char* name) {
    r.expect(name);
    SmoothFactorParams p;
    p.vocab_size = r.count();
    p.dimension = r.count();
    p.steps = r.count();
    if (p.steps == 0) r.fail("factor parameters need at least one step");
    p.mean = read_vector(r, "values");
    p.diag = read_vector(r, "diagonal");
    p.upper = read_vector(r, "superdiagonal");
    const std::size_t n = p.vocab_size * p.dimension;
    if (p.mean.size() != n * p.steps || p.diag.size() != n * p.steps ||
        p.upper.size() != n * (p.steps - 1))
        r.fail("factor arrays have inconsistent lengths");
    for (double v : p.diag)
        if (!(v > 0.0)) r.fail("Cholesky diagonal entries must be positive");
    return p;
}

void write_adam(std::ostream& out, const char* name, const AdamState& a) {
    out << name << ' ' << a.step_count() << '\n';
    write_vector(out, "first", a.first_moment());
    write_vector(out, "second", a.second_moment());
}

void read_adam(TextReader& r, const char* name, AdamState& a, std::size_t size) {
    r.expect(name);
    const auto steps = r.count();
    auto first = read_vector(r, "first");
    auto second = read_vector(r, "second");
    if (first.size() != size || second.size() != size) r.fail("optimizer state has the wrong size");
    a.restore(std::move(first), std::move(second), steps);
}

std::string peek_tag(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read checkpoint '" + path + "'");
    std::string tag;
    in >> tag;
    return tag;
}

}  // namespace

void write_checkpoint(std::ostream& out, const FilterCheckpoint& c) {
    write_header(out, kFilterTag, c.header);
    out << "completed " << c.posteriors.size() << '\n';
    for (const auto& p : c.posteriors) {
        write_matrix(out, "word_mean", p.words.mean);
        write_matrix(out, "word_variance", p.words.variance);
        write_matrix(out, "context_mean", p.contexts.mean);
        write_matrix(out, "context_variance", p.contexts.variance);
    }
}

FilterCheckpoint read_filter_checkpoint(std::istream& in, const std::string& source) {
    TextReader r(in, source);
    FilterCheckpoint c;
    c.header = read_header(r, kFilterTag);
    r.expect("completed");
    const auto n = r.count();
    if (n > c.header.grid.size()) r.fail("more completed steps than time steps");
    for (std::uint64_t t = 0; t < n; ++t) {
        FilterPosterior p;
        p.words.mean = read_matrix(r, "word_mean");
        p.words.variance = read_matrix(r, "word_variance");
        p.contexts.mean = read_matrix(r, "context_mean");
        p.contexts.variance = read_matrix(r, "context_variance");
        for (const Matrix* m : {&p.words.mean, &p.words.variance, &p.contexts.mean, &p.contexts.variance})
            check_shape(r, *m, c.header);
        c.posteriors.push_back(std::move(p));
    }
    return c;
}

void write_checkpoint(std::ostream& out, const SmoothCheckpoint& c) {
    write_header(out, kSmoothTag, c.header);
    const PriorPrecision prior = prior_precision(
        c.header.grid.size(), step_variances(c.header.grid, c.header.hyper.diffusion),
        c.header.hyper.prior_variance);
    const NaturalBasis basis(prior);
    out << "iteration " << c.state.iteration << '\n';
    // Means for readers, then the resumable state (natural coefficients).
    write_factors(out, "word_means", to_mean_parameters(c.state.words, basis));
    write_factors(out, "context_means", to_mean_parameters(c.state.contexts, basis));
    write_vector(out, "word_coefficients", c.state.words.mean);
    write_vector(out, "context_coefficients", c.state.contexts.mean);
    write_adam(out, "adam_word_coefficients", c.state.word_coefficients);
    write_adam(out, "adam_word_diagonal", c.state.word_diag);
    write_adam(out, "adam_word_superdiagonal", c.state.word_upper);
    write_adam(out, "adam_context_coefficients", c.state.context_coefficients);
    write_adam(out, "adam_context_diagonal", c.state.context_diag);
    write_adam(out, "adam_context_superdiagonal", c.state.context_upper);
}

SmoothCheckpoint read_smooth_checkpoint(std::istream& in, const std::string& source) {
    TextReader r(in, source);
    SmoothCheckpoint c;
    c.header = read_header(r, kSmoothTag);
    r.expect("iteration");
    c.state.iteration = r.count();
    c.state.words = read_factors(r, "word_means");
    c.state.contexts = read_factors(r, "context_means");
    for (const auto* p : {&c.state.words, &c.state.contexts})
        if (p->vocab_size != c.header.vocabulary.size() || p->dimension != c.header.hyper.dimension ||
            p->steps != c.header.grid.size())
            r.fail("factor shapes do not match the header");
    c.state.words.mean = read_vector(r, "word_coefficients");
    c.state.contexts.mean = read_vector(r, "context_coefficients");
    if (c.state.words.mean.size() != c.state.words.diag.size() ||
        c.state.contexts.mean.size() != c.state.contexts.diag.size())
        r.fail("coefficient arrays have the wrong length");
    const std::size_t n = c.state.words.diag.size();
    const std::size_t n_upper = c.state.words.upper.size();
    read_adam(r, "adam_word_coefficients", c.state.word_coefficients, n);
    read_adam(r, "adam_word_diagonal", c.state.word_diag, n);
    read_adam(r, "adam_word_superdiagonal", c.state.word_upper, n_upper);
    read_adam(r, "adam_context_coefficients", c.state.context_coefficients, n);
    read_adam(r, "adam_context_diagonal", c.state.context_diag, n);
    read_adam(r, "adam_context_superdiagonal", c.state.context_upper, n_upper);
    return c;
}

void write_checkpoint(std::ostream& out, const StaticCheckpoint& c) {
    write_header(out, kStaticTag, c.header);
    out << "method " << to_string(c.method) << '\n';
    out << "fits " << c.embeddings.size() << '\n';
    for (std::size_t t = 0; t < c.embeddings.size(); ++t) {
        out << "objective " << format_double(c.objectives.at(t)) << '\n';
        write_matrix(out, "rotation", c.rotations.at(t));
        write_matrix(out, "words", c.embeddings[t].words);
        write_matrix(out, "contexts", c.embeddings[t].contexts);
    }
}

StaticCheckpoint read_static_checkpoint(std::istream& in, const std::string& source) {
    TextReader r(in, source);
    StaticCheckpoint c;
    c.header = read_header(r, kStaticTag);
    r.expect("method");
    c.method = parse_method(r.word());
    if (c.method != Method::Sgi && c.method != Method::Sgp) r.fail("static checkpoint must hold sgi or sgp");
    r.expect("fits");
    const auto n = r.count();
    if (n != c.header.grid.size()) r.fail("static checkpoint must hold one fit per step");
    for (std::uint64_t t = 0; t < n; ++t) {
        r.expect("objective");
        c.objectives.push_back(r.real());
        c.rotations.push_back(read_matrix(r, "rotation"));
        EmbeddingSnapshot s;
        s.words = read_matrix(r, "words");
        s.contexts = read_matrix(r, "contexts");
        check_shape(r, s.words, c.header);
        check_shape(r, s.contexts, c.header);
        c.embeddings.push_back(std::move(s));
    }
    return c;
}

template <typename Checkpoint>
void save_checkpoint(const std::string& path, const Checkpoint& c) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write checkpoint '" + tmp + "'");
        write_checkpoint(out, c);
        out.flush();
        if (!out) throw Error("failed writing checkpoint '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

template void save_checkpoint(const std::string&, const FilterCheckpoint&);
template void save_checkpoint(const std::string&, const SmoothCheckpoint&);
template void save_checkpoint(const std::string&, const StaticCheckpoint&);

LoadedTrajectory load_trajectory(const std::string& path) {
    const std::string tag = peek_tag(path);
    std::ifstream in(path, std::ios::binary);
    LoadedTrajectory out;
    if (tag == kFilterTag) {
        auto c = read_filter_checkpoint(in, path);
        if (c.posteriors.size() != c.header.grid.size())
            throw ValidationError("filter checkpoint '" + path + "' is incomplete (" +
                                  std::to_string(c.posteriors.size()) + " of " +
                                  std::to_string(c.header.grid.size()) + " steps)");
        out.method = Method::Filter;
        for (const auto& p : c.posteriors) out.embeddings.push_back({p.words.mean, p.contexts.mean});
        out.header = std::move(c.header);
    } else if (tag == kSmoothTag) {
        auto c = read_smooth_checkpoint(in, path);
        const PriorPrecision prior = prior_precision(
            c.header.grid.size(), step_variances(c.header.grid, c.header.hyper.diffusion),
            c.header.hyper.prior_variance);
        out.method = Method::Smooth;
        out.embeddings = smooth_result(c.state, NaturalBasis(prior)).means;
        out.header = std::move(c.header);
    } else if (tag == kStaticTag) {
        auto c = read_static_checkpoint(in, path);
        out.method = c.method;
        out.embeddings = std::move(c.embeddings);
        out.header = std::move(c.header);
    } else {
        throw ValidationError("'" + path + "' is not a checkpoint (unknown tag '" + tag + "')");
    }
    return out;
}

}  // namespace driftvec
