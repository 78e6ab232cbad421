#include "driftvec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "driftvec/random.hpp"

namespace driftvec {

std::string synthetic_word(std::size_t index, std::size_t vocab_size) {
    std::size_t width = 3;
    while (vocab_size > static_cast<std::size_t>(std::pow(10.0, static_cast<double>(width)))) ++width;
    std::ostringstream os;
    os << 'w' << std::setw(static_cast<int>(width)) << std::setfill('0') << index;
    return os.str();
}

namespace {

void check_options(const SyntheticOptions& o) {
    if (o.vocab_size < 1 || o.steps < 1 || o.dimension < 1 || o.docs_per_step < 1)
        throw ValidationError("synthetic corpus sizes must be at least 1");
    if (o.min_length < 1 || o.max_length < o.min_length)
        throw ValidationError("synthetic document lengths must satisfy 1 <= min <= max");
    if (!(o.drift_rate >= 0.0)) throw ValidationError("drift rate must be non-negative");
    if (!(o.interaction_scale > 0.0)) throw ValidationError("interaction scale must be positive");
    if (o.plant_swap && (o.vocab_size < 3 || o.dimension < 2))
        throw ValidationError("a planted swap needs at least 3 words and 2 dimensions");
}

// Word 0 sits on the arc from word 1's direction to word 2's direction.
void place_planted(Matrix& w, double fraction, double norm) {
    Vector a = w.row(1).transpose();
    Vector b = w.row(2).transpose();
    a.normalize();
    b -= b.dot(a) * a;
    b.normalize();
    const double angle = fraction * std::acos(0.0);
    w.row(0) = (norm * (std::cos(angle) * a + std::sin(angle) * b)).transpose();
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticOptions& o) {
    check_options(o);
    const std::size_t n = o.vocab_size;
    const std::size_t d = o.dimension;
    const double coord_sd = std::sqrt(o.interaction_scale / static_cast<double>(d));

    SyntheticCorpus out;
    for (std::size_t i = 0; i < n; ++i) out.words.push_back(synthetic_word(i, n));

    Rng walk(derive_seed(o.seed, "synthetic/walk"));
    Matrix w(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) w(i, k) = coord_sd * walk.normal();

    const double planted_norm = std::sqrt(1.6 * o.interaction_scale);
    if (o.plant_swap) {
        out.planted_word = out.words[0];
        out.neighbor_before = out.words[1];
        out.neighbor_after = out.words[2];
        for (std::size_t i = 1; i <= 2; ++i) w.row(i) *= planted_norm / w.row(i).norm();
    }

    std::vector<double> base(n);
    for (std::size_t j = 0; j < n; ++j)
        base[j] = -o.zipf_exponent * std::log(static_cast<double>(j + 1));

    Rng text(derive_seed(o.seed, "synthetic/text"));
    for (std::size_t t = 0; t < o.steps; ++t) {
        if (t > 0) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < d; ++k) w(i, k) += o.drift_rate * walk.normal();
        }
        if (o.plant_swap) {
            const double fraction =
                o.steps > 1 ? static_cast<double>(t) / static_cast<double>(o.steps - 1) : 0.0;
            place_planted(w, fraction, planted_norm);
        }
        out.truth.push_back(w);

        // Cumulative transition tables; row n is the start distribution.
        std::vector<std::vector<double>> cdf(n + 1, std::vector<double>(n));
        for (std::size_t i = 0; i <= n; ++i) {
            std::vector<double> logits(n);
            for (std::size_t j = 0; j < n; ++j)
                logits[j] = base[j] + (i < n ? w.row(i).dot(w.row(j)) : 0.0);
            const double top = *std::max_element(logits.begin(), logits.end());
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc += std::exp(logits[j] - top);
                cdf[i][j] = acc;
            }
            for (double& c : cdf[i]) c /= acc;
        }
        auto draw = [&](const std::vector<double>& c) {
            const double u = text.uniform();
            auto it = std::upper_bound(c.begin(), c.end(), u);
            return std::min<std::size_t>(static_cast<std::size_t>(it - c.begin()), n - 1);
        };

        const double stamp = o.start_year + static_cast<double>(t);
        for (std::size_t doc = 0; doc < o.docs_per_step; ++doc) {
            const std::size_t len =
                o.min_length + static_cast<std::size_t>(text.below(o.max_length - o.min_length + 1));
            Document document;
            document.timestamp = stamp;
            std::size_t prev = draw(cdf[n]);
            document.tokens.push_back(out.words[prev]);
            for (std::size_t p = 1; p < len; ++p) {
                prev = draw(cdf[prev]);
                document.tokens.push_back(out.words[prev]);
            }
            out.documents.push_back(std::move(document));
        }
    }

    if (o.plant_swap) {
        out.swap_step = o.steps;
        for (std::size_t t = 0; t < o.steps; ++t) {
            const Matrix& m = out.truth[t];
            auto cosine = [&](std::size_t a, std::size_t b) {
                return m.row(a).dot(m.row(b)) / (m.row(a).norm() * m.row(b).norm());
            };
            if (cosine(0, 2) > cosine(0, 1)) {
                out.swap_step = t;
                break;
            }
        }
    }
    return out;
}

}  // namespace driftvec
