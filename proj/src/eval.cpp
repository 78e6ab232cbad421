#include "driftvec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "driftvec/csv.hpp"

namespace driftvec {

Method parse_method(std::string_view name) {
    if (name == "filter") return Method::Filter;
    if (name == "smooth") return Method::Smooth;
    if (name == "sgi") return Method::Sgi;
    if (name == "sgp") return Method::Sgp;
    throw ValidationError("unknown method '" + std::string(name) +
                          "' (expected filter, smooth, sgi or sgp)");
}

std::string to_string(Method method) {
    switch (method) {
        case Method::Filter: return "filter";
        case Method::Smooth: return "smooth";
        case Method::Sgi: return "sgi";
        case Method::Sgp: return "sgp";
    }
    return "unknown";
}

double predictive_log_likelihood(const CountSlice& slice, const Matrix& words,
                                 const Matrix& contexts) {
    const double mass = slice.total_positive() + slice.total_negative();
    if (!(mass > 0.0)) throw ValidationError("predictive likelihood needs positive pair mass");
    return log_likelihood(slice, words, contexts) / mass;
}

std::pair<double, double> interpolation_weights(const TimeGrid& grid, std::size_t t) {
    if (t == 0 || t + 1 >= grid.size())
        throw ValidationError("interpolation needs an interior time step");
    const double span = grid[t + 1] - grid[t - 1];
    return {(grid[t + 1] - grid[t]) / span, (grid[t] - grid[t - 1]) / span};
}

EmbeddingSnapshot plug_in_embeddings(Method method, const EmbeddingTrajectory& trajectory,
                                     const TimeGrid& grid, std::size_t t) {
    const std::size_t steps = trajectory.size();
    if (grid.size() != steps) throw ValidationError("trajectory and time grid differ in length");
    if (t >= steps) throw ValidationError("time step out of range");
    if (method != Method::Smooth) {
        if (t == 0) throw ValidationError("chronological methods have no estimate for the first step");
        return trajectory[t - 1];
    }
    if (steps == 1) return trajectory[0];
    if (t == 0) return trajectory[1];
    if (t + 1 == steps) return trajectory[t - 1];
    const auto [w_prev, w_next] = interpolation_weights(grid, t);
    return {w_prev * trajectory[t - 1].words + w_next * trajectory[t + 1].words,
            w_prev * trajectory[t - 1].contexts + w_next * trajectory[t + 1].contexts};
}

std::vector<PredictiveRecord> heldout_protocol(Method method, const EmbeddingTrajectory& trajectory,
                                               const CountSeries& heldout,
                                               std::vector<std::size_t>* skipped) {
    validate_trajectory(trajectory);
    if (trajectory.size() != heldout.steps())
        throw ValidationError("trajectory and held-out counts differ in length");
    std::vector<PredictiveRecord> out;
    const std::size_t first = method == Method::Smooth ? 0 : 1;
    for (std::size_t t = first; t < heldout.steps(); ++t) {
        const CountSlice& slice = heldout.slices[t];
        if (slice.empty()) {
            if (skipped) skipped->push_back(t);
            continue;
        }
        const EmbeddingSnapshot plug = plug_in_embeddings(method, trajectory, heldout.grid, t);
        out.push_back({t, heldout.grid[t], method,
                       predictive_log_likelihood(slice, plug.words, plug.contexts),
                       slice.total_positive() + slice.total_negative()});
    }
    return out;
}

double mean_predictive(const std::vector<PredictiveRecord>& records, std::size_t first_step) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : records)
        if (r.t >= first_step) {
            sum += r.value;
            ++n;
        }
    if (n == 0) throw ValidationError("no predictive records to average");
    return sum / static_cast<double>(n);
}

double cosine_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                         const Eigen::Ref<const Eigen::RowVectorXd>& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

std::vector<SimilarityPoint> cosine_similarity_series(const EmbeddingTrajectory& trajectory,
                                                      WordId a, WordId b) {
    validate_trajectory(trajectory);
    const auto rows = static_cast<WordId>(trajectory.front().words.rows());
    if (a >= rows || b >= rows) throw ValidationError("word id out of range");
    std::vector<SimilarityPoint> out;
    for (std::size_t t = 0; t < trajectory.size(); ++t) {
        const auto& u = trajectory[t].words;
        const bool degenerate = u.row(a).norm() == 0.0 || u.row(b).norm() == 0.0;
        out.push_back({t, cosine_similarity(u.row(a), u.row(b)), degenerate});
    }
    return out;
}

namespace {

void sort_scores(std::vector<WordScore>& scores) {
    std::stable_sort(scores.begin(), scores.end(), [](const WordScore& x, const WordScore& y) {
        if (x.score != y.score) return x.score > y.score;
        return x.word < y.word;
    });
}

}  // namespace

std::vector<WordScore> top_changing_words(const EmbeddingTrajectory& trajectory, std::size_t t0,
                                          std::size_t t1, std::size_t k) {
    validate_trajectory(trajectory);
    if (t0 >= trajectory.size() || t1 >= trajectory.size())
        throw ValidationError("time step out of range");
    const Matrix& a = trajectory[t0].words;
    const Matrix& b = trajectory[t1].words;
    std::vector<WordScore> scores;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        scores.push_back({static_cast<WordId>(i), 1.0 - cosine_similarity(a.row(i), b.row(i))});
    sort_scores(scores);
    if (scores.size() > k) scores.resize(k);
    return scores;
}

std::vector<WordScore> nearest_neighbors(const EmbeddingTrajectory& trajectory, WordId word,
                                         std::size_t t, std::size_t k) {
    validate_trajectory(trajectory);
    if (t >= trajectory.size()) throw ValidationError("time step out of range");
    const Matrix& u = trajectory[t].words;
    if (word >= u.rows()) throw ValidationError("word id out of range");
    std::vector<WordScore> scores;
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        if (static_cast<WordId>(i) != word)
            scores.push_back({static_cast<WordId>(i), cosine_similarity(u.row(word), u.row(i))});
    sort_scores(scores);
    if (scores.size() > k) scores.resize(k);
    return scores;
}

double median(std::vector<double> values) {
    if (values.empty()) throw ValidationError("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

DisplacementHistograms displacement_histogram(const EmbeddingTrajectory& trajectory,
                                              std::size_t t_ref,
                                              const std::vector<std::size_t>& deltas,
                                              std::size_t bins) {
    validate_trajectory(trajectory);
    if (bins == 0) throw ValidationError("histogram needs at least one bin");
    DisplacementHistograms out;
    double largest = 0.0;
    for (std::size_t delta : deltas) {
        if (t_ref + delta >= trajectory.size())
            throw ValidationError("displacement span exceeds the number of time steps");
        DisplacementHistogram h;
        h.delta = delta;
        const Matrix diff = trajectory[t_ref].words - trajectory[t_ref + delta].words;
        for (Eigen::Index i = 0; i < diff.rows(); ++i) {
            h.distances.push_back(diff.row(i).norm());
            largest = std::max(largest, h.distances.back());
        }
        h.median = median(h.distances);
        out.per_delta.push_back(std::move(h));
    }
    const double top = largest > 0.0 ? largest : 1.0;
    for (std::size_t b = 0; b <= bins; ++b)
        out.edges.push_back(top * static_cast<double>(b) / static_cast<double>(bins));
    for (auto& h : out.per_delta) {
        h.counts.assign(bins, 0);
        for (double d : h.distances) {
            auto b = static_cast<std::size_t>(d / top * static_cast<double>(bins));
            ++h.counts[std::min(b, bins - 1)];
        }
    }
    return out;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw ValidationError("Spearman correlation needs two equal-length series");
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

void write_predictive_csv(std::ostream& out, const std::vector<PredictiveRecord>& records) {
    CsvWriter csv(out, {"t", "timestamp", "method", "value"});
    for (const auto& r : records) {
        csv.field(r.t).field(r.timestamp).field(to_string(r.method)).field(r.value);
        csv.end_row();
    }
}

void write_topchanges_csv(std::ostream& out, const Vocabulary& vocabulary, std::size_t t0,
                          std::size_t t1, const std::vector<WordScore>& ranked) {
    CsvWriter csv(out, {"rank", "word", "t0", "t1", "score"});
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        csv.field(r + 1).field(vocabulary.word(ranked[r].word)).field(t0).field(t1);
        csv.field(ranked[r].score);
        csv.end_row();
    }
}

void write_histogram_csv(std::ostream& out, std::size_t t_ref,
                         const DisplacementHistograms& histograms) {
    CsvWriter csv(out, {"t_ref", "delta", "bin_low", "bin_high", "count", "median"});
    for (const auto& h : histograms.per_delta)
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            csv.field(t_ref).field(h.delta).field(histograms.edges[b]).field(histograms.edges[b + 1]);
            csv.field(h.counts[b]).field(h.median);
            csv.end_row();
        }
}

}  // namespace driftvec
