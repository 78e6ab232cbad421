#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "driftvec/corpus.hpp"
#include "driftvec/model.hpp"
#include "driftvec/types.hpp"

namespace driftvec {

enum class Method { Filter, Smooth, Sgi, Sgp };

Method parse_method(std::string_view name);
std::string to_string(Method method);

/// log p(n | U, V) divided by the pair mass (1 + eta) * sum n+. Throws
/// ValidationError when the slice is empty.
double predictive_log_likelihood(const CountSlice& slice, const Matrix& words,
                                 const Matrix& contexts);

struct PredictiveRecord {
    std::size_t t = 0;
    double timestamp = 0.0;
    Method method = Method::Filter;
    double value = 0.0;
    double pair_mass = 0.0;
};

/// Weights (on step t-1, on step t+1) of the time-weighted interpolation at an
/// interior step t.
std::pair<double, double> interpolation_weights(const TimeGrid& grid, std::size_t t);

/// Plug-in embeddings used to predict step t. Chronological methods (filter,
/// SGI, SGP) use step t-1 and have no estimate for t = 0. The smoother
/// interpolates between t-1 and t+1 and uses the nearest step at the ends.
EmbeddingSnapshot plug_in_embeddings(Method method, const EmbeddingTrajectory& trajectory,
                                     const TimeGrid& grid, std::size_t t);

/// One record per step with held-out mass and a plug-in estimate. Steps with
/// no held-out mass are listed in `skipped` when it is given.
std::vector<PredictiveRecord> heldout_protocol(Method method, const EmbeddingTrajectory& trajectory,
                                               const CountSeries& heldout,
                                               std::vector<std::size_t>* skipped = nullptr);

/// Mean value over records with t >= first_step.
double mean_predictive(const std::vector<PredictiveRecord>& records, std::size_t first_step = 1);

/// Cosine similarity; 0 when either vector is zero.
double cosine_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                         const Eigen::Ref<const Eigen::RowVectorXd>& b);

struct SimilarityPoint {
    std::size_t t = 0;
    double value = 0.0;
    bool degenerate = false;  // a zero vector was involved
};

std::vector<SimilarityPoint> cosine_similarity_series(const EmbeddingTrajectory& trajectory,
                                                      WordId a, WordId b);

struct WordScore {
    WordId word = 0;
    double score = 0.0;
};

/// Words ranked by 1 - cos(u_{i,t0}, u_{i,t1}), descending, ties by id.
std::vector<WordScore> top_changing_words(const EmbeddingTrajectory& trajectory, std::size_t t0,
                                          std::size_t t1, std::size_t k);

/// The k words most cosine-similar to `word` at step t, excluding itself.
std::vector<WordScore> nearest_neighbors(const EmbeddingTrajectory& trajectory, WordId word,
                                         std::size_t t, std::size_t k);

struct DisplacementHistogram {
    std::size_t delta = 0;
    std::vector<double> distances;  // per word
    std::vector<std::size_t> counts;
    double median = 0.0;
};

struct DisplacementHistograms {
    std::vector<double> edges;  // bins + 1 shared edges
    std::vector<DisplacementHistogram> per_delta;
};

/// Distribution over words of |u_{i,t_ref} - u_{i,t_ref+delta}|. All deltas
/// share bins spanning [0, largest distance]. Throws if t_ref + delta >= T.
DisplacementHistograms displacement_histogram(const EmbeddingTrajectory& trajectory,
                                              std::size_t t_ref,
                                              const std::vector<std::size_t>& deltas,
                                              std::size_t bins);

double median(std::vector<double> values);
/// Spearman rank correlation with average ranks for ties.
double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b);

void write_predictive_csv(std::ostream& out, const std::vector<PredictiveRecord>& records);
void write_topchanges_csv(std::ostream& out, const Vocabulary& vocabulary, std::size_t t0,
                          std::size_t t1, const std::vector<WordScore>& ranked);
void write_histogram_csv(std::ostream& out, std::size_t t_ref,
                         const DisplacementHistograms& histograms);

}  // namespace driftvec
