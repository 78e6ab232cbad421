#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "driftvec/types.hpp"

namespace driftvec {

/// One time-stamped record (a sentence, tweet or speech). Tokens are lowercase.
struct Document {
    double timestamp = 0.0;
    std::vector<std::string> tokens;
};

class Vocabulary {
public:
    Vocabulary() = default;
    /// Words must be distinct; ids are assigned in the given order.
    explicit Vocabulary(std::vector<std::string> words);

    std::size_t size() const { return words_.size(); }
    const std::string& word(WordId id) const { return words_.at(id); }
    const std::vector<std::string>& words() const { return words_; }
    std::optional<WordId> find(std::string_view word) const;

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, WordId> index_;
};

/// Strictly increasing time stamps, in years.
class TimeGrid {
public:
    TimeGrid() = default;
    explicit TimeGrid(std::vector<double> timestamps);

    std::size_t size() const { return timestamps_.size(); }
    double operator[](std::size_t t) const { return timestamps_[t]; }
    const std::vector<double>& timestamps() const { return timestamps_; }

private:
    std::vector<double> timestamps_;
};

struct Cooccurrence {
    WordId word = 0;
    WordId context = 0;
    double weight = 0.0;
};

/// Word-context statistics for one time step.
///
/// Positive counts are stored sparsely (CSR, rows = words). Negative counts are
/// never materialized; they follow from the rank-one form
///   n-(i, j) = total_positive * eta * P(i) * P'(j).
class CountSlice {
public:
    CountSlice() = default;
    /// Entries may repeat; repeated (word, context) weights are summed.
    CountSlice(std::size_t vocab_size, std::vector<Cooccurrence> entries, double gamma,
               double eta);

    std::size_t vocab_size() const { return word_marginal_.size(); }
    /// True when the slice carries no positive mass (prior-only step).
    bool empty() const { return total_positive_ <= 0.0; }

    double positive(WordId word, WordId context) const;
    double negative(WordId word, WordId context) const {
        return total_positive_ * eta_ * word_marginal_[word] * context_distribution_[context];
    }

    double total_positive() const { return total_positive_; }
    double total_negative() const { return eta_ * total_positive_; }
    double gamma() const { return gamma_; }
    double eta() const { return eta_; }
    const std::vector<double>& word_marginal() const { return word_marginal_; }
    const std::vector<double>& context_distribution() const { return context_distribution_; }

    // CSR access to the positive counts.
    std::span<const std::size_t> row_offsets() const { return row_offsets_; }
    std::span<const WordId> columns() const { return columns_; }
    std::span<const double> weights() const { return weights_; }
    std::size_t nonzeros() const { return weights_.size(); }

    /// Recomputes P, P' and the totals for new exponents (counts unchanged).
    void set_negative_sampling(double gamma, double eta);

    /// All stored positive entries in row-major order.
    std::vector<Cooccurrence> entries() const;

private:
    std::vector<std::size_t> row_offsets_;
    std::vector<WordId> columns_;
    std::vector<double> weights_;
    std::vector<double> word_marginal_;
    std::vector<double> context_distribution_;
    double total_positive_ = 0.0;
    double gamma_ = 0.75;
    double eta_ = 1.0;
};

/// Vocabulary, time grid and one CountSlice per time step.
struct CountSeries {
    Vocabulary vocabulary;
    TimeGrid grid;
    std::vector<CountSlice> slices;

    std::size_t steps() const { return slices.size(); }
};

enum class BinningRule { ByYear, ByDate, FixedWidth };

BinningRule parse_binning_rule(std::string_view name);
std::string to_string(BinningRule rule);

/// Documents grouped into time steps.
struct BinnedCorpus {
    TimeGrid grid;
    std::vector<std::vector<Document>> steps;
};

/// Groups documents into time steps. ByYear uses floor(timestamp), ByDate one
/// step per distinct timestamp, FixedWidth bins of `width` years starting at the
/// earliest timestamp. Each step is stamped with its bin's lower edge.
BinnedCorpus bin_documents(std::vector<Document> documents, BinningRule rule,
                           double width = 1.0);

/// Top-L words by the sum over steps of per-step relative frequency, ties broken
/// lexicographically. Returns fewer than L words if fewer exist.
Vocabulary build_vocabulary(const std::vector<std::vector<Document>>& steps, std::size_t size);

/// Window-weighted co-occurrences of one step. Out-of-vocabulary tokens are
/// dropped before gaps are measured; every ordered pair of positions with k
/// tokens between them adds max(0, 1 - k / window).
std::vector<Cooccurrence> build_positive_counts(std::span<const Document> documents,
                                                const Vocabulary& vocabulary,
                                                std::size_t window);

CountSeries build_count_series(const BinnedCorpus& corpus, const Vocabulary& vocabulary,
                               std::size_t window, double gamma, double eta);

/// Moves a uniformly random `fraction` of each step's documents into the second
/// corpus. Both corpora share the original time grid.
std::pair<BinnedCorpus, BinnedCorpus> split_heldout(const BinnedCorpus& corpus,
                                                    double fraction, std::uint64_t seed);

/// Parses "YYYY", "YYYY-MM-DD" or a decimal year into fractional years.
double parse_timestamp(std::string_view text);

/// Reads `<timestamp>\t<tokens>` records. Tokens are lowercased. Throws
/// ValidationError naming the line number of a malformed record.
std::vector<Document> read_corpus(std::istream& in);
std::vector<Document> read_corpus_file(const std::string& path);
void write_corpus(std::ostream& out, std::span<const Document> documents);

}  // namespace driftvec
