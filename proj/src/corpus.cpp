#include "driftvec/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "driftvec/format.hpp"
#include "driftvec/random.hpp"

namespace driftvec {

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
        if (!index_.emplace(words_[i], static_cast<WordId>(i)).second)
            throw ValidationError("duplicate vocabulary word '" + words_[i] + "'");
    }
}

std::optional<WordId> Vocabulary::find(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

TimeGrid::TimeGrid(std::vector<double> timestamps) : timestamps_(std::move(timestamps)) {
    for (std::size_t t = 0; t < timestamps_.size(); ++t) {
        if (!std::isfinite(timestamps_[t]))
            throw ValidationError("time grid contains a non-finite timestamp");
        if (t > 0 && !(timestamps_[t] > timestamps_[t - 1]))
            throw ValidationError("time grid must be strictly increasing");
    }
}

// ---------------------------------------------------------------------------

CountSlice::CountSlice(std::size_t vocab_size, std::vector<Cooccurrence> entries, double gamma,
                       double eta) {
    std::sort(entries.begin(), entries.end(), [](const Cooccurrence& a, const Cooccurrence& b) {
        return a.word != b.word ? a.word < b.word : a.context < b.context;
    });
    row_offsets_.assign(vocab_size + 1, 0);
    bool have_last = false;
    Cooccurrence last{};
    for (const auto& e : entries) {
        if (e.word >= vocab_size || e.context >= vocab_size)
            throw ValidationError("co-occurrence id out of vocabulary range");
        if (!(e.weight >= 0.0) || !std::isfinite(e.weight))
            throw ValidationError("co-occurrence weights must be finite and non-negative");
        if (e.weight == 0.0) continue;
        if (have_last && last.word == e.word && last.context == e.context) {
            weights_.back() += e.weight;
            continue;
        }
        columns_.push_back(e.context);
        weights_.push_back(e.weight);
        row_offsets_[e.word + 1] = columns_.size();
        last = e;
        have_last = true;
    }
    // Rows without entries inherit the previous offset.
    for (std::size_t i = 1; i <= vocab_size; ++i)
        row_offsets_[i] = std::max(row_offsets_[i], row_offsets_[i - 1]);
    word_marginal_.assign(vocab_size, 0.0);
    context_distribution_.assign(vocab_size, 0.0);
    set_negative_sampling(gamma, eta);
}

double CountSlice::positive(WordId word, WordId context) const {
    const auto begin = columns_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[word]);
    const auto end = columns_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[word + 1]);
    auto it = std::lower_bound(begin, end, context);
    if (it == end || *it != context) return 0.0;
    return weights_[static_cast<std::size_t>(it - columns_.begin())];
}

void CountSlice::set_negative_sampling(double gamma, double eta) {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("gamma must be >= 0");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ValidationError("eta must be positive");
    gamma_ = gamma;
    eta_ = eta;
    const std::size_t n = vocab_size();
    total_positive_ = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) row += weights_[p];
        word_marginal_[i] = row;
        total_positive_ += row;
    }
    if (total_positive_ <= 0.0) {
        std::fill(word_marginal_.begin(), word_marginal_.end(), 0.0);
        std::fill(context_distribution_.begin(), context_distribution_.end(), 0.0);
        total_positive_ = 0.0;
        return;
    }
    for (double& p : word_marginal_) p /= total_positive_;
    if (gamma == 1.0) {
        context_distribution_ = word_marginal_;
        return;
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        // Words absent from the slice keep zero mass, also for gamma = 0.
        const double p = word_marginal_[j];
        context_distribution_[j] = p > 0.0 ? std::pow(p, gamma) : 0.0;
        norm += context_distribution_[j];
    }
    for (double& p : context_distribution_) p /= norm;
}

std::vector<Cooccurrence> CountSlice::entries() const {
    std::vector<Cooccurrence> out;
    out.reserve(weights_.size());
    for (std::size_t i = 0; i + 1 < row_offsets_.size(); ++i)
        for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p)
            out.push_back({static_cast<WordId>(i), columns_[p], weights_[p]});
    return out;
}

// ---------------------------------------------------------------------------

BinningRule parse_binning_rule(std::string_view name) {
    if (name == "by-year") return BinningRule::ByYear;
    if (name == "by-date") return BinningRule::ByDate;
    if (name == "fixed-width") return BinningRule::FixedWidth;
    throw ValidationError("unknown binning rule '" + std::string(name) +
                          "' (expected by-year, by-date or fixed-width)");
}

std::string to_string(BinningRule rule) {
    switch (rule) {
        case BinningRule::ByYear: return "by-year";
        case BinningRule::ByDate: return "by-date";
        case BinningRule::FixedWidth: return "fixed-width";
    }
    return "by-year";
}

BinnedCorpus bin_documents(std::vector<Document> documents, BinningRule rule, double width) {
    if (rule == BinningRule::FixedWidth && !(width > 0.0))
        throw ValidationError("fixed-width binning needs a positive width");
    BinnedCorpus out;
    if (documents.empty()) return out;
    double origin = documents.front().timestamp;
    for (const auto& d : documents) origin = std::min(origin, d.timestamp);

    std::map<double, std::vector<Document>> bins;
    for (auto& d : documents) {
        double key = d.timestamp;
        switch (rule) {
            case BinningRule::ByYear: key = std::floor(d.timestamp); break;
            case BinningRule::ByDate: break;
            case BinningRule::FixedWidth:
                key = origin + width * std::floor((d.timestamp - origin) / width);
                break;
        }
        bins[key].push_back(std::move(d));
    }
    std::vector<double> stamps;
    for (auto& [stamp, docs] : bins) {
        stamps.push_back(stamp);
        out.steps.push_back(std::move(docs));
    }
    out.grid = TimeGrid(std::move(stamps));
    return out;
}

Vocabulary build_vocabulary(const std::vector<std::vector<Document>>& steps, std::size_t size) {
    if (size == 0) throw ValidationError("vocabulary size must be at least 1");
    std::unordered_map<std::string, double> score;
    for (const auto& docs : steps) {
        std::unordered_map<std::string, std::size_t> counts;
        std::size_t total = 0;
        for (const auto& d : docs) {
            for (const auto& tok : d.tokens) ++counts[tok];
            total += d.tokens.size();
        }
        if (total == 0) continue;
        for (const auto& [w, c] : counts)
            score[w] += static_cast<double>(c) / static_cast<double>(total);
    }
    std::vector<std::pair<std::string, double>> ranked(score.begin(), score.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (ranked.size() > size) ranked.resize(size);
    std::vector<std::string> words;
    words.reserve(ranked.size());
    for (auto& [w, s] : ranked) words.push_back(std::move(w));
    return Vocabulary(std::move(words));
}

std::vector<Cooccurrence> build_positive_counts(std::span<const Document> documents,
                                                const Vocabulary& vocabulary,
                                                std::size_t window) {
    if (window == 0) throw ValidationError("context window must be at least 1");
    const std::uint64_t n = vocabulary.size();
    std::unordered_map<std::uint64_t, double> acc;
    std::vector<WordId> ids;
    const double c_max = static_cast<double>(window);
    for (const auto& doc : documents) {
        ids.clear();
        for (const auto& tok : doc.tokens)
            if (auto id = vocabulary.find(tok)) ids.push_back(*id);
        for (std::size_t p = 0; p < ids.size(); ++p) {
            // Gap k = q - p - 1 runs over 0 .. window-1; larger gaps weigh zero.
            const std::size_t last = std::min(ids.size(), p + window + 1);
            for (std::size_t q = p + 1; q < last; ++q) {
                const double k = static_cast<double>(q - p - 1);
                const double w = 1.0 - k / c_max;
                if (w <= 0.0) continue;
                acc[ids[p] * n + ids[q]] += w;
                acc[ids[q] * n + ids[p]] += w;
            }
        }
    }
    std::vector<Cooccurrence> out;
    out.reserve(acc.size());
    for (const auto& [key, w] : acc)
        out.push_back({static_cast<WordId>(key / n), static_cast<WordId>(key % n), w});
    std::sort(out.begin(), out.end(), [](const Cooccurrence& a, const Cooccurrence& b) {
        return a.word != b.word ? a.word < b.word : a.context < b.context;
    });
    return out;
}

CountSeries build_count_series(const BinnedCorpus& corpus, const Vocabulary& vocabulary,
                               std::size_t window, double gamma, double eta) {
    CountSeries series;
    series.vocabulary = vocabulary;
    series.grid = corpus.grid;
    series.slices.reserve(corpus.steps.size());
    for (const auto& docs : corpus.steps)
        series.slices.emplace_back(vocabulary.size(),
                                   build_positive_counts(docs, vocabulary, window), gamma, eta);
    return series;
}

std::pair<BinnedCorpus, BinnedCorpus> split_heldout(const BinnedCorpus& corpus,
                                                    double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0))
        throw ValidationError("held-out fraction must lie in [0, 1)");
    BinnedCorpus train{corpus.grid, {}};
    BinnedCorpus heldout{corpus.grid, {}};
    for (std::size_t t = 0; t < corpus.steps.size(); ++t) {
        const auto& docs = corpus.steps[t];
        const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(docs.size())));
        Rng rng(derive_seed(seed, "heldout", {t}));
        const auto picked = rng.sample_without_replacement(docs.size(), k);
        std::vector<Document> keep, hold;
        std::size_t next = 0;
        for (std::size_t i = 0; i < docs.size(); ++i) {
            if (next < picked.size() && picked[next] == i) {
                hold.push_back(docs[i]);
                ++next;
            } else {
                keep.push_back(docs[i]);
            }
        }
        train.steps.push_back(std::move(keep));
        heldout.steps.push_back(std::move(hold));
    }
    return {std::move(train), std::move(heldout)};
}

// ---------------------------------------------------------------------------

namespace {

bool is_leap(int year) { return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0; }

template <typename T>
bool parse_number(std::string_view s, T& value) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

double parse_timestamp(std::string_view text) {
    if (text.size() == 10 && text[4] == '-' && text[7] == '-') {
        int year = 0, month = 0, day = 0;
        if (!parse_number(text.substr(0, 4), year) || !parse_number(text.substr(5, 2), month) ||
            !parse_number(text.substr(8, 2), day))
            throw ValidationError("bad date '" + std::string(text) + "'");
        static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
        if (month < 1 || month > 12) throw ValidationError("bad month in '" + std::string(text) + "'");
        const int month_days = kDays[month - 1] + (month == 2 && is_leap(year) ? 1 : 0);
        if (day < 1 || day > month_days)
            throw ValidationError("bad day in '" + std::string(text) + "'");
        int day_of_year = day - 1;
        for (int m = 1; m < month; ++m) day_of_year += kDays[m - 1] + (m == 2 && is_leap(year) ? 1 : 0);
        const double year_days = is_leap(year) ? 366.0 : 365.0;
        return year + day_of_year / year_days;
    }
    double value = 0.0;
    if (!parse_number(text, value) || !std::isfinite(value))
        throw ValidationError("bad timestamp '" + std::string(text) + "'");
    return value;
}

std::vector<Document> read_corpus(std::istream& in) {
    std::vector<Document> docs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ValidationError("line " + std::to_string(line_no) + ": missing TAB separator");
        Document doc;
        try {
            doc.timestamp = parse_timestamp(line.substr(0, tab));
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
        }
        std::istringstream tokens(line.substr(tab + 1));
        std::string tok;
        while (tokens >> tok) {
            for (char& c : tok)
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
            doc.tokens.push_back(std::move(tok));
        }
        if (doc.tokens.empty())
            throw ValidationError("line " + std::to_string(line_no) + ": record has no tokens");
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::vector<Document> read_corpus_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read corpus file '" + path + "'");
    return read_corpus(in);
}

void write_corpus(std::ostream& out, std::span<const Document> documents) {
    for (const auto& d : documents) {
        out << format_double(d.timestamp) << '\t';
        for (std::size_t i = 0; i < d.tokens.size(); ++i) out << (i ? " " : "") << d.tokens[i];
        out << '\n';
    }
}

}  // namespace driftvec
