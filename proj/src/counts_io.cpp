#include "driftvec/counts_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "driftvec/format.hpp"

namespace driftvec {

namespace {
constexpr const char* kHeader = "DRIFTVEC-COUNTS";
constexpr const char* kVersion = "v1";
}  // namespace

void write_counts(std::ostream& out, const CountSeries& series) {
    out << kHeader << ' ' << kVersion << '\n';
    out << "vocabulary " << series.vocabulary.size() << '\n';
    for (const auto& w : series.vocabulary.words()) out << w << '\n';
    out << "steps " << series.steps() << '\n';
    for (std::size_t t = 0; t < series.steps(); ++t)
        out << t << ' ' << format_double(series.grid[t]) << '\n';
    std::size_t total = 0;
    for (const auto& s : series.slices) total += s.nonzeros();
    out << "triplets " << total << '\n';
    for (std::size_t t = 0; t < series.steps(); ++t)
        for (const auto& e : series.slices[t].entries())
            out << t << ' ' << e.word << ' ' << e.context << ' ' << format_double(e.weight) << '\n';
}

void write_counts_file(const std::string& path, const CountSeries& series) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write counts file '" + path + "'");
    write_counts(out, series);
    if (!out) throw Error("failed writing counts file '" + path + "'");
}

CountSeries read_counts(std::istream& in, double gamma, double eta, const std::string& source) {
    TextReader r(in, source);
    r.expect(kHeader);
    r.expect(kVersion);
    r.expect("vocabulary");
    const auto vocab_size = r.count();
    std::vector<std::string> words;
    words.reserve(vocab_size);
    for (std::uint64_t i = 0; i < vocab_size; ++i) words.push_back(r.word());
    r.expect("steps");
    const auto steps = r.count();
    std::vector<double> stamps(steps);
    for (std::uint64_t t = 0; t < steps; ++t) {
        if (r.count() != t) r.fail("time steps must be listed in order");
        stamps[t] = r.real();
    }
    r.expect("triplets");
    const auto n = r.count();
    std::vector<std::vector<Cooccurrence>> entries(steps);
    for (std::uint64_t k = 0; k < n; ++k) {
        const auto t = r.count();
        const auto i = r.count();
        const auto j = r.count();
        const double w = r.real();
        if (t >= steps || i >= vocab_size || j >= vocab_size) r.fail("triplet index out of range");
        entries[t].push_back({static_cast<WordId>(i), static_cast<WordId>(j), w});
    }
    CountSeries series;
    series.vocabulary = Vocabulary(std::move(words));
    series.grid = TimeGrid(std::move(stamps));
    for (auto& e : entries) series.slices.emplace_back(vocab_size, std::move(e), gamma, eta);
    return series;
}

CountSeries read_counts_file(const std::string& path, double gamma, double eta) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read counts file '" + path + "'");
    return read_counts(in, gamma, eta, path);
}

}  // namespace driftvec
