#include "driftvec/commands.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "driftvec/baselines.hpp"
#include "driftvec/checkpoint.hpp"
#include "driftvec/counts_io.hpp"
#include "driftvec/csv.hpp"
#include "driftvec/eval.hpp"
#include "driftvec/filter.hpp"
#include "driftvec/format.hpp"
#include "driftvec/smooth.hpp"
#include "driftvec/synthetic.hpp"

namespace fs = std::filesystem;

namespace driftvec {

namespace {

/// Exclusive lock on an output directory, held for the command's lifetime.
class OutputLock {
public:
    explicit OutputLock(const std::string& dir) {
        fs::create_directories(dir);
        path_ = (fs::path(dir) / ".driftvec.lock").string();
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0)
            throw Error("output directory '" + dir + "' is locked by another run (remove " + path_ +
                        " if it is stale)");
    }
    ~OutputLock() {
        ::close(fd_);
        ::unlink(path_.c_str());
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    std::string path_;
    int fd_ = -1;
};

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path + "'");
    return out;
}

void save_config(const RunConfig& config, const std::string& name) {
    auto out = open_output(join(config.out, name));
    write_config(out, config);
}

CountSeries load_counts(const RunConfig& config, const std::string& name) {
    const std::string path = join(config.input_dir(), name);
    if (!fs::exists(path))
        throw ValidationError("missing '" + path + "' (run preprocess first)");
    return read_counts_file(path, config.hyper.gamma, config.hyper.eta);
}

std::string checkpoint_path(const RunConfig& config, Method method, bool for_output) {
    return join(for_output ? config.out : config.input_dir(), to_string(method) + ".ckpt");
}

/// Training log with header step,iteration,value. On resume, rows accepted by
/// `keep` survive and new rows are appended.
class TrainingLog {
public:
    template <typename Keep>
    TrainingLog(const std::string& path, bool resume, Keep keep) {
        std::vector<std::string> kept;
        if (resume) {
            std::ifstream in(path);
            std::string line;
            std::getline(in, line);
            while (std::getline(in, line)) {
                const auto cells = csv_split(line);
                if (cells.size() == 3 && keep(cells)) kept.push_back(line);
            }
        }
        out_ = open_output(path);
        out_ << "step,iteration,value\n";
        for (const auto& line : kept) out_ << line << '\n';
    }

    void row(std::string_view step, std::size_t iteration, double value) {
        out_ << csv_escape(step) << ',' << iteration << ',' << format_double(value) << '\n';
    }
    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

CheckpointHeader make_header(const CountSeries& counts, const RunConfig& config) {
    return {counts.vocabulary, counts.grid, config.hyper, config.seed};
}

void check_resume_header(const CheckpointHeader& saved, const CountSeries& counts,
                         const RunConfig& config, const std::string& path) {
    if (saved.vocabulary.words() != counts.vocabulary.words() ||
        saved.grid.timestamps() != counts.grid.timestamps())
        throw ValidationError("cannot resume from '" + path + "': counts differ from the checkpoint's");
    if (saved.seed != config.seed ||
        hyperparameter_entries(saved.hyper) != hyperparameter_entries(config.hyper))
        throw ValidationError("cannot resume from '" + path +
                              "': seed or hyperparameters differ from the checkpoint's");
}

// Thrown by observers to end a run early at a checkpoint boundary.
struct StopRequested {};

void train_filter(const RunConfig& config, const CountSeries& counts, std::ostream& log) {
    const std::string path = checkpoint_path(config, Method::Filter, true);
    FilterCheckpoint ckpt{make_header(counts, config), {}};
    if (config.resume && fs::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        FilterCheckpoint saved = read_filter_checkpoint(in, path);
        check_resume_header(saved.header, counts, config, path);
        ckpt.posteriors = std::move(saved.posteriors);
        log << "resuming filter after " << ckpt.posteriors.size() << " of " << counts.steps()
            << " steps\n";
    }
    const std::size_t done = ckpt.posteriors.size();
    TrainingLog training_log(join(config.out, "filter_log.csv"), config.resume,
                             [&](const std::vector<std::string>& cells) {
                                 return parse_unsigned(cells[0]) < done;
                             });
    FilterOptions options = filter_options(config.hyper);
    options.init_jitter = config.init_jitter;
    options.early_stop_window = config.early_stop_window;
    options.early_stop_tolerance = config.early_stop_tolerance;

    std::size_t completed_now = 0;
    auto observer = [&](std::size_t t, const FilterPosterior& post, const FilterStepStats& stats) {
        for (std::size_t k = 0; k < stats.elbo_trace.size(); ++k)
            training_log.row(std::to_string(t), k + 1, stats.elbo_trace[k]);
        training_log.flush();
        ckpt.posteriors.push_back(post);
        save_checkpoint(path, ckpt);
        log << "filter step " << t + 1 << "/" << counts.steps() << ": " << stats.iterations
            << " iterations, ELBO " << format_double(stats.final_elbo) << '\n';
        if (config.stop_after > 0 && ++completed_now >= config.stop_after) throw StopRequested{};
    };
    try {
        run_filter(counts, config.hyper, options, config.seed, ckpt.posteriors, observer);
    } catch (const StopRequested&) {
        log << "stopped after " << completed_now << " steps; resume with resume = true\n";
        return;
    }
    if (done == counts.steps()) save_checkpoint(path, ckpt);
}

void train_smooth(const RunConfig& config, const CountSeries& counts, std::ostream& log) {
    if (config.hyper.batch_size > counts.vocabulary.size())
        throw ValidationError("batch_size (" + std::to_string(config.hyper.batch_size) +
                              ") exceeds the vocabulary size (" +
                              std::to_string(counts.vocabulary.size()) + ")");
    if (!std::isfinite(config.hyper.prior_variance))
        throw ValidationError("smoothing needs a finite prior_variance");
    const std::string path = checkpoint_path(config, Method::Smooth, true);
    const PriorPrecision prior = prior_precision(
        counts.steps(), step_variances(counts.grid, config.hyper.diffusion),
        config.hyper.prior_variance);
    const NaturalBasis basis(prior);
    const SmoothOptions options = smooth_options(config.hyper);
    SmoothCheckpoint ckpt{make_header(counts, config),
                          initial_smooth_state(counts.vocabulary.size(), config.hyper.dimension,
                                               basis, options)};
    if (config.resume && fs::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        SmoothCheckpoint saved = read_smooth_checkpoint(in, path);
        check_resume_header(saved.header, counts, config, path);
        ckpt.state = std::move(saved.state);
        log << "resuming smoother at iteration " << ckpt.state.iteration << '\n';
    }
    const std::size_t done = ckpt.state.iteration;
    TrainingLog training_log(join(config.out, "smooth_log.csv"), config.resume,
                             [&](const std::vector<std::string>& cells) {
                                 return parse_unsigned(cells[1]) <= done;
                             });
    const SkipGramLikelihood likelihood(counts);
    const std::size_t total = options.pretrain_steps + options.steps;
    std::size_t budget = config.stop_after > 0 ? config.stop_after : total;
    const std::size_t chunk = config.checkpoint_every > 0 ? config.checkpoint_every : total;
    auto observer = [&](std::size_t iteration, double elbo) {
        training_log.row(iteration <= options.pretrain_steps ? "minibatch" : "full", iteration, elbo);
    };
    while (ckpt.state.iteration < total && budget > 0) {
        const std::size_t n = std::min(chunk, budget);
        run_smoother(likelihood, prior, options, config.seed, ckpt.state, observer, n);
        budget -= n;
        training_log.flush();
        save_checkpoint(path, ckpt);
        log << "smoothing iteration " << ckpt.state.iteration << "/" << total << '\n';
    }
    if (ckpt.state.iteration == done) save_checkpoint(path, ckpt);
}

void train_static_method(const RunConfig& config, const CountSeries& counts, Method method,
                         std::ostream& log) {
    TrainingLog training_log(join(config.out, to_string(method) + "_log.csv"), false,
                             [](const std::vector<std::string>&) { return false; });
    auto observer = [&](std::size_t t, const StaticFit& fit) {
        for (std::size_t k = 0; k < fit.objective_trace.size(); ++k)
            training_log.row(std::to_string(t), k + 1, fit.objective_trace[k]);
        log << to_string(method) << " step " << t + 1 << "/" << counts.steps() << ": objective "
            << format_double(fit.objective) << '\n';
    };
    const StaticOptions options = static_options(config.hyper);
    const StaticTrajectory traj =
        method == Method::Sgi
            ? run_sgi(counts, options, config.hyper.dimension, config.init_jitter, config.seed, observer)
            : run_sgp(counts, options, config.hyper.dimension, config.init_jitter, config.seed, observer);
    StaticCheckpoint ckpt{make_header(counts, config), method, traj.rotations, {}, traj.embeddings};
    for (const auto& fit : traj.fits) ckpt.objectives.push_back(fit.objective);
    save_checkpoint(checkpoint_path(config, method, true), ckpt);
}

std::vector<std::size_t> parse_index_list(const std::string& text) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(text)) out.push_back(static_cast<std::size_t>(parse_unsigned(item)));
    return out;
}

WordId lookup_word(const Vocabulary& vocabulary, const std::string& word) {
    if (auto id = vocabulary.find(word)) return *id;
    std::string message = "word '" + word + "' is not in the vocabulary";
    const auto close = nearest_spellings(vocabulary, word, 5);
    if (!close.empty()) {
        message += "; nearest spellings:";
        for (const auto& c : close) message += " " + c;
    }
    throw ValidationError(message);
}

}  // namespace

std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diagonal = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diagonal + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diagonal = up;
        }
    }
    return row[b.size()];
}

std::vector<std::string> nearest_spellings(const Vocabulary& vocabulary, std::string_view word,
                                           std::size_t k) {
    std::vector<std::pair<std::size_t, WordId>> scored;
    for (std::size_t i = 0; i < vocabulary.size(); ++i)
        scored.emplace_back(edit_distance(word, vocabulary.word(static_cast<WordId>(i))),
                            static_cast<WordId>(i));
    std::sort(scored.begin(), scored.end());
    std::vector<std::string> out;
    for (std::size_t r = 0; r < std::min(k, scored.size()); ++r)
        out.push_back(vocabulary.word(scored[r].second));
    return out;
}

void cmd_synth(const RunConfig& config, std::ostream& log) {
    config.validate();
    OutputLock lock(config.out);
    const SyntheticCorpus corpus = generate_synthetic_corpus(config.synthetic_options());
    {
        auto out = open_output(join(config.out, "corpus.tsv"));
        write_corpus(out, corpus.documents);
    }
    {
        auto out = open_output(join(config.out, "synth_info.txt"));
        out << "planted_word = " << corpus.planted_word << '\n'
            << "neighbor_before = " << corpus.neighbor_before << '\n'
            << "neighbor_after = " << corpus.neighbor_after << '\n'
            << "swap_step = " << corpus.swap_step << '\n';
    }
    save_config(config, "config-synth.txt");
    log << "wrote " << corpus.documents.size() << " documents over " << config.synth_steps
        << " steps to " << join(config.out, "corpus.tsv") << '\n';
}

void cmd_preprocess(const RunConfig& config, std::ostream& log) {
    config.validate();
    if (config.corpus.empty()) throw ValidationError("preprocess needs corpus = <path>");
    OutputLock lock(config.out);
    const BinnedCorpus binned =
        bin_documents(read_corpus_file(config.corpus), config.binning, config.bin_width);
    const auto [train, heldout] = split_heldout(binned, config.heldout_fraction, config.seed);
    const Vocabulary vocabulary = build_vocabulary(train.steps, config.hyper.vocab_size);
    if (vocabulary.size() == 0) throw ValidationError("the corpus yields an empty vocabulary");
    const CountSeries counts = build_count_series(train, vocabulary, config.hyper.window,
                                                  config.hyper.gamma, config.hyper.eta);
    const CountSeries held = build_count_series(heldout, vocabulary, config.hyper.window,
                                                config.hyper.gamma, config.hyper.eta);
    write_counts_file(join(config.out, "counts.txt"), counts);
    write_counts_file(join(config.out, "heldout.txt"), held);
    save_config(config, "config-preprocess.txt");
    log << "vocabulary " << vocabulary.size() << " words, " << counts.steps() << " steps\n";
    for (std::size_t t = 0; t < counts.steps(); ++t)
        log << "  step " << t << " (" << format_double(counts.grid[t]) << "): positive mass "
            << format_double(counts.slices[t].total_positive()) << ", held-out "
            << format_double(held.slices[t].total_positive()) << '\n';
}

void cmd_train(const RunConfig& config, std::ostream& log) {
    config.validate();
    const CountSeries counts = load_counts(config, "counts.txt");
    OutputLock lock(config.out);
    save_config(config, "config-train-" + to_string(config.method) + ".txt");
    switch (config.method) {
        case Method::Filter: train_filter(config, counts, log); break;
        case Method::Smooth: train_smooth(config, counts, log); break;
        case Method::Sgi:
        case Method::Sgp: train_static_method(config, counts, config.method, log); break;
    }
}

void cmd_evaluate(const RunConfig& config, std::ostream& log) {
    config.validate();
    const CountSeries heldout = load_counts(config, "heldout.txt");
    std::vector<Method> methods;
    for (const auto& m : split_list(config.methods)) methods.push_back(parse_method(m));
    if (methods.empty()) throw ValidationError("no methods to evaluate");
    std::vector<std::string> missing;
    for (Method m : methods)
        if (!fs::exists(checkpoint_path(config, m, false))) missing.push_back(checkpoint_path(config, m, false));
    if (!missing.empty()) {
        std::string message = "missing checkpoints:";
        for (const auto& p : missing) message += " " + p;
        throw ValidationError(message);
    }
    OutputLock lock(config.out);
    std::vector<PredictiveRecord> records;
    for (Method m : methods) {
        const LoadedTrajectory loaded = load_trajectory(checkpoint_path(config, m, false));
        if (loaded.header.vocabulary.words() != heldout.vocabulary.words() ||
            loaded.header.grid.timestamps() != heldout.grid.timestamps())
            throw ValidationError("checkpoint for " + to_string(m) +
                                  " does not match the held-out counts' vocabulary or time grid");
        std::vector<std::size_t> skipped;
        auto rows = heldout_protocol(m, loaded.embeddings, heldout, &skipped);
        for (std::size_t t : skipped)
            log << "warning: step " << t << " has no held-out pairs; skipped for " << to_string(m) << '\n';
        // A single-step series only has the t = 0 record.
        const std::size_t first =
            std::any_of(rows.begin(), rows.end(), [](const PredictiveRecord& r) { return r.t >= 1; }) ? 1 : 0;
        if (!rows.empty())
            log << to_string(m) << ": mean predictive log-likelihood (t >= " << first << ") "
                << format_double(mean_predictive(rows, first)) << '\n';
        records.insert(records.end(), rows.begin(), rows.end());
    }
    auto out = open_output(join(config.out, "predictive.csv"));
    write_predictive_csv(out, records);
    save_config(config, "config-evaluate.txt");
}

void cmd_analyze(const RunConfig& config, std::ostream& log) {
    config.validate();
    const std::string path = checkpoint_path(config, config.method, false);
    if (!fs::exists(path)) throw ValidationError("missing checkpoint '" + path + "'");
    const LoadedTrajectory loaded = load_trajectory(path);
    const Vocabulary& vocabulary = loaded.header.vocabulary;
    const auto& traj = loaded.embeddings;
    const std::size_t last = traj.size() - 1;
    const std::size_t t1 = config.t1 == static_cast<std::size_t>(-1) ? last : config.t1;
    if (config.t0 > last || t1 > last) throw ValidationError("t0/t1 exceed the number of steps");

    std::vector<WordId> queries;
    for (const auto& w : split_list(config.words)) queries.push_back(lookup_word(vocabulary, w));
    std::vector<std::pair<WordId, WordId>> pairs;
    for (const auto& p : split_list(config.pairs)) {
        const auto parts = split_list(p, ':');
        if (parts.size() != 2) throw ValidationError("pairs must look like a:b, got '" + p + "'");
        pairs.emplace_back(lookup_word(vocabulary, parts[0]), lookup_word(vocabulary, parts[1]));
    }
    std::vector<std::size_t> deltas = parse_index_list(config.deltas);

    // Compute everything first so a bad query leaves no partial outputs.
    const auto ranked = top_changing_words(traj, config.t0, t1, config.top_k);
    const auto histograms = displacement_histogram(traj, config.t_ref, deltas, config.bins);

    OutputLock lock(config.out);
    {
        auto out = open_output(join(config.out, "topchanges.csv"));
        write_topchanges_csv(out, vocabulary, config.t0, t1, ranked);
    }
    {
        auto out = open_output(join(config.out, "histogram.csv"));
        write_histogram_csv(out, config.t_ref, histograms);
    }
    {
        auto out = open_output(join(config.out, "similarity.csv"));
        CsvWriter csv(out, {"t", "timestamp", "word_a", "word_b", "similarity", "degenerate"});
        for (const auto& [a, b] : pairs)
            for (const auto& p : cosine_similarity_series(traj, a, b)) {
                csv.field(p.t).field(loaded.header.grid[p.t]).field(vocabulary.word(a));
                csv.field(vocabulary.word(b)).field(p.value).field(p.degenerate ? 1 : 0);
                csv.end_row();
            }
    }
    {
        auto out = open_output(join(config.out, "neighbors.csv"));
        CsvWriter csv(out, {"query", "t", "rank", "neighbor", "similarity"});
        for (WordId q : queries)
            for (std::size_t t : {config.t0, t1}) {
                const auto nn = nearest_neighbors(traj, q, t, config.neighbors_k);
                for (std::size_t r = 0; r < nn.size(); ++r) {
                    csv.field(vocabulary.word(q)).field(t).field(r + 1);
                    csv.field(vocabulary.word(nn[r].word)).field(nn[r].score);
                    csv.end_row();
                }
                if (config.t0 == t1) break;
            }
    }
    save_config(config, "config-analyze-" + to_string(config.method) + ".txt");
    log << "wrote analytics for " << to_string(config.method) << " to " << config.out << '\n';
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dynamic word embeddings: filtering, smoothing and static baselines"};
    app.require_subcommand(1);
    std::string config_path, method, out_dir;
    std::vector<std::string> assignments;
    std::uint64_t seed = 0;
    struct Entry {
        CLI::App* app;
        void (*run)(const RunConfig&, std::ostream&);
    };
    std::vector<Entry> entries;
    const std::pair<const char*, const char*> names[] = {
        {"synth", "generate a synthetic drifting corpus"},
        {"preprocess", "bin a corpus and build count statistics"},
        {"train", "fit embeddings with one method"},
        {"evaluate", "held-out predictive log-likelihood per method"},
        {"analyze", "word-change analytics from a checkpoint"}};
    void (*runners[])(const RunConfig&, std::ostream&) = {cmd_synth, cmd_preprocess, cmd_train,
                                                           cmd_evaluate, cmd_analyze};
    for (std::size_t k = 0; k < 5; ++k) {
        CLI::App* sub = app.add_subcommand(names[k].first, names[k].second);
        sub->add_option("--config", config_path, "key = value config file");
        sub->add_option("--seed", seed, "seed for every random stream");
        sub->add_option("--method", method, "filter, smooth, sgi or sgp");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--set", assignments, "override: key=value (repeatable)");
        entries.push_back({sub, runners[k]});
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }
    try {
        for (const auto& entry : entries) {
            if (!entry.app->parsed()) continue;
            RunConfig config;
            if (!config_path.empty()) read_config_file(config_path, config);
            for (const auto& a : assignments) {
                const auto eq = a.find('=');
                if (eq == std::string::npos)
                    throw ValidationError("--set expects key=value, got '" + a + "'");
                set_config_value(config, a.substr(0, eq), a.substr(eq + 1));
            }
            if (entry.app->count("--seed")) config.seed = seed;
            if (entry.app->count("--out")) config.out = out_dir;
            if (entry.app->count("--method")) {
                config.method = parse_method(method);
                config.methods = to_string(config.method);
            }
            entry.run(config, out);
        }
        return 0;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace driftvec
