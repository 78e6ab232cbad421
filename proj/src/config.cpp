#include "driftvec/config.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <variant>

#include "driftvec/format.hpp"

namespace driftvec {

namespace {

// Seeds get their own alternative: std::uint64_t may be the same type as std::size_t.
struct SeedRef {
    std::uint64_t* value;
};

using FieldRef =
    std::variant<double*, std::size_t*, SeedRef, bool*, std::string*, BinningRule*, Method*>;

struct Field {
    const char* key;
    FieldRef ref;
};

std::vector<Field> fields(RunConfig& c) {
    return {
        {"corpus", &c.corpus},
        {"data_dir", &c.data_dir},
        {"out", &c.out},
        {"binning", &c.binning},
        {"bin_width", &c.bin_width},
        {"heldout_fraction", &c.heldout_fraction},
        {"method", &c.method},
        {"methods", &c.methods},
        {"seed", SeedRef{&c.seed}},
        {"init_jitter", &c.init_jitter},
        {"early_stop_window", &c.early_stop_window},
        {"early_stop_tolerance", &c.early_stop_tolerance},
        {"checkpoint_every", &c.checkpoint_every},
        {"stop_after", &c.stop_after},
        {"resume", &c.resume},
        {"words", &c.words},
        {"pairs", &c.pairs},
        {"top_k", &c.top_k},
        {"neighbors_k", &c.neighbors_k},
        {"t0", &c.t0},
        {"t1", &c.t1},
        {"t_ref", &c.t_ref},
        {"deltas", &c.deltas},
        {"bins", &c.bins},
        {"synth_vocab", &c.synth_vocab},
        {"synth_steps", &c.synth_steps},
        {"synth_dimension", &c.synth_dimension},
        {"synth_docs", &c.synth_docs},
        {"synth_drift", &c.synth_drift},
        {"synth_min_length", &c.synth_min_length},
        {"synth_max_length", &c.synth_max_length},
        {"synth_start_year", &c.synth_start_year},
        {"synth_plant_swap", &c.synth_plant_swap},
    };
}

bool parse_bool(std::string_view text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ValidationError("expected true or false");
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string value_text(const FieldRef& ref) {
    struct {
        std::string operator()(double* v) const { return format_double(*v); }
        std::string operator()(std::size_t* v) const {
            return *v == static_cast<std::size_t>(-1) ? "-1" : std::to_string(*v);
        }
        std::string operator()(SeedRef v) const { return std::to_string(*v.value); }
        std::string operator()(bool* v) const { return *v ? "true" : "false"; }
        std::string operator()(std::string* v) const { return *v; }
        std::string operator()(BinningRule* v) const { return to_string(*v); }
        std::string operator()(Method* v) const { return to_string(*v); }
    } visitor;
    return std::visit(visitor, ref);
}

void assign(const FieldRef& ref, std::string_view text) {
    struct {
        std::string_view text;
        void operator()(double* v) const { *v = parse_double(text); }
        void operator()(std::size_t* v) const {
            *v = text == "-1" ? static_cast<std::size_t>(-1)
                              : static_cast<std::size_t>(parse_unsigned(text));
        }
        void operator()(SeedRef v) const { *v.value = parse_unsigned(text); }
        void operator()(bool* v) const { *v = parse_bool(text); }
        void operator()(std::string* v) const { *v = std::string(text); }
        void operator()(BinningRule* v) const { *v = parse_binning_rule(text); }
        void operator()(Method* v) const { *v = parse_method(text); }
    } visitor{text};
    std::visit(visitor, ref);
}

}  // namespace

void RunConfig::validate() const {
    hyper.validate();
    if (!(bin_width > 0.0)) throw ValidationError("bin_width must be positive");
    if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0))
        throw ValidationError("heldout_fraction must lie in [0, 1)");
    if (!(init_jitter >= 0.0)) throw ValidationError("init_jitter must be non-negative");
    if (!(early_stop_tolerance >= 0.0)) throw ValidationError("early_stop_tolerance must be non-negative");
    if (bins == 0) throw ValidationError("bins must be at least 1");
    for (const auto& m : split_list(methods)) parse_method(m);
    if (synth_vocab < 3 || synth_steps == 0 || synth_dimension == 0 || synth_docs == 0)
        throw ValidationError("synthetic corpus needs >= 3 words and positive steps, dimension, docs");
    if (synth_min_length < 2 || synth_max_length < synth_min_length)
        throw ValidationError("synthetic document lengths must satisfy 2 <= min <= max");
}

SyntheticOptions RunConfig::synthetic_options() const {
    SyntheticOptions o;
    o.vocab_size = synth_vocab;
    o.steps = synth_steps;
    o.dimension = synth_dimension;
    o.docs_per_step = synth_docs;
    o.drift_rate = synth_drift;
    o.min_length = synth_min_length;
    o.max_length = synth_max_length;
    o.start_year = synth_start_year;
    o.plant_swap = synth_plant_swap;
    o.seed = seed;
    return o;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
    try {
        if (assign_hyperparameter(config.hyper, key, value)) return;
        for (const auto& f : fields(config))
            if (key == f.key) {
                assign(f.ref, value);
                return;
            }
    } catch (const ValidationError& e) {
        throw ValidationError("invalid value '" + std::string(value) + "' for " + std::string(key) +
                              ": " + e.what());
    }
    throw ValidationError("unknown configuration key '" + std::string(key) + "'");
}

void read_config(std::istream& in, RunConfig& config, const std::string& source) {
    std::string line;
    for (std::size_t number = 1; std::getline(in, line); ++number) {
        const auto hash = line.find('#');
        const std::string body = trim(std::string_view(line).substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ValidationError(source + ": line " + std::to_string(number) + ": expected key = value");
        try {
            set_config_value(config, trim(std::string_view(body).substr(0, eq)),
                             trim(std::string_view(body).substr(eq + 1)));
        } catch (const ValidationError& e) {
            throw ValidationError(source + ": line " + std::to_string(number) + ": " + e.what());
        }
    }
}

void read_config_file(const std::string& path, RunConfig& config) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config file '" + path + "'");
    read_config(in, config, path);
}

void write_config(std::ostream& out, const RunConfig& config) {
    for (const auto& [k, v] : hyperparameter_entries(config.hyper)) out << k << " = " << v << '\n';
    RunConfig copy = config;
    for (const auto& f : fields(copy)) out << f.key << " = " << value_text(f.ref) << '\n';
}

std::vector<std::string> split_list(std::string_view text, char separator) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = std::min(text.find(separator, start), text.size());
        std::string item = trim(text.substr(start, end - start));
        if (!item.empty()) out.push_back(std::move(item));
        start = end + 1;
    }
    return out;
}

}  // namespace driftvec
