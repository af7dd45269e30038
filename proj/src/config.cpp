#include "uwdiff/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace uwdiff {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return !text.empty() && ec == std::errc() && ptr == end;
}

using K = RunConfig::Kind;

const RunConfig::Key* find_key(std::string_view name) {
    const auto& ks = RunConfig::keys();
    auto it = std::find_if(ks.begin(), ks.end(), [&](const RunConfig::Key& k) { return k.name == name; });
    return it == ks.end() ? nullptr : &*it;
}

void check_value(const RunConfig::Key& key, const std::string& value) {
    bool ok = true;
    switch (key.kind) {
        case K::Int: {
            long long v = 0;
            ok = parse_number(value, v);
            break;
        }
        case K::Seed: {
            std::uint64_t v = 0;
            ok = parse_number(value, v);
            break;
        }
        case K::Real: {
            double v = 0;
            ok = parse_number(value, v);
            break;
        }
        case K::Gate: ok = value == "additive" || value == "multiplicative"; break;
        case K::Text: ok = !value.empty(); break;
    }
    if (!ok) throw ConfigError("invalid value '" + value + "' for key '" + key.name + "'");
}

}  // namespace

const std::vector<RunConfig::Key>& RunConfig::keys() {
    static const std::vector<Key> table = {
        {"seed", K::Seed, "0", "seed for training, sampling and search"},
        {"data_seed", K::Seed, "2023", "corpus master seed"},
        {"image_size", K::Int, "64", "corpus and training resolution"},
        {"train_count", K::Int, "512", "training pairs"},
        {"val_count", K::Int, "32", "validation pairs"},
        {"test_count", K::Int, "16", "test pairs"},
        {"gain_r", K::Real, "0.45", "red attenuation"},
        {"gain_g", K::Real, "0.85", "green attenuation"},
        {"gain_b", K::Real, "0.75", "blue attenuation"},
        {"blur_sigma", K::Real, "1.2", "degradation blur"},
        {"noise_sigma", K::Real, "0.01", "degradation sensor noise"},
        {"haze_r", K::Real, "-0.1", "haze color red, in [-1, 1]"},
        {"haze_g", K::Real, "0.25", "haze color green, in [-1, 1]"},
        {"haze_b", K::Real, "0.15", "haze color blue, in [-1, 1]"},
        {"haze_weight", K::Real, "0.25", "haze blend weight"},
        {"T", K::Int, "2000", "diffusion steps"},
        {"beta_min", K::Real, "1e-06", "first beta"},
        {"beta_max", K::Real, "0.01", "last beta"},
        {"learning_rate", K::Real, "0.0001", "Adam step size"},
        {"batch_size", K::Int, "8", "pairs per step"},
        {"steps", K::Int, "20000", "training steps"},
        {"checkpoint_interval", K::Int, "1000", "steps between checkpoints"},
        {"base_width", K::Int, "16", "denoiser width C"},
        {"time_dim", K::Int, "64", "time embedding size"},
        {"attn_kernel", K::Int, "3", "channel attention kernel"},
        {"ff_mult", K::Int, "2", "feed-forward expansion"},
        {"gate", K::Gate, "additive", "channel attention gate: additive or multiplicative"},
        {"eta", K::Real, "0", "sampling stochasticity in [0, 1]"},
        {"sequence", K::Text, "uniform:10", "sampling sequence spec"},
        {"piecewise_mid", K::Int, "480", "piecewise split point m"},
        {"piecewise_dense", K::Int, "80", "stride below m"},
        {"piecewise_sparse", K::Int, "380", "stride above m"},
        {"ea_gene_length", K::Int, "11", "sequence length searched"},
        {"ea_pc", K::Real, "0.5", "crossover probability"},
        {"ea_pm", K::Real, "0.1", "mutation probability"},
        {"ea_epochs", K::Int, "50", "search iterations"},
        {"ea_capacity", K::Int, "10", "elite queue size K"},
        {"oracle_sigma0", K::Real, "0.1", "prior std of the oracle denoiser in oracle search mode"},
        {"benchmark_steps", K::Text, "40,20,10", "step counts timed by benchmark"},
    };
    return table;
}

bool RunConfig::is_known(std::string_view key) { return find_key(key) != nullptr; }

RunConfig::RunConfig() {
    for (const auto& k : keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const Key* k = find_key(key);
    if (!k) throw ConfigError("unknown key '" + key + "'");
    check_value(*k, value);
    values_[key] = value;
}

void RunConfig::merge_text(std::string_view text, const std::string& origin) {
    std::istringstream in{std::string(text)};
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        const std::string body = trim(std::string_view(line).substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        const std::string where = origin + ":" + std::to_string(number) + ": ";
        if (eq == std::string::npos) throw ConfigError(where + "expected key=value, got '" + body + "'");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        try {
            set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    merge_text(text.str(), path.string());
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
    return it->second;
}

long long RunConfig::get_int(const std::string& key) const {
    long long v = 0;
    if (!parse_number(get(key), v)) throw ConfigError("key '" + key + "' is not an integer");
    return v;
}

std::uint64_t RunConfig::get_seed(const std::string& key) const {
    std::uint64_t v = 0;
    if (!parse_number(get(key), v)) throw ConfigError("key '" + key + "' is not an unsigned integer");
    return v;
}

double RunConfig::get_real(const std::string& key) const {
    double v = 0;
    if (!parse_number(get(key), v)) throw ConfigError("key '" + key + "' is not a number");
    return v;
}

std::string RunConfig::dump() const {
    std::string out;
    for (const auto& k : keys()) out += k.name + "=" + values_.at(k.name) + "\n";
    return out;
}

NoiseSchedule RunConfig::schedule() const {
    return linear_beta_schedule(static_cast<int>(get_int("T")), get_real("beta_min"), get_real("beta_max"));
}

CorpusSpec RunConfig::corpus() const {
    CorpusSpec spec;
    spec.seed = get_seed("data_seed");
    spec.image_size = static_cast<int>(get_int("image_size"));
    spec.train_count = static_cast<int>(get_int("train_count"));
    spec.val_count = static_cast<int>(get_int("val_count"));
    spec.test_count = static_cast<int>(get_int("test_count"));
    auto& d = spec.degradation;
    d.gains = {get_real("gain_r"), get_real("gain_g"), get_real("gain_b")};
    d.blur_sigma = get_real("blur_sigma");
    d.noise_sigma = get_real("noise_sigma");
    d.haze_color = {get_real("haze_r"), get_real("haze_g"), get_real("haze_b")};
    d.haze_weight = get_real("haze_weight");
    d.validate();
    if (spec.train_count < 0 || spec.val_count < 0 || spec.test_count < 0) {
        throw ConfigError("split counts must be >= 0");
    }
    return spec;
}

TrainConfig RunConfig::train() const {
    TrainConfig c;
    c.learning_rate = get_real("learning_rate");
    c.batch_size = static_cast<int>(get_int("batch_size"));
    c.total_steps = static_cast<int>(get_int("steps"));
    c.diffusion_steps = static_cast<int>(get_int("T"));
    c.checkpoint_interval = static_cast<int>(get_int("checkpoint_interval"));
    c.seed = get_seed("seed");
    c.image_size = static_cast<int>(get_int("image_size"));
    c.validate();
    return c;
}

EAConfig RunConfig::ea() const {
    EAConfig c;
    c.gene_length = static_cast<int>(get_int("ea_gene_length"));
    c.crossover_prob = get_real("ea_pc");
    c.mutation_prob = get_real("ea_pm");
    c.epochs = static_cast<int>(get_int("ea_epochs"));
    c.capacity = static_cast<int>(get_int("ea_capacity"));
    c.seed = get_seed("seed");
    c.validate();
    return c;
}

nn::GateMode RunConfig::gate() const {
    return get("gate") == "multiplicative" ? nn::GateMode::Multiplicative : nn::GateMode::Additive;
}

nn::DenoiserConfig RunConfig::model() const {
    nn::DenoiserConfig c;
    c.base_width = static_cast<int>(get_int("base_width"));
    c.time_dim = static_cast<int>(get_int("time_dim"));
    c.attn_kernel = static_cast<int>(get_int("attn_kernel"));
    c.ff_mult = static_cast<int>(get_int("ff_mult"));
    c.gate = gate();
    return c;
}

SamplingSequence RunConfig::sequence(const std::string& spec) const {
    const int T = static_cast<int>(get_int("T"));
    if (spec.starts_with("uniform:")) {
        int s = 0;
        if (!parse_number(spec.substr(8), s)) throw ConfigError("bad uniform sequence spec '" + spec + "'");
        return uniform_sequence(T, s);
    }
    if (spec == "piecewise") {
        return piecewise_sequence(T, static_cast<int>(get_int("piecewise_mid")),
                                  static_cast<int>(get_int("piecewise_dense")),
                                  static_cast<int>(get_int("piecewise_sparse")));
    }
    if (spec.starts_with("piecewise:")) {
        int m = 0, d1 = 0, d2 = 0;
        char tail = 0;
        if (std::sscanf(spec.c_str() + 10, "%d:%d:%d%c", &m, &d1, &d2, &tail) != 3) {
            throw ConfigError("bad piecewise sequence spec '" + spec + "'");
        }
        return piecewise_sequence(T, m, d1, d2);
    }
    if (!spec.empty() && spec.find_first_not_of("0123456789, \t") == std::string::npos) {
        return parse_sequence(spec, T);
    }
    std::ifstream in(spec);
    if (!in) throw ConfigError("sequence spec '" + spec + "' is neither a known form nor a readable file");
    std::string line;
    std::getline(in, line);
    return parse_sequence(line, T);
}

std::vector<int> RunConfig::int_list(const std::string& key) const {
    std::vector<int> out;
    std::stringstream in(get(key));
    std::string field;
    while (std::getline(in, field, ',')) {
        int v = 0;
        if (!parse_number(trim(field), v) || v <= 0) {
            throw ConfigError("key '" + key + "' must be a comma list of positive integers");
        }
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("key '" + key + "' is empty");
    return out;
}

}  // namespace uwdiff
