#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "uwdiff/data.hpp"
#include "uwdiff/ea_search.hpp"
#include "uwdiff/nn/denoiser.hpp"
#include "uwdiff/schedule.hpp"
#include "uwdiff/train.hpp"

namespace uwdiff {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Typed key=value settings. Every key has a built-in default; a config file
/// overrides defaults and explicit flags override the file.
class RunConfig {
public:
    enum class Kind { Int, Seed, Real, Text, Gate };

    struct Key {
        std::string name;
        Kind kind;
        std::string default_value;
        std::string help;
    };

    RunConfig();

    static const std::vector<Key>& keys();
    static bool is_known(std::string_view key);

    /// Parses "key = value" lines; '#' starts a comment. Errors name the
    /// origin and line number.
    void merge_text(std::string_view text, const std::string& origin = "<config>");
    void merge_file(const std::filesystem::path& path);

    /// Validates the key and the value's type.
    void set(const std::string& key, const std::string& value);

    const std::string& get(const std::string& key) const;
    long long get_int(const std::string& key) const;
    std::uint64_t get_seed(const std::string& key) const;
    double get_real(const std::string& key) const;

    /// Every key with its current value, one "key=value" line each.
    std::string dump() const;

    NoiseSchedule schedule() const;
    CorpusSpec corpus() const;
    TrainConfig train() const;
    EAConfig ea() const;
    nn::DenoiserConfig model() const;
    nn::GateMode gate() const;

    /// Sequence spec: "uniform:S", "piecewise" (configured split and strides),
    /// "piecewise:m:d1:d2", an explicit comma list, or a path to a file holding one.
    SamplingSequence sequence(const std::string& spec) const;
    SamplingSequence sequence() const { return sequence(get("sequence")); }

    /// Comma-separated positive integers, e.g. the benchmark step counts.
    std::vector<int> int_list(const std::string& key) const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace uwdiff
