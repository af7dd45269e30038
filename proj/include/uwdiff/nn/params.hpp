#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace uwdiff::nn {

using ParamId = std::size_t;

struct ParamEntry {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grads;
};

/// Named, shaped parameters with one gradient slot per value.
class ParamStore {
public:
    ParamId add(std::string name, std::vector<int> shape);

    std::optional<ParamId> find(const std::string& name) const;
    ParamEntry& entry(ParamId id) { return entries_.at(id); }
    const ParamEntry& entry(ParamId id) const { return entries_.at(id); }
    const double* values(ParamId id) const { return entries_[id].values.data(); }
    double* values(ParamId id) { return entries_[id].values.data(); }

    std::span<ParamEntry> entries() { return entries_; }
    std::span<const ParamEntry> entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    /// Total number of scalar parameters.
    std::size_t scalar_count() const;

    void zero_grads();

private:
    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, ParamId> index_;
};

/// Gradient buffer laid out like a ParamStore. Separate from the store so
/// concurrent backward passes can each own one.
class Gradients {
public:
    Gradients() = default;
    explicit Gradients(const ParamStore& store);

    double* slot(ParamId id) { return slots_[id].data(); }
    const std::vector<double>& operator[](ParamId id) const { return slots_[id]; }
    std::size_t size() const { return slots_.size(); }

    void zero();
    Gradients& operator+=(const Gradients& other);
    Gradients& operator*=(double s);

    /// Adds this buffer into the store's gradient slots.
    void accumulate_into(ParamStore& store) const;

private:
    std::vector<std::vector<double>> slots_;
};

std::size_t shape_elements(const std::vector<int>& shape);

}  // namespace uwdiff::nn
