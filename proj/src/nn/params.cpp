#include "uwdiff/nn/params.hpp"

#include <algorithm>
#include <stdexcept>

namespace uwdiff::nn {

std::size_t shape_elements(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("parameter dimensions must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

ParamId ParamStore::add(std::string name, std::vector<int> shape) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name " + name);
    const std::size_t n = shape_elements(shape);
    const ParamId id = entries_.size();
    index_.emplace(name, id);
    entries_.push_back({std::move(name), std::move(shape), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
    return id;
}

std::optional<ParamId> ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.values.size();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& e : entries_) std::fill(e.grads.begin(), e.grads.end(), 0.0);
}

Gradients::Gradients(const ParamStore& store) {
    slots_.reserve(store.size());
    for (const auto& e : store.entries()) slots_.emplace_back(e.values.size(), 0.0);
}

void Gradients::zero() {
    for (auto& s : slots_) std::fill(s.begin(), s.end(), 0.0);
}

Gradients& Gradients::operator+=(const Gradients& other) {
    if (other.slots_.size() != slots_.size()) throw std::invalid_argument("gradient layout mismatch");
    for (std::size_t p = 0; p < slots_.size(); ++p) {
        auto& dst = slots_[p];
        const auto& src = other.slots_[p];
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    return *this;
}

Gradients& Gradients::operator*=(double s) {
    for (auto& slot : slots_) {
        for (double& v : slot) v *= s;
    }
    return *this;
}

void Gradients::accumulate_into(ParamStore& store) const {
    if (store.size() != slots_.size()) throw std::invalid_argument("gradient layout mismatch");
    for (std::size_t p = 0; p < slots_.size(); ++p) {
        auto& dst = store.entry(p).grads;
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += slots_[p][i];
    }
}

}  // namespace uwdiff::nn
