#pragma once

#include <map>
#include <string>
#include <vector>

#include "dsgnn/numerics/dense_array.hpp"
#include "dsgnn/numerics/random.hpp"

namespace dsgnn {

/// Named learnable arrays, each paired with a gradient slot of the same shape.
class ParamBundle {
public:
    struct Entry {
        DenseArray value;
        DenseArray grad;
    };

    DenseArray& add(const std::string& name, DenseArray value) {
        if (entries_.contains(name)) throw ContractError("ParamBundle: duplicate parameter '" + name + "'");
        DenseArray grad(value.shape(), 0.0);
        auto [it, _] = entries_.emplace(name, Entry{std::move(value), std::move(grad)});
        return it->second.value;
    }

    bool contains(const std::string& name) const { return entries_.contains(name); }

    Entry& entry(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ContractError("ParamBundle: no parameter '" + name + "'");
        return it->second;
    }
    const Entry& entry(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ContractError("ParamBundle: no parameter '" + name + "'");
        return it->second;
    }

    DenseArray& value(const std::string& name) { return entry(name).value; }
    const DenseArray& value(const std::string& name) const { return entry(name).value; }
    DenseArray& grad(const std::string& name) { return entry(name).grad; }
    const DenseArray& grad(const std::string& name) const { return entry(name).grad; }

    void zero_grad() {
        for (auto& [_, e] : entries_) e.grad.fill(0.0);
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [k, _] : entries_) out.push_back(k);
        return out;
    }

    std::size_t size() const noexcept { return entries_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [_, e] : entries_) n += e.value.size();
        return n;
    }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::map<std::string, Entry> entries_;
};

/// Glorot-uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
inline DenseArray glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    DenseArray out(std::move(shape));
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : out.data()) v = rng.uniform(-a, a);
    return out;
}

} // namespace dsgnn
