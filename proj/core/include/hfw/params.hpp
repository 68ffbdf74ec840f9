#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hfw/tensor.hpp"

namespace hfw {

// Named store of trainable tensors. Names are unique and stable; they are the
// checkpoint schema. Initialization derives a per-name stream from the store
// seed, so a given (seed, name) always yields the same values regardless of
// what else the model contains.
template <typename T>
class ParamStore {
  public:
    explicit ParamStore(uint64_t seed) : seed_(seed) {}

    Tensor<T> add(const std::string& name, Tensor<T> t) {
        if (index_.count(name)) throw StateError("duplicate parameter name '" + name + "'");
        t.set_requires_grad(true).set_name(name);
        index_[name] = items_.size();
        items_.emplace_back(name, t);
        return t;
    }

    Tensor<T> uniform_fanin(const std::string& name, Shape shape, int64_t fan_in) {
        Rng rng(derive_seed(seed_, "init", hash_str(name)));
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        return add(name, Tensor<T>::uniform(std::move(shape), -bound, bound, rng));
    }

    Tensor<T> normal(const std::string& name, Shape shape, double stddev) {
        Rng rng(derive_seed(seed_, "init", hash_str(name)));
        return add(name, Tensor<T>::normal(std::move(shape), 0.0, stddev, rng));
    }

    Tensor<T> zeros(const std::string& name, Shape shape) { return add(name, Tensor<T>::zeros(std::move(shape))); }
    Tensor<T> ones(const std::string& name, Shape shape) { return add(name, Tensor<T>::ones(std::move(shape))); }
    Tensor<T> constant(const std::string& name, Shape shape, T v) {
        return add(name, Tensor<T>::filled(std::move(shape), v));
    }

    const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }
    std::vector<std::pair<std::string, Tensor<T>>>& items() { return items_; }

    const Tensor<T>* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &items_[it->second].second;
    }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& [name, t] : items_) n += t.numel();
        return n;
    }

    void zero_grads() {
        for (auto& [name, t] : items_) t.zero_grad();
    }

    uint64_t seed() const { return seed_; }

  private:
    uint64_t seed_;
    std::vector<std::pair<std::string, Tensor<T>>> items_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace hfw
