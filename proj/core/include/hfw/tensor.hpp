#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <vector>

#include "hfw/errors.hpp"
#include "hfw/rng.hpp"

namespace hfw {

using Shape = std::vector<int64_t>;

enum class Dtype { Float32, Float64 };

template <typename T>
constexpr Dtype dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>, "float32/float64 only");
    if constexpr (std::is_same_v<T, float>)
        return Dtype::Float32;
    else
        return Dtype::Float64;
}

inline const char* dtype_name(Dtype d) { return d == Dtype::Float32 ? "float32" : "float64"; }

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

namespace detail {
inline bool& grad_mode_flag() {
    thread_local bool flag = true;
    return flag;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Disables graph recording in scope. Forward-only evaluation uses this.
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// One node of the recorded computation. Gradients accumulate into `grad`;
// `backward_fn` propagates this node's grad into its parents' grads.
template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily, same extent as value
    bool requires_grad = false;
    std::string name;
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
    }
};

// Dense tensor handle. Copying copies the handle, not the buffer. Values are
// contiguous row-major; broadcasting aligns trailing axes.
template <typename T>
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), T(0), requires_grad);
    }

    static Tensor ones(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), T(1), requires_grad);
    }

    static Tensor filled(Shape shape, T v, bool requires_grad = false) {
        auto n = std::make_shared<TensorNode<T>>();
        n->value.assign(static_cast<size_t>(shape_numel(shape)), v);
        n->shape = std::move(shape);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        auto n = std::make_shared<TensorNode<T>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor scalar(T v, bool requires_grad = false) { return filled(Shape{}, v, requires_grad); }

    static Tensor uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (T& v : t.node()->value) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    static Tensor normal(Shape shape, double mean, double stddev, Rng& rng, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (T& v : t.node()->value) v = static_cast<T>(rng.normal(mean, stddev));
        return t;
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return n_->shape; }
    int rank() const { return static_cast<int>(n_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(n_->value.size()); }

    int64_t dim(int i) const {
        int r = rank();
        if (i < 0) i += r;
        if (i < 0 || i >= r) throw DimensionError("axis " + std::to_string(i) + " out of range for " + shape_str(shape()));
        return n_->shape[static_cast<size_t>(i)];
    }

    std::span<T> values() { return n_->value; }
    std::span<const T> values() const { return n_->value; }

    T item() const {
        if (numel() != 1) throw DimensionError("item() requires a single-element tensor, got " + shape_str(shape()));
        return n_->value[0];
    }

    bool requires_grad() const { return n_->requires_grad; }

    Tensor& set_requires_grad(bool rg) {
        n_->requires_grad = rg;
        return *this;
    }

    Tensor& set_name(std::string name) {
        n_->name = std::move(name);
        return *this;
    }
    const std::string& name() const { return n_->name; }

    bool has_grad() const { return !n_->grad.empty(); }
    std::span<const T> grad() const { return n_->grad; }
    std::span<T> grad_mut() {
        n_->ensure_grad();
        return n_->grad;
    }
    void zero_grad() { n_->grad.assign(n_->value.size(), T(0)); }

    // Value copy with no history.
    Tensor detach() const {
        auto n = std::make_shared<TensorNode<T>>();
        n->shape = n_->shape;
        n->value = n_->value;
        n->requires_grad = false;
        return Tensor(std::move(n));
    }

    // Reverse pass from a single-element tensor. Runs each recorded node's
    // backward exactly once, in reverse topological order.
    void backward() {
        if (numel() != 1) throw DimensionError("backward() requires a scalar, got " + shape_str(shape()));
        if (!n_->requires_grad) throw StateError("backward() on a tensor with no recorded graph");
        std::vector<TensorNode<T>*> order;
        topo_order(order);
        n_->ensure_grad();
        n_->grad[0] = T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            TensorNode<T>* node = *it;
            if (node->backward_fn) {
                for (auto& p : node->parents)
                    if (p->requires_grad) p->ensure_grad();
                node->backward_fn(*node);
            }
        }
    }

    std::shared_ptr<TensorNode<T>>& node() { return n_; }
    const std::shared_ptr<TensorNode<T>>& node() const { return n_; }

    explicit Tensor(std::shared_ptr<TensorNode<T>> n) : n_(std::move(n)) {}

  private:
    void topo_order(std::vector<TensorNode<T>*>& order) const {
        // Iterative DFS post-order; recursion would overflow on long episode chains.
        std::unordered_set<TensorNode<T>*> visited;
        std::vector<std::pair<TensorNode<T>*, size_t>> stack;
        stack.emplace_back(n_.get(), 0);
        visited.insert(n_.get());
        while (!stack.empty()) {
            auto& [node, next_child] = stack.back();
            if (next_child < node->parents.size()) {
                TensorNode<T>* child = node->parents[next_child++].get();
                if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<TensorNode<T>> n_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {

constexpr int kMaxRank = 8;

template <typename T>
Tensor<T> make_result(Shape shape, bool requires_grad) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape), false);
    t.node()->requires_grad = requires_grad;
    return t;
}

// true if the op should record the graph for this set of inputs
template <typename T, typename... Ts>
bool track(const Tensor<T>& a, const Ts&... rest) {
    if (!grad_enabled()) return false;
    bool any = a.requires_grad();
    ((any = any || rest.requires_grad()), ...);
    return any;
}

template <typename T>
void attach(Tensor<T>& out, std::type_identity_t<std::vector<std::shared_ptr<TensorNode<T>>>> parents,
            std::type_identity_t<std::function<void(TensorNode<T>&)>> fn) {
    out.node()->parents = std::move(parents);
    out.node()->backward_fn = std::move(fn);
}

}  // namespace detail

}  // namespace hfw
