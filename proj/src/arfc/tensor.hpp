#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace arfc {

// ─── Tensor & reverse-mode autodiff ───────────────────────────
// A Tensor is a shared node in a dynamically built computation
// graph. Data is double precision everywhere (tolerances in the
// test suite are stated at float64). Gradients are allocated
// lazily on first accumulation. backward() topologically sorts
// the graph and runs each node's closure once.

struct TensorNode;
using Tensor = std::shared_ptr<TensorNode>;

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;   // empty until touched
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<void(TensorNode&)> backward_fn; // pulls from this->grad into parents

    size_t size() const { return data.size(); }

    int dim(int i) const {
        if (i < 0) i += (int)shape.size();
        return shape[(size_t)i];
    }

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

inline size_t numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int e : shape) n *= (size_t)e;
    return n;
}

inline Tensor make_tensor(std::vector<int> shape) {
    auto t = std::make_shared<TensorNode>();
    t->shape = std::move(shape);
    t->data.assign(numel(t->shape), 0.0);
    return t;
}

inline Tensor make_tensor(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false) {
    auto t = std::make_shared<TensorNode>();
    t->shape = std::move(shape);
    if (data.size() != numel(t->shape))
        throw std::invalid_argument("tensor data size does not match shape");
    t->data = std::move(data);
    t->requires_grad = requires_grad;
    return t;
}

inline Tensor scalar_tensor(double v) { return make_tensor({1}, {v}); }

// Thread-local switch: inside a NoGradGuard no graph edges are
// recorded, so eval-mode passes allocate nothing for backward.
inline bool& grad_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
    ~NoGradGuard() { grad_enabled() = prev; }
};

inline bool track(const std::initializer_list<Tensor>& inputs) {
    if (!grad_enabled()) return false;
    for (const auto& t : inputs)
        if (t && t->requires_grad) return true;
    return false;
}

// Topo-sorted reverse pass from a scalar (or explicit seed).
inline void backward(const Tensor& root) {
    if (root->size() != 1)
        throw std::invalid_argument("backward() requires a scalar root");
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, size_t>> stack; // node, next-parent index
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode* p = node->parents[idx++].get();
            if (!seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

// Detach: same storage view of the values, no history.
inline Tensor detach(const Tensor& t) {
    auto out = std::make_shared<TensorNode>();
    out->shape = t->shape;
    out->data = t->data;
    out->requires_grad = false;
    return out;
}

} // namespace arfc
