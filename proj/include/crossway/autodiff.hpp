#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "crossway/tensor.hpp"

namespace crossway {

// Define-by-run reverse-mode tape. Every op allocates a Node holding its
// output value; backward closures accumulate into parent grads. Parameters
// that never sit on a loss path keep an all-zero (or empty) grad, which is
// what the exact-zero routing assertions rely on.
template <class S>
struct Node {
    Tensor<S> val;
    Tensor<S> grad;  // allocated lazily, same shape as val
    bool needs_grad = false;
    std::vector<std::shared_ptr<Node<S>>> prev;
    std::function<void()> back;  // may be empty for leaves

    Tensor<S>& ensure_grad() {
        if (grad.data.empty() && val.numel() > 0) grad = Tensor<S>::zeros(val.shape);
        return grad;
    }
};

template <class S>
struct Var {
    std::shared_ptr<Node<S>> n;

    Var() = default;
    explicit Var(std::shared_ptr<Node<S>> p) : n(std::move(p)) {}

    bool defined() const { return static_cast<bool>(n); }
    Tensor<S>& val() const { return n->val; }
    Tensor<S>& grad() const { return n->ensure_grad(); }
    bool needs_grad() const { return n && n->needs_grad; }
    int64_t numel() const { return n->val.numel(); }
    const std::vector<int64_t>& shape() const { return n->val.shape; }
};

namespace detail {
inline thread_local int no_grad_depth = 0;
}

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

struct NoGradGuard {
    NoGradGuard() { ++detail::no_grad_depth; }
    ~NoGradGuard() { --detail::no_grad_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <class S>
Var<S> make_leaf(Tensor<S> value, bool needs_grad = false) {
    auto node = std::make_shared<Node<S>>();
    node->val = std::move(value);
    node->needs_grad = needs_grad && grad_enabled();
    return Var<S>(std::move(node));
}

template <class S>
Var<S> constant(Tensor<S> value) {
    return make_leaf<S>(std::move(value), false);
}

// Creates the output node for an op. Parents are only retained when the
// result participates in a graph; otherwise the node is a plain value.
template <class S>
Var<S> make_op_node(Tensor<S> value, std::vector<Var<S>> parents, std::function<void()> back) {
    auto node = std::make_shared<Node<S>>();
    node->val = std::move(value);
    bool need = false;
    if (grad_enabled())
        for (const auto& p : parents) need = need || p.needs_grad();
    node->needs_grad = need;
    if (need) {
        node->prev.reserve(parents.size());
        for (auto& p : parents) node->prev.push_back(p.n);
        node->back = std::move(back);
    }
    return Var<S>(std::move(node));
}

// Reverse-mode sweep from a scalar root.
template <class S>
void backward(const Var<S>& root) {
    if (!root.defined() || root.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
    if (!root.n->needs_grad) return;

    // Iterative post-order topological sort.
    std::vector<Node<S>*> order;
    std::vector<std::pair<Node<S>*, size_t>> stack;
    std::unordered_set<Node<S>*> seen;

    stack.push_back({root.n.get(), 0});
    seen.insert(root.n.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->prev.size()) {
            Node<S>* child = node->prev[idx].get();
            ++idx;
            if (child->needs_grad && seen.insert(child).second) stack.push_back({child, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.n->ensure_grad().fill(S(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<S>* node = *it;
        if (node->back && node->needs_grad) node->back();
    }
}

template <class S>
void accumulate(Tensor<S>& dst, const Tensor<S>& src) {
    assert(dst.numel() == src.numel());
    S* d = dst.ptr();
    const S* s = src.ptr();
    for (int64_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

}  // namespace crossway
