#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fabulight/common.hpp"

namespace fabulight {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {

// One node of the reverse-mode graph. Tensors are thin shared handles to
// these; operations allocate a fresh node and wire the parent edges.
template <typename S>
struct TensorNode {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // empty until a backward pass touches this node
    bool requires_grad = false;
    bool leaf = true;
    bool released = false;
    std::vector<std::shared_ptr<TensorNode<S>>> parents;
    // Reads this node's grad (and value where needed) and accumulates into
    // the parents' grads.
    std::function<void(TensorNode<S>&)> backprop;

    std::size_t numel() const { return value.size(); }

    std::vector<S>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), S(0));
        return grad;
    }
};

}  // namespace detail

// Dense row-major tensor with an optional gradient slot. Copying the handle
// shares the underlying buffer; operations never mutate their inputs.
template <typename S>
class Tensor {
public:
    using Node = detail::TensorNode<S>;

    Tensor() = default;

    explicit Tensor(Shape shape) : node_(std::make_shared<Node>()) {
        node_->shape = std::move(shape);
        node_->value.assign(shape_numel(node_->shape), S(0));
    }

    Tensor(Shape shape, std::vector<S> data) : node_(std::make_shared<Node>()) {
        if (shape_numel(shape) != data.size())
            throw dimension_error("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
        node_->shape = std::move(shape);
        node_->value = std::move(data);
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, S v) {
        Tensor t(std::move(shape));
        std::fill(t.node_->value.begin(), t.node_->value.end(), v);
        return t;
    }

    static Tensor scalar(S v) { return Tensor({1}, {v}); }

    // Leaf parameter: participates in gradient propagation.
    static Tensor param(Shape shape, std::vector<S> data) {
        Tensor t(std::move(shape), std::move(data));
        t.node_->requires_grad = true;
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t extent(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t size() const { return node_->value.size(); }

    std::vector<S>& value() { return node_->value; }
    const std::vector<S>& value() const { return node_->value; }
    S* data() { return node_->value.data(); }
    const S* data() const { return node_->value.data(); }

    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->leaf; }

    void set_requires_grad(bool on) {
        if (!node_->leaf) throw contract_error("requires_grad can only be toggled on leaf tensors");
        node_->requires_grad = on;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    std::vector<S>& grad() {
        if (node_->grad.empty()) throw contract_error("tensor has no gradient (backward not run)");
        return node_->grad;
    }
    const std::vector<S>& grad() const {
        if (node_->grad.empty()) throw contract_error("tensor has no gradient (backward not run)");
        return node_->grad;
    }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), S(0));
    }
    void drop_grad() { node_->grad.clear(); }

    S item() const {
        if (size() != 1) throw contract_error("item() requires a scalar tensor, got " + shape_str(shape()));
        return node_->value[0];
    }

    std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != rank()) throw dimension_error("index rank mismatch");
        std::size_t flat = 0;
        std::size_t axis = 0;
        for (const std::size_t i : idx) {
            if (i >= node_->shape[axis]) throw dimension_error("index out of range");
            flat = flat * node_->shape[axis] + i;
            ++axis;
        }
        return flat;
    }

    S& at(std::initializer_list<std::size_t> idx) { return node_->value[flat_index(idx)]; }
    S at(std::initializer_list<std::size_t> idx) const { return node_->value[flat_index(idx)]; }

    bool all_finite() const {
        for (const S v : node_->value)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    // Reverse-mode propagation from this scalar. Parameter grads accumulate
    // across calls; release_graph frees intermediate buffers as soon as they
    // have been consumed (the graph cannot be replayed afterwards).
    void backward(bool release_graph = false) const {
        if (node_->released) throw graph_error("backward on a released graph");
        if (size() != 1) throw contract_error("backward requires a scalar loss, got " + shape_str(shape()));

        // Iterative post-order DFS; a node seen while still in progress means
        // the parent edges contain a cycle. The order holds shared ownership
        // so releasing a node's parent list cannot free a pending node.
        std::vector<std::shared_ptr<Node>> order;
        std::unordered_map<Node*, int> state;  // 0 absent, 1 in progress, 2 done
        std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
        stack.emplace_back(node_, 0);
        state[node_.get()] = 1;
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                const std::shared_ptr<Node>& p = n->parents[next++];
                auto it = state.find(p.get());
                if (it == state.end()) {
                    state[p.get()] = 1;
                    stack.emplace_back(p, 0);
                } else if (it->second == 1) {
                    throw graph_error("cycle detected in operation graph");
                }
            } else {
                state[n.get()] = 2;
                order.push_back(n);
                stack.pop_back();
            }
        }

        node_->ensure_grad()[0] += S(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = it->get();
            if (n->grad.empty()) continue;  // no downstream contribution
            if (n->backprop) {
                if (n->released) throw graph_error("backward on a released graph");
                n->backprop(*n);
            }
            if (release_graph && !n->leaf) {
                n->value.clear();
                n->value.shrink_to_fit();
                n->grad.clear();
                n->grad.shrink_to_fit();
                n->backprop = nullptr;
                n->parents.clear();
                n->released = true;
            }
        }
    }

    // --- operation plumbing -------------------------------------------------

    static Tensor make_op(Shape shape, std::vector<S> value, std::vector<Tensor> inputs,
                          std::function<void(Node&)> backprop) {
        Tensor out(std::move(shape), std::move(value));
        bool needs = false;
        for (const auto& in : inputs) needs = needs || in.requires_grad();
        if (needs) {
            out.node_->requires_grad = true;
            out.node_->leaf = false;
            out.node_->parents.reserve(inputs.size());
            for (auto& in : inputs) out.node_->parents.push_back(in.node_);
            out.node_->backprop = std::move(backprop);
        }
        return out;
    }

    std::shared_ptr<Node> node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace fabulight
