#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "occo/tensor.hpp"

namespace occo {

/// Reverse-mode autodiff over Tensor values. Each op builds a Node holding
/// the forward value and a closure that scatters the node's gradient into
/// its inputs. backward() runs the closures in reverse topological order.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;              // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<Var> inputs;
    std::function<void(Node&)> backward_fn; // null for leaves

    explicit Node(Tensor v, bool req = false) : value(std::move(v)), requires_grad(req) {}

    Tensor& ensure_grad() {
        if (!grad.defined()) grad = Tensor::zeros(value.shape());
        return grad;
    }
};

/// Trainable leaf: participates in backward().
inline Var leaf(Tensor v) { return std::make_shared<Node>(std::move(v), true); }

/// Non-trainable input: gradients are not propagated into it.
inline Var constant(Tensor v) { return std::make_shared<Node>(std::move(v), false); }

inline bool any_requires_grad(const std::vector<Var>& xs) {
    for (const auto& x : xs)
        if (x->requires_grad) return true;
    return false;
}

/// Builds an op node: forward value, inputs, backward closure. The closure
/// is dropped when no input needs gradients, so inference builds no tape.
inline Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>(std::move(value), any_requires_grad(inputs));
    if (n->requires_grad) {
        n->inputs = std::move(inputs);
        n->backward_fn = std::move(backward);
    }
    return n;
}

/// Accumulates g into the input's gradient if it wants one.
inline void accumulate(const Var& input, const Tensor& g) {
    if (!input->requires_grad) return;
    Tensor& dst = input->ensure_grad();
    OCCO_CHECK(dst.same_shape(g), "gradient shape ", shape_str(g.shape()),
               " does not match value shape ", shape_str(dst.shape()));
    for (int64_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
}

/// Runs reverse-mode accumulation from a scalar root. Gradients add into
/// node.grad; call zero_grad on parameters between steps.
inline void backward(const Var& root) {
    OCCO_CHECK(root->value.numel() == 1, "backward() root must be scalar, got ",
               shape_str(root->value.shape()));
    if (!root->requires_grad) return;

    // Iterative post-order topological sort (graphs get deep).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node* child = node->inputs[idx++].get();
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.defined()) n->backward_fn(*n);
    }
}

} // namespace occo
