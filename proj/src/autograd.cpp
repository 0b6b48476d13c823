#include "kpmask/autograd.hpp"

#include <unordered_set>

#include <fmt/format.h>

#include "kpmask/error.hpp"

namespace kpmask {

namespace {
thread_local bool t_grad_enabled = true;
}

void Node::accumulate(const Tensor& g) {
    if (g.shape() != value.shape()) {
        fail(ErrorCategory::ShapeMismatch,
             fmt::format("gradient {} does not match value {}", g.shape().str(), value.shape().str()));
    }
    if (grad.empty()) {
        grad = g;
        return;
    }
    double* dst = grad.data();
    const double* src = g.data();
    for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Var Var::make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
    Var out(std::move(value));
    if (!t_grad_enabled) return out;
    bool any = false;
    for (const Var& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->inputs.reserve(inputs.size());
    for (const Var& in : inputs) out.node_->inputs.push_back(in.node_);
    out.node_->backward = std::move(backward_fn);
    return out;
}

void backward(const Var& root) {
    if (!root.requires_grad()) return;
    if (root.value().size() != 1) fail(ErrorCategory::ShapeMismatch, "backward needs a scalar root");

    // Iterative post-order DFS gives a topological order without recursion depth limits.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->accumulate(Tensor::scalar(1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && !node->grad.empty()) node->backward(*node);
    }
    // Intermediate grads are released; leaves keep theirs for the optimizer.
    for (Node* node : order) {
        if (node->backward) node->grad = Tensor();
    }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

}  // namespace kpmask
