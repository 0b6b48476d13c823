#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "kpmask/tensor.hpp"

namespace kpmask {

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into inputs' grads.
    std::function<void(Node&)> backward;

    void accumulate(const Tensor& g);
};

/// Handle to a value in the computation graph. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad = Tensor(); }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }

    /// Single-value convenience for scalar losses.
    double item() const { return node_->value[0]; }

    const std::shared_ptr<Node>& node() const { return node_; }

    /// Builds an op result. Records `backward` only when some input needs a
    /// gradient and gradient recording is enabled on this thread.
    static Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

private:
    std::shared_ptr<Node> node_;
};

/// Seeds d(root)/d(root) = 1 (root must be a scalar) and propagates.
void backward(const Var& root);

bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace kpmask
