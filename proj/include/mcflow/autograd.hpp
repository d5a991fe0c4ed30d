#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Var is a handle to a node in a dynamically built graph. Every op returns
// a new Var and leaves its inputs untouched. Leaves created with parameter()
// carry a name; backward() returns gradients keyed by that name, summing
// contributions when the same name appears on several leaves.

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mcflow/tensor.hpp"

namespace mcflow::ad {

struct Node {
    Tensor value;
    Tensor grad;  // empty until the backward pass reaches this node
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;
    std::string name;
    bool requires_grad = false;

    Tensor& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    const std::shared_ptr<Node>& node() const { return node_; }
    bool valid() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

using Gradients = std::map<std::string, Tensor>;

Var constant(Tensor value);
Var parameter(std::string name, Tensor value);

/// Gradients of a scalar loss with respect to every named leaf it reaches.
Gradients backward(const Var& loss);

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var square(const Var& a);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double value);
Var silu(const Var& a);
Var gelu(const Var& a);  // tanh approximation

// Broadcast a vector of length c across the rows of an [r, c] matrix.
Var add_rowwise(const Var& x, const Var& row);
Var mul_rowwise(const Var& x, const Var& row);

Var matmul(const Var& a, const Var& b);                     // [n,k] x [k,m]
Var linear(const Var& x, const Var& weight, const Var& bias);  // x W + b
Var softmax(const Var& x);                                  // over the last axis
Var layer_norm(const Var& x, double eps = 1e-6);            // over the last axis, no affine

Var reshape(const Var& x, Shape shape);
Var transpose(const Var& x);  // 2-D
Var concat(const std::vector<Var>& parts);  // along axis 0
Var slice(const Var& x, std::size_t begin, std::size_t end);  // along axis 0
Var row(const Var& table, std::size_t index);  // table[index, :]

Var sum(const Var& x);
Var mean(const Var& x);

/// Rotates consecutive pairs of every head: x is [tokens, heads*head_dim],
/// angles is [tokens, head_dim/2] shared by all heads.
Var rope(const Var& x, const Tensor& angles);

/// Multi-head softmax(q k^T / sqrt(head_dim)) v; q, k, v are [tokens, heads*head_dim].
Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads);

}  // namespace mcflow::ad
