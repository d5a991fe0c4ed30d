#include "mcflow/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>
#include <utility>

#include "mcflow/error.hpp"
#include "mcflow/kernels.hpp"

namespace mcflow::ad {

Tensor& Node::grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor(value.shape());
    return grad;
}

namespace {

using NodePtr = std::shared_ptr<Node>;

Var make(Tensor value, std::vector<NodePtr> inputs, std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& n) { return n->requires_grad; });
    if (node->requires_grad) {
        node->inputs = std::move(inputs);
        node->backward = std::move(backward);
    }
    return Var(std::move(node));
}

// Accumulates into an input only when it participates in differentiation.
template <typename F>
void into(const NodePtr& input, F&& fn) {
    if (input->requires_grad) fn(input->grad_buffer());
}

void require_rank(const Var& x, std::size_t rank, const char* op) {
    if (x.value().rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(x.shape()));
    }
}

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
    Tensor out(a.shape());
    const auto& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
    return make(std::move(out), {a.node()}, [deriv](Node& self) {
        const auto& in = self.inputs[0];
        into(in, [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(in->value[i], self.value[i]);
        });
    });
}

}  // namespace

Var constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var parameter(std::string name, Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->name = std::move(name);
    node->requires_grad = true;
    return Var(std::move(node));
}

Gradients backward(const Var& loss) {
    if (loss.value().size() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    Gradients grads;
    if (!loss.requires_grad()) return grads;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->grad_buffer()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->grad.empty()) continue;
        if (node->backward) node->backward(*node);
        if (!node->name.empty()) {
            auto [pos, inserted] = grads.try_emplace(node->name, node->grad);
            if (!inserted) {
                for (std::size_t i = 0; i < node->grad.size(); ++i) pos->second[i] += node->grad[i];
            }
        }
    }
    // Reset so the same graph can be differentiated again.
    for (Node* node : order) node->grad = Tensor();
    return grads;
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return make(std::move(out), {a.node(), b.node()}, [](Node& self) {
        for (const auto& in : self.inputs)
            into(in, [&](Tensor& g) {
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            });
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return make(std::move(out), {a.node(), b.node()}, [](Node& self) {
        into(self.inputs[0], [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        });
        into(self.inputs[1], [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        });
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return make(std::move(out), {a.node(), b.node()}, [](Node& self) {
        const auto& x = self.inputs[0];
        const auto& y = self.inputs[1];
        into(x, [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y->value[i];
        });
        into(y, [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x->value[i];
        });
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var square(const Var& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var scale(const Var& a, double factor) {
    return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_scalar(const Var& a, double value) {
    return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Var silu(const Var& a) {
    return unary(
        a, [](double x) { return x / (1.0 + std::exp(-x)); },
        [](double x, double) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

Var gelu(const Var& a) {
    static const double c = std::sqrt(2.0 / std::numbers::pi);
    return unary(
        a, [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x))); },
        [](double x, double) {
            const double u = c * (x + 0.044715 * x * x * x);
            const double th = std::tanh(u);
            const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
            return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
        });
}

Var add_rowwise(const Var& x, const Var& r) {
    require_rank(x, 2, "add_rowwise");
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    if (r.value().rank() != 1 || r.shape()[0] != cols) {
        throw ShapeError("add_rowwise: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(r.shape()));
    }
    Tensor out = x.value();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += r.value()[j];
    return make(std::move(out), {x.node(), r.node()}, [rows, cols](Node& self) {
        into(self.inputs[0], [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        });
        into(self.inputs[1], [&](Tensor& g) {
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) g[j] += self.grad[i * cols + j];
        });
    });
}

Var mul_rowwise(const Var& x, const Var& r) {
    require_rank(x, 2, "mul_rowwise");
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    if (r.value().rank() != 1 || r.shape()[0] != cols) {
        throw ShapeError("mul_rowwise: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(r.shape()));
    }
    Tensor out = x.value();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] *= r.value()[j];
    return make(std::move(out), {x.node(), r.node()}, [rows, cols](Node& self) {
        const auto& xin = self.inputs[0];
        const auto& rin = self.inputs[1];
        into(xin, [&](Tensor& g) {
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) g[i * cols + j] += self.grad[i * cols + j] * rin->value[j];
        });
        into(rin, [&](Tensor& g) {
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) g[j] += self.grad[i * cols + j] * xin->value[i * cols + j];
        });
    });
}

Var matmul(const Var& a, const Var& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    if (b.shape()[0] != k) {
        throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor out({n, m});
    kernels::gemm_nn(a.value().data(), b.value().data(), out.data(), n, k, m);
    return make(std::move(out), {a.node(), b.node()}, [n, k, m](Node& self) {
        const auto& x = self.inputs[0];
        const auto& w = self.inputs[1];
        into(x, [&](Tensor& g) { kernels::gemm_nt(self.grad.data(), w->value.data(), g.data(), n, m, k, true); });
        into(w, [&](Tensor& g) { kernels::gemm_tn(x->value.data(), self.grad.data(), g.data(), k, n, m, true); });
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    require_rank(x, 2, "linear");
    require_rank(weight, 2, "linear");
    const std::size_t n = x.shape()[0], k = x.shape()[1], m = weight.shape()[1];
    if (weight.shape()[0] != k || bias.value().rank() != 1 || bias.shape()[0] != m) {
        throw ShapeError("linear: shape mismatch " + shape_str(x.shape()) + " x " + shape_str(weight.shape()) +
                         " + " + shape_str(bias.shape()));
    }
    Tensor out({n, m});
    for (std::size_t i = 0; i < n; ++i) std::copy_n(bias.value().data().begin(), m, out.data().begin() + i * m);
    kernels::gemm_nn(x.value().data(), weight.value().data(), out.data(), n, k, m, true);
    return make(std::move(out), {x.node(), weight.node(), bias.node()}, [n, k, m](Node& self) {
        const auto& xin = self.inputs[0];
        const auto& w = self.inputs[1];
        into(xin, [&](Tensor& g) { kernels::gemm_nt(self.grad.data(), w->value.data(), g.data(), n, m, k, true); });
        into(w, [&](Tensor& g) { kernels::gemm_tn(xin->value.data(), self.grad.data(), g.data(), k, n, m, true); });
        into(self.inputs[2], [&](Tensor& g) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j];
        });
    });
}

Var softmax(const Var& x) {
    if (x.value().rank() == 0) throw ShapeError("softmax: scalar input");
    const std::size_t cols = x.shape().back();
    const std::size_t rows = x.value().size() / cols;
    Tensor out = x.value();
    for (std::size_t r = 0; r < rows; ++r) {
        double* s = out.data().data() + r * cols;
        const double mx = *std::max_element(s, s + cols);
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            s[j] = std::exp(s[j] - mx);
            total += s[j];
        }
        for (std::size_t j = 0; j < cols; ++j) s[j] /= total;
    }
    return make(std::move(out), {x.node()}, [rows, cols](Node& self) {
        into(self.inputs[0], [&](Tensor& g) {
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = self.value.data().data() + r * cols;
                const double* dy = self.grad.data().data() + r * cols;
                double dot = 0.0;
                for (std::size_t j = 0; j < cols; ++j) dot += y[j] * dy[j];
                for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += y[j] * (dy[j] - dot);
            }
        });
    });
}

Var layer_norm(const Var& x, double eps) {
    if (x.value().rank() == 0) throw ShapeError("layer_norm: scalar input");
    const std::size_t cols = x.shape().back();
    const std::size_t rows = x.value().size() / cols;
    Tensor out(x.shape());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = x.value().data().data() + r * cols;
        double mu = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mu += in[j];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<double>(cols);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = (in[j] - mu) * inv_std[r];
    }
    return make(std::move(out), {x.node()}, [rows, cols, inv_std = std::move(inv_std)](Node& self) {
        into(self.inputs[0], [&](Tensor& g) {
            const double inv_n = 1.0 / static_cast<double>(cols);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = self.value.data().data() + r * cols;
                const double* dy = self.grad.data().data() + r * cols;
                double mean_dy = 0.0, mean_dyy = 0.0;
                for (std::size_t j = 0; j < cols; ++j) {
                    mean_dy += dy[j];
                    mean_dyy += dy[j] * y[j];
                }
                mean_dy *= inv_n;
                mean_dyy *= inv_n;
                for (std::size_t j = 0; j < cols; ++j)
                    g[r * cols + j] += inv_std[r] * (dy[j] - mean_dy - y[j] * mean_dyy);
            }
        });
    });
}

Var reshape(const Var& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return make(std::move(out), {x.node()}, [](Node& self) {
        into(self.inputs[0], [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        });
    });
}

Var transpose(const Var& x) {
    require_rank(x, 2, "transpose");
    const std::size_t r = x.shape()[0], c = x.shape()[1];
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.value()[i * c + j];
    return make(std::move(out), {x.node()}, [r, c](Node& self) {
        into(self.inputs[0], [&](Tensor& g) {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
        });
    });
}

Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    Shape shape = parts.front().shape();
    if (shape.empty()) throw ShapeError("concat: scalar input");
    Shape tail(shape.begin() + 1, shape.end());
    std::size_t rows = 0;
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        if (s.empty() || Shape(s.begin() + 1, s.end()) != tail) {
            throw ShapeError("concat: shape mismatch " + shape_str(parts.front().shape()) + " vs " + shape_str(s));
        }
        rows += s[0];
        nodes.push_back(p.node());
    }
    shape[0] = rows;
    Tensor out(shape);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + offset);
        offset += p.value().size();
    }
    return make(std::move(out), std::move(nodes), [](Node& self) {
        std::size_t off = 0;
        for (const auto& in : self.inputs) {
            const std::size_t len = in->value.size();
            into(in, [&](Tensor& g) {
                for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[off + i];
            });
            off += len;
        }
    });
}

Var slice(const Var& x, std::size_t begin, std::size_t end) {
    if (x.value().rank() == 0 || begin > end || end > x.shape()[0]) {
        throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for shape " + shape_str(x.shape()));
    }
    Shape shape = x.shape();
    const std::size_t stride = x.value().size() / shape[0];
    shape[0] = end - begin;
    Tensor out(shape);
    std::copy_n(x.value().data().begin() + begin * stride, out.size(), out.data().begin());
    return make(std::move(out), {x.node()}, [offset = begin * stride](Node& self) {
        into(self.inputs[0], [&](Tensor& g) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
        });
    });
}

Var row(const Var& table, std::size_t index) {
    require_rank(table, 2, "row");
    if (index >= table.shape()[0]) {
        throw ShapeError("row: index " + std::to_string(index) + " out of range for shape " +
                         shape_str(table.shape()));
    }
    return reshape(slice(table, index, index + 1), {table.shape()[1]});
}

Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x.value().data()) s += v;
    return make(Tensor::scalar(s), {x.node()}, [](Node& self) {
        into(self.inputs[0], [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
        });
    });
}

Var mean(const Var& x) {
    if (x.value().empty()) throw ShapeError("mean: empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var rope(const Var& x, const Tensor& angles) {
    require_rank(x, 2, "rope");
    const std::size_t n = x.shape()[0], width = x.shape()[1];
    if (angles.rank() != 2 || angles.dim(0) != n || angles.dim(1) == 0 || width % (2 * angles.dim(1)) != 0) {
        throw ShapeError("rope: shape mismatch " + shape_str(x.shape()) + " vs angles " + shape_str(angles.shape()));
    }
    const std::size_t pairs = angles.dim(1);
    const std::size_t heads = width / (2 * pairs);
    std::vector<double> cs(n * pairs), sn(n * pairs);
    for (std::size_t i = 0; i < n * pairs; ++i) {
        cs[i] = std::cos(angles[i]);
        sn[i] = std::sin(angles[i]);
    }
    Tensor out(x.shape());
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t p = 0; p < pairs; ++p) {
                const std::size_t i = t * width + h * 2 * pairs + 2 * p;
                const double c = cs[t * pairs + p], s = sn[t * pairs + p];
                const double a = x.value()[i], b = x.value()[i + 1];
                out[i] = a * c - b * s;
                out[i + 1] = a * s + b * c;
            }
    return make(std::move(out), {x.node()}, [n, width, heads, pairs, cs = std::move(cs), sn = std::move(sn)](Node& self) {
        into(self.inputs[0], [&](Tensor& g) {
            for (std::size_t t = 0; t < n; ++t)
                for (std::size_t h = 0; h < heads; ++h)
                    for (std::size_t p = 0; p < pairs; ++p) {
                        const std::size_t i = t * width + h * 2 * pairs + 2 * p;
                        const double c = cs[t * pairs + p], s = sn[t * pairs + p];
                        const double ga = self.grad[i], gb = self.grad[i + 1];
                        g[i] += ga * c + gb * s;
                        g[i + 1] += -ga * s + gb * c;
                    }
        });
    });
}

Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads) {
    require_rank(q, 2, "attention");
    require_same_shape(q.value(), k.value(), "attention q/k");
    require_same_shape(q.value(), v.value(), "attention q/v");
    const std::size_t n = q.shape()[0], width = q.shape()[1];
    if (heads == 0 || width % heads != 0 || width / heads > 256) {
        throw ShapeError("attention: width " + std::to_string(width) + " cannot be split into " +
                         std::to_string(heads) + " heads of at most 256 channels");
    }
    const kernels::AttentionDims dims{n, heads, width / heads};
    Tensor out({n, width});
    auto probs = std::make_shared<kernels::Scratch>(heads * n * n);
    kernels::attention_forward(dims, q.value().data(), k.value().data(), v.value().data(), out.data(), probs->span());
    return make(std::move(out), {q.node(), k.node(), v.node()}, [dims, probs](Node& self) {
        const auto& qi = self.inputs[0];
        const auto& ki = self.inputs[1];
        const auto& vi = self.inputs[2];
        // The kernel accumulates into all three; route unused ones to scratch.
        Tensor scratch;
        auto target = [&](const NodePtr& in) -> std::span<double> {
            if (in->requires_grad) return in->grad_buffer().data();
            if (scratch.empty()) scratch = Tensor(in->value.shape());
            return scratch.data();
        };
        auto dq = target(qi);
        auto dk = target(ki);
        auto dv = target(vi);
        kernels::attention_backward(dims, qi->value.data(), ki->value.data(), vi->value.data(),
                                    std::as_const(*probs).span(), self.grad.data(), dq, dk, dv);
    });
}

}  // namespace mcflow::ad
