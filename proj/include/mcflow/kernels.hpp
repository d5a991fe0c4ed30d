#pragma once

// Hot loops behind the autograd ops. Each kernel has an OpenMP version that
// partitions only over independent outputs (so results do not depend on the
// thread count) and a plain serial version in `reference` used by the tests
// and the benchmark.

#include <cstddef>
#include <memory>
#include <span>

namespace mcflow::kernels {

/// Threads used by the parallel kernels. Initialised from MCFLOW_THREADS
/// (default 1).
int threads();
void set_threads(int n);

/// Uninitialised scratch storage recycled through a process-wide pool, so
/// repeated large allocations (attention probabilities) do not go back to the
/// operating system every step.
class Scratch {
public:
    explicit Scratch(std::size_t n);
    ~Scratch();
    Scratch(Scratch&& other) noexcept;
    Scratch& operator=(Scratch&&) = delete;
    Scratch(const Scratch&) = delete;

    std::span<double> span() noexcept { return {data_.get(), size_}; }
    std::span<const double> span() const noexcept { return {data_.get(), size_}; }

private:
    std::unique_ptr<double[]> data_;
    std::size_t size_ = 0;
};

// Row-major matrices. `accumulate` adds into C instead of overwriting.

/// C[n,m] = A[n,k] * B[k,m]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate = false);
/// C[n,m] = A[n,k] * B[m,k]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate = false);
/// C[n,m] = A[k,n]^T * B[k,m]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate = false);

/// Multi-head scaled dot-product attention over `tokens` rows. q, k, v and
/// out are [tokens, heads*head_dim] with head h in columns
/// [h*head_dim, (h+1)*head_dim). probs receives the softmax matrices,
/// [heads, tokens, tokens], kept for the backward pass.
struct AttentionDims {
    std::size_t tokens;
    std::size_t heads;
    std::size_t head_dim;
    std::size_t width() const { return heads * head_dim; }
};

void attention_forward(const AttentionDims& dims, std::span<const double> q, std::span<const double> k,
                       std::span<const double> v, std::span<double> out, std::span<double> probs);

/// Gradients are accumulated into dq, dk, dv.
void attention_backward(const AttentionDims& dims, std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs, std::span<const double> dout,
                        std::span<double> dq, std::span<double> dk, std::span<double> dv);

namespace reference {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate = false);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate = false);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate = false);

void attention_forward(const AttentionDims& dims, std::span<const double> q, std::span<const double> k,
                       std::span<const double> v, std::span<double> out, std::span<double> probs);
void attention_backward(const AttentionDims& dims, std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs, std::span<const double> dout,
                        std::span<double> dq, std::span<double> dk, std::span<double> dv);

}  // namespace reference

}  // namespace mcflow::kernels
