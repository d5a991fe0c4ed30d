#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "mcflow/autograd.hpp"
#include "mcflow/tensor.hpp"

namespace mcflow {

/// Named model parameters. std::map keeps iteration order deterministic.
struct ParamStore {
    std::map<std::string, Tensor> entries;
    std::uint64_t step = 0;

    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return entries.count(name) != 0; }
    std::size_t parameter_count() const;

    /// One autograd leaf per entry, keyed by name.
    std::map<std::string, ad::Var> leaves() const;

    friend bool operator==(const ParamStore&, const ParamStore&) = default;
};

struct AdamConfig {
    /// Desk-scale default. Large pretrained backbones are typically trained
    /// at 2e-5; that value is too slow for the toy model.
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

/// One bias-corrected Adam update. Every parameter must have a gradient.
void adam_step(ParamStore& store, const ad::Gradients& grads, const AdamConfig& cfg, AdamState& state);

/// Adds zero gradients for parameters the loss did not reach.
void fill_missing_gradients(const ParamStore& store, ad::Gradients& grads);

using LossFn = std::function<ad::Var(const std::map<std::string, ad::Var>&)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

/// Compares autodiff gradients with central differences over every entry
/// of every parameter. Relative error is |analytic - numeric| / max(1, |numeric|).
/// `stride` > 1 checks every stride-th element only.
GradCheckResult grad_check(const LossFn& fn, const ParamStore& params, double eps, std::size_t stride = 1);

// MCKP checkpoint: "MCKP", u32 count, then per tensor u32 name length, name
// bytes, u32 rank, u32 dims, f64 data; all little-endian.
void save_checkpoint(const std::filesystem::path& path, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace mcflow
