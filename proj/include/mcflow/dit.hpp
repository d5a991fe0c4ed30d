#pragma once

// Toy diffusion transformer over Multi-Chunk latents. Every token attends to
// every other token across all chunks; positions enter through MC-RoPE on
// queries and keys plus a fixed sinusoidal embedding of the same coordinates.

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "mcflow/autograd.hpp"
#include "mcflow/codec.hpp"
#include "mcflow/params.hpp"
#include "mcflow/rng.hpp"
#include "mcflow/tensor.hpp"

namespace mcflow {

struct ModelConfig {
    std::size_t model_dim = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t head_dim = 16;
    std::size_t patch_t = 1;
    std::size_t patch_s = 2;
    std::size_t n_scenarios = 8;
    std::size_t channels = 1;  // latent channels d
    std::size_t mlp_ratio = 4;
    std::size_t max_tokens = 4096;
    bool abs_pos = true;  // add the sinusoidal coordinate embedding to tokens

    std::size_t patch_dim() const { return channels * patch_s * patch_s; }
    /// Throws Error describing the first violated constraint.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Token positions for a latent layout; independent of latent values.
struct TokenLayout {
    std::vector<std::size_t> latent_lengths;
    std::size_t channels = 0, height = 0, width = 0;  // latent geometry
    std::size_t patch = 2;
    std::vector<std::array<std::size_t, 3>> coords;  // (latent frame, patch row, patch col)
    std::vector<double> u_values;                    // MC-RoPE temporal index per token

    std::size_t tokens() const { return coords.size(); }
    std::size_t frames() const;
    std::size_t grid_h() const { return height / patch; }
    std::size_t grid_w() const { return width / patch; }
};

TokenLayout make_layout(const std::vector<std::size_t>& latent_lengths, std::size_t channels, std::size_t height,
                        std::size_t width, std::size_t patch);
TokenLayout make_layout(const MultiChunkLatent& latent, std::size_t patch);

/// Latent (frames x d x h x w) to raw patch rows [tokens, d*patch*patch].
Tensor patch_rows(const Tensor& latent, const TokenLayout& layout);
/// Inverse of patch_rows.
Tensor unpatch_rows(const Tensor& rows, const TokenLayout& layout);

struct TokenGrid {
    Tensor tokens;  // [n_tokens, model_dim]
    TokenLayout layout;
};

/// Linear patch embedding tokens = rows * weight + bias.
TokenGrid patchify(const MultiChunkLatent& latent, const Tensor& weight, const Tensor& bias, std::size_t patch);
/// Maps token rows of width d*patch*patch back to a latent tensor.
Tensor unpatchify(const Tensor& rows, const TokenLayout& layout);

/// Fixed sinusoidal features of the (u, y, x) coordinates, [tokens, model_dim].
Tensor coordinate_embedding(const TokenLayout& layout, std::size_t model_dim);
/// MC-RoPE angles for each token, [tokens, head_dim/2].
Tensor token_angles(const TokenLayout& layout, std::size_t head_dim);

/// Sinusoidal features of t (before the learned MLP), length model_dim.
Tensor timestep_features(double t, std::size_t model_dim);

using VarMap = std::map<std::string, ad::Var>;

/// Linear layers use U(-1/sqrt(fan_in), 1/sqrt(fan_in)); every modulation
/// projection and the output head start at zero.
ParamStore init_params(const ModelConfig& cfg, Rng& rng);

/// Conditioning vector c = MLP(timestep_features(t)) + scenario row, shape [model_dim].
ad::Var condition(const VarMap& p, const ModelConfig& cfg, double t, std::size_t scenario);
Tensor timestep_embed(const ParamStore& store, const ModelConfig& cfg, double t);

/// Precomputed per-layout constants shared by every forward call.
struct DitContext {
    TokenLayout layout;
    Tensor angles;
    Tensor coord_embed;
};
DitContext make_context(const TokenLayout& layout, const ModelConfig& cfg);

/// Differentiable velocity prediction for the (frames x d x h x w) latent z,
/// returned in patch-row layout [tokens, patch_dim] (see patch_rows).
ad::Var dit_rows(const Tensor& z, const DitContext& ctx, double t, std::size_t scenario, const VarMap& p,
                 const ModelConfig& cfg);
/// Value-only forward.
Tensor dit_forward(const Tensor& z, const DitContext& ctx, double t, std::size_t scenario, const ParamStore& store,
                   const ModelConfig& cfg);

// The config travels inside checkpoints as the tensor named "meta.config".
inline constexpr const char* kConfigTensor = "meta.config";
Tensor config_tensor(const ModelConfig& cfg);
ModelConfig config_from_tensor(const Tensor& t);
/// Store with the config tensor attached, ready for save_checkpoint.
ParamStore with_config(ParamStore store, const ModelConfig& cfg);
/// Splits a loaded checkpoint into its config and trainable parameters.
ModelConfig take_config(ParamStore& store);

}  // namespace mcflow
