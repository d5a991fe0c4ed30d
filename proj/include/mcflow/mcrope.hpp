#pragma once

// Multi-Chunk rotary position embeddings. Temporal indices advance by 1 per
// latent frame, except at the first latent of every chunk after the first,
// where they advance by 0.25.

#include <cstddef>
#include <vector>

#include "mcflow/tensor.hpp"

namespace mcflow {

inline constexpr double kRopeBase = 10000.0;
inline constexpr double kKeyframeStep = 0.25;

std::vector<double> mc_temporal_indices(const std::vector<std::size_t>& latent_lengths);

/// Pair counts of the temporal, height and width bands (head_dim split 2:1:1).
struct RopeBands {
    std::size_t t = 0, y = 0, x = 0;
    std::size_t pairs() const { return t + y + x; }
};
RopeBands rope_bands(std::size_t head_dim);

/// head_dim / 2 rotation angles for one token. Band b with dimension B uses
/// frequencies 10000^(-2m/B), m = 0 .. B/2 - 1.
std::vector<double> rope_phases(double u, double y, double x, std::size_t head_dim);

/// Angle table [n_tokens, head_dim/2] for tokens at (u[i], ys[i], xs[i]).
Tensor rope_angle_table(const std::vector<double>& u, const std::vector<double>& ys, const std::vector<double>& xs,
                        std::size_t head_dim);

/// Rotates consecutive pairs (2p, 2p+1) of each head in x [tokens, heads*head_dim]
/// by angles [tokens, head_dim/2].
Tensor apply_rope(const Tensor& x, const Tensor& angles);

}  // namespace mcflow
