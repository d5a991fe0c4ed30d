#pragma once

// Keyframe-conditioned super-resolution. The upsampled low-resolution latent
// is the t = 1 endpoint and the high-resolution latent is t = 0; keyframe
// latent positions carry the high-resolution encoding at both ends.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mcflow/chunking.hpp"
#include "mcflow/codec.hpp"
#include "mcflow/dit.hpp"
#include "mcflow/flowgen.hpp"
#include "mcflow/params.hpp"
#include "mcflow/video.hpp"

namespace mcflow {

inline constexpr std::size_t kSrScale = 2;

struct DegradeParams {
    double blur_sigma = 1.0;
    double noise_sigma = 0.02;
    std::size_t scale = kSrScale;

    /// Throws Error when a field is outside its range.
    void validate() const;
};

/// Per frame: 3x3 Gaussian blur (edge-replicated), 2x2 area downsample,
/// additive Gaussian noise, clamp to [0, 1].
Video degrade(const Video& hr, const DegradeParams& p, std::uint64_t seed);

/// 2x2 mean pooling of every frame of an (f, d, h, w) tensor.
Tensor area_downsample(const Tensor& z);
/// Nearest-neighbour 2x spatial upsampling of an (f, d, h, w) tensor.
Tensor upsample_latent(const Tensor& z);

/// Copy of z_lr_up with hr's frames at `positions` written in; both tensors
/// are latent-shaped.
Tensor inject_hr_keyframes(const Tensor& z_lr_up, const Tensor& hr, const std::vector<std::size_t>& positions);

/// (1 - t) z_hr + t z_lr_cond, evaluated as z_hr + t (z_lr_cond - z_hr) so that
/// frames where the endpoints agree stay fixed; t = 0, 1 return the endpoints.
Tensor sr_interpolate(const Tensor& z_hr, const Tensor& z_lr_cond, double t);

struct SRPair {
    MultiChunkLatent z_hr;
    Tensor z_lr_up;  // injected; same shape as z_hr.concat
    std::vector<std::size_t> positions;
};

/// Encodes both videos with the plan (the LR plan is the same frame plan at
/// half resolution), upsamples the LR latent and injects HR keyframe latents.
SRPair make_sr_pair(const Video& hr, const Video& lr, const ChunkPlan& plan);

/// Flow-matching example whose noise endpoint is the fixed LR latent.
Example sr_example(const SRPair& pair, const ModelConfig& cfg);

/// The injected upsampled-LR latent from which sampling starts, with HR
/// keyframe latents from the keyframe images.
MultiChunkLatent sr_start(const Video& lr, const std::vector<Video>& hr_keyframes, const ChunkPlan& plan);

/// Decoded start latent: super-resolution with zero velocity.
Video sr_baseline(const Video& lr, const std::vector<Video>& hr_keyframes, const KeyframeRequest& req);

Video sr_sample(const ParamStore& params, const ModelConfig& cfg, const Video& lr,
                const std::vector<Video>& hr_keyframes, const KeyframeRequest& req, std::size_t n_steps);

}  // namespace mcflow
