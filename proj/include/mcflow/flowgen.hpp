#pragma once

// Masked flow matching. Latent tensors are (frames x d x h x w); a mask entry
// per latent frame marks keyframe latents, which stay clean at every t and
// are excluded from the loss.

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "mcflow/chunking.hpp"
#include "mcflow/dit.hpp"
#include "mcflow/params.hpp"
#include "mcflow/rng.hpp"
#include "mcflow/video.hpp"

namespace mcflow {

using FrameMask = std::vector<bool>;

/// unmasked: (1 - t) z0 + t z1; masked frames: z0.
Tensor interpolate(const Tensor& z0, const Tensor& z1, double t, const FrameMask& mask);
/// z1 - z0 on unmasked frames, 0 on masked frames.
Tensor velocity_target(const Tensor& z0, const Tensor& z1, const FrameMask& mask);

/// Elementwise 0/1 weights of a latent-shaped tensor: 1 on unmasked frames.
Tensor unmasked_weights(const Shape& latent_shape, const FrameMask& mask);

/// Mean squared error over unmasked frames only.
double fm_loss(const Tensor& predicted, const Tensor& target, const FrameMask& mask);
/// Differentiable form; weights is 0/1 with the shape of predicted.
ad::Var fm_loss(const ad::Var& predicted, const Tensor& target, const Tensor& weights);

struct FlowSample {
    Tensor z0, z1;
    double t = 0.0;
    Tensor zt;
    FrameMask mask;
    Tensor target;
};

/// Draws z1 ~ N(0, 1) and t ~ U(0, 1) and fills zt and target.
FlowSample draw_sample(const Tensor& z0, const FrameMask& mask, Rng& rng);
/// Builds a sample from a fixed endpoint pair (used by super-resolution).
FlowSample make_sample(const Tensor& z0, const Tensor& z1, double t, const FrameMask& mask);

/// One training example: a clean latent with its keyframe mask, condition and layout.
struct Example {
    Tensor z0;
    FrameMask mask;
    std::size_t scenario = 0;
    std::shared_ptr<const DitContext> ctx;
    Tensor z1;  // fixed t = 1 endpoint; empty means Gaussian noise per draw
};

/// Encodes a video with the plan into a generation example.
Example generation_example(const Video& video, const ChunkPlan& plan, std::size_t scenario, const ModelConfig& cfg);

struct TrainConfig {
    AdamConfig adam;
    std::size_t steps = 2000;
    std::size_t batch = 1;
    std::uint64_t seed = 0;
    std::size_t eval_samples = 16;
};

/// Samples drawn for step `step` (or for the fixed evaluation set) from the
/// examples; a pure function of (examples, seed, step).
std::vector<std::pair<const Example*, FlowSample>> draw_batch(const std::vector<Example>& examples, std::uint64_t seed,
                                                              std::uint64_t stream, std::size_t count);

/// Mean masked loss of the model over (example, sample) pairs.
double evaluate_loss(const ParamStore& params, const ModelConfig& cfg,
                     const std::vector<std::pair<const Example*, FlowSample>>& batch);

/// One Adam update on the batch mean loss; returns the loss before the update.
/// Throws NonFiniteError naming the step on a non-finite loss.
double train_step(ParamStore& params, AdamState& state, const ModelConfig& cfg, const AdamConfig& adam,
                  const std::vector<std::pair<const Example*, FlowSample>>& batch);

struct TrainResult {
    std::vector<double> losses;  // per step
    double eval_initial = 0.0;   // fixed evaluation set before training
    double eval_final = 0.0;     // same set after training
};

using StepCallback = std::function<void(std::size_t step, double loss)>;
TrainResult train(ParamStore& params, const ModelConfig& cfg, const std::vector<Example>& examples,
                  const TrainConfig& tc, const StepCallback& on_step = nullptr);

/// Velocity field v(z, t).
using VelocityFn = std::function<Tensor(const Tensor& z, double t)>;
VelocityFn model_velocity(const ParamStore& params, const ModelConfig& cfg, std::shared_ptr<const DitContext> ctx,
                          std::size_t scenario);

/// Euler integration of dz/dt = v from t = 1 to t = 0 starting at `start`,
/// re-clamping masked frames to `clamp` after every step.
Tensor euler_integrate(const VelocityFn& v, Tensor start, const Tensor& clamp, const FrameMask& mask,
                       std::size_t n_steps);

/// Starts from seeded unit Gaussian noise on unmasked frames and the keyframe
/// latents on masked frames. `keyframe_latents` is latent-shaped; only its
/// masked frames are read.
Tensor euler_sample(const VelocityFn& v, const Tensor& keyframe_latents, const FrameMask& mask, std::size_t n_steps,
                    std::uint64_t seed);

/// Latent-shaped conditioning tensor with each keyframe's standalone encoding
/// at its chunk's first latent frame.
MultiChunkLatent keyframe_condition(const std::vector<Video>& keyframes, const ChunkPlan& plan);

Video generate(const ParamStore& params, const ModelConfig& cfg, const std::vector<Video>& keyframe_images,
               const KeyframeRequest& req, std::size_t n_steps, std::size_t scenario, std::uint64_t seed);

}  // namespace mcflow
