#include "mcflow/flowgen.hpp"

#include <cmath>

#include "mcflow/codec.hpp"
#include "mcflow/error.hpp"

namespace mcflow {
namespace {

std::size_t frame_stride(const Tensor& z, const FrameMask& mask) {
    if (z.rank() == 0 || z.dim(0) != mask.size()) {
        throw ShapeError("mask of " + std::to_string(mask.size()) + " frames does not match latent " +
                         shape_str(z.shape()));
    }
    return z.size() / z.dim(0);
}

void check_t(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw Error("t = " + std::to_string(t) + " outside [0, 1]");
}

}  // namespace

Tensor interpolate(const Tensor& z0, const Tensor& z1, double t, const FrameMask& mask) {
    require_same_shape(z0, z1, "interpolate");
    check_t(t);
    const std::size_t stride = frame_stride(z0, mask);
    Tensor zt = z0;
    for (std::size_t i = 0; i < zt.size(); ++i)
        if (!mask[i / stride]) zt[i] = (1.0 - t) * z0[i] + t * z1[i];
    return zt;
}

Tensor velocity_target(const Tensor& z0, const Tensor& z1, const FrameMask& mask) {
    require_same_shape(z0, z1, "velocity_target");
    const std::size_t stride = frame_stride(z0, mask);
    Tensor v(z0.shape());
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!mask[i / stride]) v[i] = z1[i] - z0[i];
    return v;
}

Tensor unmasked_weights(const Shape& latent_shape, const FrameMask& mask) {
    Tensor w(latent_shape);
    const std::size_t stride = frame_stride(w, mask);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = mask[i / stride] ? 0.0 : 1.0;
    return w;
}

double fm_loss(const Tensor& predicted, const Tensor& target, const FrameMask& mask) {
    require_same_shape(predicted, target, "fm_loss");
    const std::size_t stride = frame_stride(predicted, mask);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (mask[i / stride]) continue;
        const double d = predicted[i] - target[i];
        sum += d * d;
        ++n;
    }
    if (n == 0) throw Error("fm_loss: every position is masked");
    return sum / static_cast<double>(n);
}

ad::Var fm_loss(const ad::Var& predicted, const Tensor& target, const Tensor& weights) {
    require_same_shape(predicted.value(), target, "fm_loss");
    require_same_shape(target, weights, "fm_loss weights");
    double n = 0.0;
    for (double w : weights.data()) n += w;
    if (n == 0.0) throw Error("fm_loss: every position is masked");
    const ad::Var diff = ad::mul(ad::sub(predicted, ad::constant(target)), ad::constant(weights));
    return ad::scale(ad::sum(ad::square(diff)), 1.0 / n);
}

FlowSample make_sample(const Tensor& z0, const Tensor& z1, double t, const FrameMask& mask) {
    FlowSample s;
    s.z0 = z0;
    s.z1 = z1;
    s.t = t;
    s.mask = mask;
    s.zt = interpolate(z0, z1, t, mask);
    s.target = velocity_target(z0, z1, mask);
    return s;
}

FlowSample draw_sample(const Tensor& z0, const FrameMask& mask, Rng& rng) {
    Tensor z1 = randn(z0.shape(), rng);
    const double t = rng.uniform();
    return make_sample(z0, z1, t, mask);
}

std::vector<std::pair<const Example*, FlowSample>> draw_batch(const std::vector<Example>& examples, std::uint64_t seed,
                                                              std::uint64_t stream, std::size_t count) {
    if (examples.empty()) throw Error("no training examples");
    Rng rng(seed, stream);
    std::vector<std::pair<const Example*, FlowSample>> batch;
    for (std::size_t b = 0; b < count; ++b) {
        const Example& ex = examples[rng.below(examples.size())];
        if (ex.z1.empty())
            batch.emplace_back(&ex, draw_sample(ex.z0, ex.mask, rng));
        else
            batch.emplace_back(&ex, make_sample(ex.z0, ex.z1, rng.uniform(), ex.mask));
    }
    return batch;
}

namespace {

ad::Var sample_loss(const VarMap& p, const ModelConfig& cfg, const Example& ex, const FlowSample& s) {
    const TokenLayout& layout = ex.ctx->layout;
    const ad::Var pred = dit_rows(s.zt, *ex.ctx, s.t, ex.scenario, p, cfg);
    return fm_loss(pred, patch_rows(s.target, layout), patch_rows(unmasked_weights(s.zt.shape(), s.mask), layout));
}

ad::Var batch_loss(const VarMap& p, const ModelConfig& cfg,
                   const std::vector<std::pair<const Example*, FlowSample>>& batch) {
    ad::Var total;
    for (const auto& [ex, s] : batch) {
        const ad::Var l = sample_loss(p, cfg, *ex, s);
        total = total.valid() ? ad::add(total, l) : l;
    }
    return ad::scale(total, 1.0 / static_cast<double>(batch.size()));
}

VarMap constants(const ParamStore& store) {
    VarMap p;
    for (const auto& [name, value] : store.entries) p.emplace(name, ad::constant(value));
    return p;
}

}  // namespace

double evaluate_loss(const ParamStore& params, const ModelConfig& cfg,
                     const std::vector<std::pair<const Example*, FlowSample>>& batch) {
    if (batch.empty()) throw Error("empty evaluation batch");
    const VarMap p = constants(params);
    double sum = 0.0;
    for (const auto& [ex, s] : batch) sum += sample_loss(p, cfg, *ex, s).value().item();
    return sum / static_cast<double>(batch.size());
}

double train_step(ParamStore& params, AdamState& state, const ModelConfig& cfg, const AdamConfig& adam,
                  const std::vector<std::pair<const Example*, FlowSample>>& batch) {
    if (batch.empty()) throw Error("empty training batch");
    const ad::Var loss = batch_loss(params.leaves(), cfg, batch);
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
        throw NonFiniteError("non-finite loss at step " + std::to_string(params.step));
    }
    ad::Gradients grads = ad::backward(loss);
    fill_missing_gradients(params, grads);
    adam_step(params, grads, adam, state);
    return value;
}

TrainResult train(ParamStore& params, const ModelConfig& cfg, const std::vector<Example>& examples,
                  const TrainConfig& tc, const StepCallback& on_step) {
    if (tc.batch == 0) throw Error("batch size must be positive");
    // Stream 0 is the evaluation set; step s draws from stream s + 1.
    const auto eval_set = draw_batch(examples, tc.seed, 0, tc.eval_samples);
    TrainResult result;
    result.eval_initial = evaluate_loss(params, cfg, eval_set);
    AdamState state;
    for (std::size_t s = 0; s < tc.steps; ++s) {
        const auto batch = draw_batch(examples, tc.seed, s + 1, tc.batch);
        result.losses.push_back(train_step(params, state, cfg, tc.adam, batch));
        if (on_step) on_step(s, result.losses.back());
    }
    result.eval_final = evaluate_loss(params, cfg, eval_set);
    return result;
}

VelocityFn model_velocity(const ParamStore& params, const ModelConfig& cfg, std::shared_ptr<const DitContext> ctx,
                          std::size_t scenario) {
    return [&params, cfg, ctx = std::move(ctx), scenario](const Tensor& z, double t) {
        return dit_forward(z, *ctx, t, scenario, params, cfg);
    };
}

Tensor euler_integrate(const VelocityFn& v, Tensor z, const Tensor& clamp, const FrameMask& mask,
                       std::size_t n_steps) {
    if (n_steps == 0) throw Error("n_steps must be at least 1");
    require_same_shape(z, clamp, "euler_integrate");
    const std::size_t stride = frame_stride(z, mask);
    const double dt = 1.0 / static_cast<double>(n_steps);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = 1.0 - static_cast<double>(k) * dt;
        const Tensor vel = v(z, t);
        require_same_shape(z, vel, "velocity");
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = mask[i / stride] ? clamp[i] : z[i] - dt * vel[i];
        if (!z.all_finite()) throw NonFiniteError("non-finite sampler state at step " + std::to_string(k));
    }
    return z;
}

Tensor euler_sample(const VelocityFn& v, const Tensor& keyframe_latents, const FrameMask& mask, std::size_t n_steps,
                    std::uint64_t seed) {
    Rng rng(seed);
    const Tensor noise = randn(keyframe_latents.shape(), rng);
    const Tensor start = interpolate(keyframe_latents, noise, 1.0, mask);
    return euler_integrate(v, start, keyframe_latents, mask, n_steps);
}

MultiChunkLatent keyframe_condition(const std::vector<Video>& keyframes, const ChunkPlan& plan) {
    if (keyframes.size() != plan.chunk_count()) {
        throw Error("got " + std::to_string(keyframes.size()) + " keyframe images for " +
                    std::to_string(plan.chunk_count()) + " keyframes");
    }
    std::vector<LatentChunk> chunks;
    const auto lengths = latent_lengths(plan);
    for (std::size_t j = 0; j < keyframes.size(); ++j) {
        const LatentChunk key = encode_keyframe(keyframes[j]);
        LatentChunk c{Tensor({lengths[j], key.channels(), key.height(), key.width()})};
        std::copy(key.data.data().begin(), key.data.data().end(), c.data.data().begin());
        chunks.push_back(std::move(c));
    }
    return assemble_latent(std::move(chunks));
}

Example generation_example(const Video& video, const ChunkPlan& plan, std::size_t scenario, const ModelConfig& cfg) {
    if (scenario >= cfg.n_scenarios) {
        throw Error("scenario " + std::to_string(scenario) + " outside the model's " + std::to_string(cfg.n_scenarios));
    }
    const MultiChunkLatent lat = encode_video(video, plan);
    Example ex;
    ex.z0 = lat.concat;
    ex.mask = lat.keyframe_mask;
    ex.scenario = scenario;
    ex.ctx = std::make_shared<const DitContext>(make_context(make_layout(lat, cfg.patch_s), cfg));
    return ex;
}

Video generate(const ParamStore& params, const ModelConfig& cfg, const std::vector<Video>& keyframe_images,
               const KeyframeRequest& req, std::size_t n_steps, std::size_t scenario, std::uint64_t seed) {
    const ChunkPlan plan = snap_keyframes(req);
    for (const auto& k : keyframe_images) {
        if (k.frames() != 1 || k.channels() != cfg.channels || !k.same_geometry(keyframe_images.front())) {
            throw ShapeError("keyframe images must be single frames of equal size with " + std::to_string(cfg.channels) +
                             " channel(s)");
        }
    }
    const MultiChunkLatent cond = keyframe_condition(keyframe_images, plan);
    auto ctx = std::make_shared<const DitContext>(make_context(make_layout(cond, cfg.patch_s), cfg));
    const Tensor z = euler_sample(model_velocity(params, cfg, ctx, scenario), cond.concat, cond.keyframe_mask, n_steps,
                                  seed);
    return decode_multichunk(cond.with_concat(z));
}

}  // namespace mcflow
