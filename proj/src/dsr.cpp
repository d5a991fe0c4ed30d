#include "mcflow/dsr.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>

#include "mcflow/error.hpp"
#include "mcflow/rng.hpp"

namespace mcflow {
namespace {

void require_4d(const Tensor& z, const char* what) {
    if (z.rank() != 4) throw ShapeError(std::string(what) + ": expected a 4-d tensor, got " + shape_str(z.shape()));
}

std::array<double, 3> blur_taps(double sigma) {
    if (sigma == 0.0) return {0.0, 1.0, 0.0};
    const double side = std::exp(-1.0 / (2.0 * sigma * sigma));
    const double norm = 1.0 + 2.0 * side;
    return {side / norm, 1.0 / norm, side / norm};
}

// Separable 3x3 blur of one h x w plane with replicated edges.
void blur_plane(std::span<const double> src, std::span<double> dst, std::size_t h, std::size_t w,
                const std::array<double, 3>& k) {
    std::vector<double> tmp(h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t xl = x == 0 ? 0 : x - 1, xr = std::min(x + 1, w - 1);
            tmp[y * w + x] = k[0] * src[y * w + xl] + k[1] * src[y * w + x] + k[2] * src[y * w + xr];
        }
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t yu = y == 0 ? 0 : y - 1, yd = std::min(y + 1, h - 1);
        for (std::size_t x = 0; x < w; ++x)
            dst[y * w + x] = k[0] * tmp[yu * w + x] + k[1] * tmp[y * w + x] + k[2] * tmp[yd * w + x];
    }
}

}  // namespace

void DegradeParams::validate() const {
    if (!(blur_sigma >= 0.0 && blur_sigma <= 1.0))
        throw Error("blur_sigma " + std::to_string(blur_sigma) + " outside [0, 1]");
    if (!(noise_sigma >= 0.0 && noise_sigma <= 0.05))
        throw Error("noise_sigma " + std::to_string(noise_sigma) + " outside [0, 0.05]");
    if (scale != kSrScale) throw Error("degradation scale must be " + std::to_string(kSrScale));
}

Video degrade(const Video& hr, const DegradeParams& p, std::uint64_t seed) {
    p.validate();
    if (hr.height() % kSrScale != 0 || hr.width() % kSrScale != 0) {
        throw ShapeError("degrade: " + std::to_string(hr.height()) + "x" + std::to_string(hr.width()) +
                         " is not divisible by " + std::to_string(kSrScale));
    }
    const std::size_t h = hr.height(), w = hr.width();
    Tensor blurred(hr.pixels().shape());
    const auto taps = blur_taps(p.blur_sigma);
    const std::span<const double> src = hr.pixels().data();
    const std::span<double> dst = blurred.data();
    for (std::size_t plane = 0; plane < hr.frames() * hr.channels(); ++plane)
        blur_plane(src.subspan(plane * h * w, h * w), dst.subspan(plane * h * w, h * w), h, w, taps);

    Tensor lr = area_downsample(blurred);
    Rng rng(seed);
    for (double& v : lr.data()) {
        if (p.noise_sigma > 0.0) v += p.noise_sigma * rng.normal();
        v = std::clamp(v, 0.0, 1.0);
    }
    return Video(std::move(lr));
}

Tensor area_downsample(const Tensor& z) {
    require_4d(z, "area_downsample");
    const std::size_t f = z.dim(0), d = z.dim(1), h = z.dim(2), w = z.dim(3);
    if (h % kSrScale != 0 || w % kSrScale != 0)
        throw ShapeError("area_downsample: odd spatial size " + shape_str(z.shape()));
    Tensor out({f, d, h / 2, w / 2});
    const auto in = z.data();
    auto o = out.data();
    std::size_t k = 0;
    for (std::size_t p = 0; p < f * d; ++p)
        for (std::size_t y = 0; y < h; y += 2)
            for (std::size_t x = 0; x < w; x += 2) {
                const std::size_t i = (p * h + y) * w + x;
                o[k++] = ((in[i] + in[i + 1]) + (in[i + w] + in[i + w + 1])) * 0.25;
            }
    return out;
}

Tensor upsample_latent(const Tensor& z) {
    require_4d(z, "upsample_latent");
    const std::size_t f = z.dim(0), d = z.dim(1), h = z.dim(2), w = z.dim(3);
    const std::size_t H = h * kSrScale, W = w * kSrScale;
    Tensor out({f, d, H, W});
    const auto in = z.data();
    auto o = out.data();
    for (std::size_t p = 0; p < f * d; ++p)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) o[(p * H + y) * W + x] = in[(p * h + y / 2) * w + x / 2];
    return out;
}

Tensor inject_hr_keyframes(const Tensor& z_lr_up, const Tensor& hr, const std::vector<std::size_t>& positions) {
    require_4d(z_lr_up, "inject_hr_keyframes");
    if (z_lr_up.shape() != hr.shape()) {
        throw ShapeError("inject_hr_keyframes: LR latent " + shape_str(z_lr_up.shape()) + " vs HR latent " +
                         shape_str(hr.shape()));
    }
    const std::size_t stride = z_lr_up.size() / z_lr_up.dim(0);
    Tensor out = z_lr_up;
    for (std::size_t p : positions) {
        if (p >= z_lr_up.dim(0)) {
            throw Error("keyframe latent position " + std::to_string(p) + " out of range for " +
                        std::to_string(z_lr_up.dim(0)) + " latent frames");
        }
        const auto src = hr.data().subspan(p * stride, stride);
        std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(p * stride));
    }
    return out;
}

Tensor sr_interpolate(const Tensor& z_hr, const Tensor& z_lr_cond, double t) {
    if (z_hr.shape() != z_lr_cond.shape()) {
        throw ShapeError("sr_interpolate: " + shape_str(z_hr.shape()) + " vs " + shape_str(z_lr_cond.shape()));
    }
    if (!(t >= 0.0 && t <= 1.0)) throw Error("sr_interpolate: t = " + std::to_string(t) + " outside [0, 1]");
    if (t == 0.0) return z_hr;
    if (t == 1.0) return z_lr_cond;
    Tensor out(z_hr.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = z_hr[i] + t * (z_lr_cond[i] - z_hr[i]);
    return out;
}

SRPair make_sr_pair(const Video& hr, const Video& lr, const ChunkPlan& plan) {
    if (lr.frames() != hr.frames() || lr.channels() != hr.channels() || lr.height() * kSrScale != hr.height() ||
        lr.width() * kSrScale != hr.width()) {
        throw ShapeError("make_sr_pair: LR " + shape_str(lr.pixels().shape()) + " is not a half-size " +
                         shape_str(hr.pixels().shape()));
    }
    SRPair pair;
    pair.z_hr = encode_video(hr, plan);
    pair.positions = pair.z_hr.keyframe_positions();
    pair.z_lr_up =
        inject_hr_keyframes(upsample_latent(encode_video(lr, plan).concat), pair.z_hr.concat, pair.positions);
    return pair;
}

Example sr_example(const SRPair& pair, const ModelConfig& cfg) {
    Example ex;
    ex.z0 = pair.z_hr.concat;
    ex.z1 = pair.z_lr_up;
    ex.mask = pair.z_hr.keyframe_mask;
    ex.ctx = std::make_shared<const DitContext>(make_context(make_layout(pair.z_hr, cfg.patch_s), cfg));
    return ex;
}

MultiChunkLatent sr_start(const Video& lr, const std::vector<Video>& hr_keyframes, const ChunkPlan& plan) {
    if (lr.frames() != plan.total_frames()) {
        throw ShapeError("LR video has " + std::to_string(lr.frames()) + " frames but the plan covers " +
                         std::to_string(plan.total_frames()));
    }
    const MultiChunkLatent cond = keyframe_condition(hr_keyframes, plan);
    const Tensor up = upsample_latent(encode_video(lr, plan).concat);
    if (up.shape() != cond.concat.shape()) {
        throw ShapeError("HR keyframes do not match twice the LR size: latent " + shape_str(cond.concat.shape()) +
                         " vs upsampled " + shape_str(up.shape()));
    }
    return cond.with_concat(inject_hr_keyframes(up, cond.concat, cond.keyframe_positions()));
}

Video sr_baseline(const Video& lr, const std::vector<Video>& hr_keyframes, const KeyframeRequest& req) {
    return decode_multichunk(sr_start(lr, hr_keyframes, snap_keyframes(req)));
}

Video sr_sample(const ParamStore& params, const ModelConfig& cfg, const Video& lr,
                const std::vector<Video>& hr_keyframes, const KeyframeRequest& req, std::size_t n_steps) {
    const ChunkPlan plan = snap_keyframes(req);
    const MultiChunkLatent start = sr_start(lr, hr_keyframes, plan);
    auto ctx = std::make_shared<const DitContext>(make_context(make_layout(start, cfg.patch_s), cfg));
    const Tensor z = euler_integrate(model_velocity(params, cfg, ctx, 0), start.concat, start.concat,
                                     start.keyframe_mask, n_steps);
    return decode_multichunk(start.with_concat(z));
}

}  // namespace mcflow
