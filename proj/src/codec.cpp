#include "mcflow/codec.hpp"

#include <cmath>

#include "mcflow/binary_io.hpp"
#include "mcflow/error.hpp"
#include "mcflow/kernels.hpp"

namespace mcflow {
namespace {

// Pairwise sums keep averages of equal values exact.
inline double mean4(double a, double b, double c, double d) { return ((a + b) + (c + d)) * 0.25; }

void pool_into(std::span<const double> frame, std::size_t channels, std::size_t height, std::size_t width,
               double* out) {
    const std::size_t oh = height / kSpatialFactor, ow = width / kSpatialFactor;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                const double* p = frame.data() + (c * height + 2 * y) * width + 2 * x;
                out[(c * oh + y) * ow + x] = mean4(p[0], p[1], p[width], p[width + 1]);
            }
}

}  // namespace

std::vector<std::size_t> MultiChunkLatent::latent_lengths() const {
    std::vector<std::size_t> f;
    for (const auto& c : chunks) f.push_back(c.frames());
    return f;
}

std::vector<std::size_t> MultiChunkLatent::keyframe_positions() const {
    std::vector<std::size_t> p;
    for (std::size_t i = 0; i < keyframe_mask.size(); ++i)
        if (keyframe_mask[i]) p.push_back(i);
    return p;
}

MultiChunkLatent MultiChunkLatent::with_concat(Tensor values) const {
    require_same_shape(concat, values, "with_concat");
    MultiChunkLatent out = latent_from_concat(values, latent_lengths());
    out.keyframe_mask = keyframe_mask;
    return out;
}

LatentChunk encode_chunk(const Video& chunk) {
    if (chunk.frames() == 0 || !valid_chunk_length(chunk.frames())) {
        throw ChunkingError("encode_chunk: chunk length " + std::to_string(chunk.frames()) + " is not 4n+1");
    }
    if (chunk.height() % kSpatialFactor || chunk.width() % kSpatialFactor) {
        throw ShapeError("encode_chunk: frame size " + std::to_string(chunk.height()) + "x" +
                         std::to_string(chunk.width()) + " is not divisible by 2");
    }
    const std::size_t f = latent_frames_for(chunk.frames());
    const std::size_t c = chunk.channels(), h = chunk.height(), w = chunk.width();
    LatentChunk out{Tensor({f, c, h / kSpatialFactor, w / kSpatialFactor})};
    const std::size_t lsize = out.frame_size();
    pool_into(chunk.frame_data(0), c, h, w, out.data.data().data());
    std::vector<double> group(chunk.frame_size());
    for (std::size_t i = 1; i < f; ++i) {
        const auto f0 = chunk.frame_data(4 * i - 3), f1 = chunk.frame_data(4 * i - 2);
        const auto f2 = chunk.frame_data(4 * i - 1), f3 = chunk.frame_data(4 * i);
        for (std::size_t p = 0; p < group.size(); ++p) group[p] = mean4(f0[p], f1[p], f2[p], f3[p]);
        pool_into(group, c, h, w, out.data.data().data() + i * lsize);
    }
    return out;
}

Video decode_chunk(const LatentChunk& latent) {
    const std::size_t f = latent.frames(), c = latent.channels(), h = latent.height(), w = latent.width();
    const std::size_t H = h * kSpatialFactor, W = w * kSpatialFactor;
    Video out(frames_for_latents(f), c, H, W);
    for (std::size_t t = 0; t < out.frames(); ++t) {
        const std::size_t li = t == 0 ? 0 : (t + 3) / kTemporalGroup;
        const double* src = latent.data.data().data() + li * latent.frame_size();
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x)
                    out.at(t, ch, y, x) = src[(ch * h + y / kSpatialFactor) * w + x / kSpatialFactor];
    }
    return out;
}

MultiChunkLatent assemble_latent(std::vector<LatentChunk> chunks) {
    if (chunks.empty()) throw ChunkingError("no chunks to assemble");
    const auto& first = chunks.front();
    std::size_t total = 0;
    for (const auto& ch : chunks) {
        if (ch.channels() != first.channels() || ch.height() != first.height() || ch.width() != first.width()) {
            throw ShapeError("latent chunks differ in geometry: " + shape_str(first.data.shape()) + " vs " +
                             shape_str(ch.data.shape()));
        }
        total += ch.frames();
    }
    MultiChunkLatent out;
    out.concat = Tensor({total, first.channels(), first.height(), first.width()});
    out.keyframe_mask.assign(total, false);
    std::size_t pos = 0;
    auto dst = out.concat.data().begin();
    for (const auto& ch : chunks) {
        out.keyframe_mask[pos] = true;
        pos += ch.frames();
        dst = std::copy(ch.data.data().begin(), ch.data.data().end(), dst);
    }
    out.chunks = std::move(chunks);
    return out;
}

MultiChunkLatent latent_from_concat(const Tensor& concat, const std::vector<std::size_t>& lengths) {
    if (concat.rank() != 4) throw ShapeError("latent tensor must be rank 4, got " + shape_str(concat.shape()));
    std::size_t total = 0;
    for (auto f : lengths) total += f;
    if (total != concat.dim(0)) {
        throw ShapeError("latent has " + std::to_string(concat.dim(0)) + " frames but chunk lengths sum to " +
                         std::to_string(total));
    }
    const std::size_t fsize = concat.size() / std::max<std::size_t>(1, concat.dim(0));
    std::vector<LatentChunk> chunks;
    std::size_t start = 0;
    for (auto f : lengths) {
        Tensor t({f, concat.dim(1), concat.dim(2), concat.dim(3)});
        std::copy_n(concat.data().begin() + start * fsize, t.size(), t.data().begin());
        chunks.push_back({std::move(t)});
        start += f;
    }
    return assemble_latent(std::move(chunks));
}

MultiChunkLatent encode_multichunk(const std::vector<Video>& chunks) {
    if (chunks.empty()) throw ChunkingError("encode_multichunk: empty chunk list");
    for (const auto& c : chunks) {
        if (!valid_chunk_length(c.frames())) {
            throw ChunkingError("encode_multichunk: chunk length " + std::to_string(c.frames()) + " is not 4n+1");
        }
    }
    std::vector<LatentChunk> latents(chunks.size());
    bool failed = false;
#pragma omp parallel for schedule(static) num_threads(kernels::threads())
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(chunks.size()); ++j) {
        try {
            latents[j] = encode_chunk(chunks[j]);
        } catch (...) {
#pragma omp atomic write
            failed = true;
        }
    }
    if (failed) {
        // Re-run serially to surface the first error with its message.
        for (const auto& c : chunks) encode_chunk(c);
    }
    return assemble_latent(std::move(latents));
}

MultiChunkLatent encode_video(const Video& video, const ChunkPlan& plan) {
    return encode_multichunk(split_video(video, plan));
}

Video decode_multichunk(const MultiChunkLatent& latent) {
    std::vector<Video> parts;
    for (const auto& c : latent.chunks) parts.push_back(decode_chunk(c));
    return Video::concat(parts);
}

LatentChunk encode_keyframe(const Video& frame) {
    if (frame.frames() != 1) throw ShapeError("encode_keyframe expects a single frame");
    return encode_chunk(frame);
}

MultiChunkLatent naive_insert_encode(const Video& video, const std::vector<std::size_t>& keyframes) {
    LatentChunk whole = encode_chunk(video);
    MultiChunkLatent out = assemble_latent({whole});
    const std::size_t fsize = whole.frame_size();
    for (std::size_t k : keyframes) {
        if (k >= video.frames()) {
            throw ChunkingError("keyframe " + std::to_string(k) + " outside " + std::to_string(video.frames()) +
                                " frames");
        }
        const auto pos = static_cast<std::size_t>(std::lround(static_cast<double>(k) / kTemporalGroup));
        const LatentChunk key = encode_keyframe(video.frame(k));
        std::copy(key.data.data().begin(), key.data.data().end(), out.concat.data().begin() + pos * fsize);
        std::copy(key.data.data().begin(), key.data.data().end(), out.chunks[0].data.data().begin() + pos * fsize);
        out.keyframe_mask[pos] = true;
    }
    return out;
}

MultiChunkLatent replicate_encode(const Video& video, const ChunkPlan& plan) {
    auto chunks = split_video(video, plan);
    for (auto& chunk : chunks) {
        if (chunk.frames() < kMinChunkFrames) {
            throw ChunkingError("replicate_encode: chunk of " + std::to_string(chunk.frames()) +
                                " frames is shorter than " + std::to_string(kMinChunkFrames));
        }
        const auto key = chunk.frame_data(0);
        for (std::size_t t = 1; t < kMinChunkFrames; ++t) {
            auto dst = chunk.frame_data(t);
            std::copy(key.begin(), key.end(), dst.begin());
        }
    }
    return encode_multichunk(chunks);
}

void save_latent(const std::filesystem::path& path, const MultiChunkLatent& latent) {
    io::Writer w;
    w.magic("MCLT");
    w.u32(static_cast<std::uint32_t>(latent.chunks.size()));
    for (const auto& c : latent.chunks) {
        for (std::size_t d : c.data.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (double v : c.data.data()) w.f64(v);
    }
    for (bool m : latent.keyframe_mask) w.u8(m ? 1 : 0);
    io::write_file(path.string(), w.buffer());
}

MultiChunkLatent load_latent(const std::filesystem::path& path) {
    io::Reader r(io::read_file(path.string()));
    r.expect_magic("MCLT");
    const std::uint32_t n = r.u32();
    std::vector<LatentChunk> chunks;
    for (std::uint32_t j = 0; j < n; ++j) {
        Shape shape;
        std::uint64_t numel = 1;
        const std::size_t at = r.offset();
        for (int i = 0; i < 4; ++i) {
            shape.push_back(r.u32());
            numel *= shape.back();
        }
        if (numel > (std::uint64_t{1} << 36)) {
            throw io::FormatError(io::FormatError::Kind::dim_overflow, at, "dimension overflow");
        }
        r.need(numel * 8, "truncated payload");
        std::vector<double> data(numel);
        for (auto& v : data) v = r.f64();
        chunks.push_back({Tensor(std::move(shape), std::move(data))});
    }
    MultiChunkLatent out = assemble_latent(std::move(chunks));
    for (std::size_t i = 0; i < out.keyframe_mask.size(); ++i) out.keyframe_mask[i] = r.u8() != 0;
    return out;
}

}  // namespace mcflow
