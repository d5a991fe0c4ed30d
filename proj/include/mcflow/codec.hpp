#pragma once

// Analytic causal video codec. Latent frame 0 of a chunk is the 2x2
// average-pooled first frame; latent frame i >= 1 is the pooled temporal mean
// of frames 4i-3 .. 4i. Latent frame i therefore only sees frames <= 4i, and
// chunks are encoded independently of one another.

#include <cstddef>
#include <filesystem>
#include <vector>

#include "mcflow/chunking.hpp"
#include "mcflow/tensor.hpp"
#include "mcflow/video.hpp"

namespace mcflow {

inline constexpr std::size_t kSpatialFactor = 2;

/// f x d x h x w latent of one chunk.
struct LatentChunk {
    Tensor data;

    std::size_t frames() const { return data.dim(0); }
    std::size_t channels() const { return data.dim(1); }
    std::size_t height() const { return data.dim(2); }
    std::size_t width() const { return data.dim(3); }
    std::size_t frame_size() const { return channels() * height() * width(); }

    friend bool operator==(const LatentChunk&, const LatentChunk&) = default;
};

/// Chunk latents plus their temporal concatenation and keyframe mask.
struct MultiChunkLatent {
    std::vector<LatentChunk> chunks;
    std::vector<bool> keyframe_mask;  // one entry per concatenated latent frame
    Tensor concat;                    // (sum f_j) x d x h x w

    std::vector<std::size_t> latent_lengths() const;
    std::vector<std::size_t> keyframe_positions() const;
    std::size_t total_frames() const { return concat.dim(0); }

    /// Rebuilds chunks from a replacement concatenated tensor with the same layout.
    MultiChunkLatent with_concat(Tensor values) const;

    friend bool operator==(const MultiChunkLatent&, const MultiChunkLatent&) = default;
};

LatentChunk encode_chunk(const Video& chunk);
Video decode_chunk(const LatentChunk& latent);

/// Encodes every chunk independently and concatenates; chunks are encoded in
/// parallel when kernels::threads() > 1.
MultiChunkLatent encode_multichunk(const std::vector<Video>& chunks);
MultiChunkLatent encode_video(const Video& video, const ChunkPlan& plan);

/// Assembles a MultiChunkLatent from chunk latents, marking each chunk's first frame.
MultiChunkLatent assemble_latent(std::vector<LatentChunk> chunks);
/// Splits a concatenated latent tensor by chunk latent lengths.
MultiChunkLatent latent_from_concat(const Tensor& concat, const std::vector<std::size_t>& lengths);

/// Decodes each chunk and concatenates the frames.
Video decode_multichunk(const MultiChunkLatent& latent);

/// Single-frame encoding of one keyframe (a 1-frame chunk).
LatentChunk encode_keyframe(const Video& frame);

/// Ablation: encode the whole video as one causal chunk, then overwrite the
/// latent frame nearest each keyframe (index round(k/4)) with that keyframe's
/// standalone encoding.
MultiChunkLatent naive_insert_encode(const Video& video, const std::vector<std::size_t>& keyframes);

/// Ablation: per chunk, replace the first five frames with copies of the
/// keyframe, then encode as usual.
MultiChunkLatent replicate_encode(const Video& video, const ChunkPlan& plan);

// MCLT: "MCLT", u32 n_chunks, per chunk u32 f, d, h, w and f64 data, then one
// mask byte per concatenated latent frame.
void save_latent(const std::filesystem::path& path, const MultiChunkLatent& latent);
MultiChunkLatent load_latent(const std::filesystem::path& path);

}  // namespace mcflow
