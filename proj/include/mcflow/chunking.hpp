#pragma once

// Keyframe-aligned chunk partitions for the causal codec. A chunk starts at a
// keyframe and its length must be 4n + 1 so that the codec's "first frame
// alone, then groups of four" layout tiles it exactly.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mcflow/error.hpp"
#include "mcflow/video.hpp"

namespace mcflow {

inline constexpr std::size_t kTemporalGroup = 4;
inline constexpr std::size_t kMinChunkFrames = 5;
inline constexpr long kMaxSnap = 2;

struct KeyframeRequest {
    std::size_t total_frames = 0;
    std::vector<std::size_t> requested;  // sorted, unique, contains 0
};

struct ChunkPlan {
    std::vector<std::size_t> keyframes;
    std::vector<std::size_t> lengths;
    std::vector<long> snap_offsets;  // snapped minus requested, per keyframe

    std::size_t total_frames() const;
    std::size_t chunk_count() const { return lengths.size(); }

    friend bool operator==(const ChunkPlan&, const ChunkPlan&) = default;
};

class ChunkingError : public Error {
public:
    ChunkingError(const std::string& what, std::optional<std::size_t> nearest_total = std::nullopt)
        : Error(what), nearest_total_(nearest_total) {}
    /// Set when the request failed only because of total_frames.
    std::optional<std::size_t> nearest_admissible_total() const { return nearest_total_; }

private:
    std::optional<std::size_t> nearest_total_;
};

constexpr bool valid_chunk_length(std::size_t length) { return length % kTemporalGroup == 1; }
constexpr std::size_t latent_frames_for(std::size_t length) { return 1 + (length - 1) / kTemporalGroup; }
constexpr std::size_t frames_for_latents(std::size_t latents) { return 1 + kTemporalGroup * (latents - 1); }

/// Greedy left-to-right snapping: each keyframe moves to the nearest index
/// that makes the preceding chunk 1 mod 4 long, preferring the earlier frame
/// on ties.
ChunkPlan snap_keyframes(const KeyframeRequest& req);

/// Plan from explicit chunk lengths (keyframes at the cumulative starts).
ChunkPlan plan_from_lengths(const std::vector<std::size_t>& lengths);

/// Throws ChunkingError unless the plan satisfies every chunk law.
void validate_plan(const ChunkPlan& plan);

std::vector<std::size_t> latent_lengths(const ChunkPlan& plan);
std::vector<std::size_t> keyframe_latent_positions(const ChunkPlan& plan);

std::vector<Video> split_video(const Video& video, const ChunkPlan& plan);

}  // namespace mcflow
