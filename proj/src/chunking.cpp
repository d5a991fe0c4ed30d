#include "mcflow/chunking.hpp"

#include <algorithm>
#include <numeric>

namespace mcflow {
namespace {

bool chunk_length_ok(std::size_t length, bool only_chunk) {
    if (!valid_chunk_length(length)) return false;
    return length >= kMinChunkFrames || (only_chunk && length == 1);
}

std::string list_str(const std::vector<std::size_t>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s + "]";
}

}  // namespace

std::size_t ChunkPlan::total_frames() const { return std::accumulate(lengths.begin(), lengths.end(), std::size_t{0}); }

ChunkPlan snap_keyframes(const KeyframeRequest& req) {
    if (req.total_frames == 0) throw ChunkingError("total_frames must be positive");
    if (req.requested.empty() || req.requested.front() != 0) {
        throw ChunkingError("keyframe 0 must be requested; got " + list_str(req.requested));
    }
    for (std::size_t i = 1; i < req.requested.size(); ++i) {
        if (req.requested[i] <= req.requested[i - 1]) {
            throw ChunkingError("requested keyframes must be strictly increasing; got " + list_str(req.requested));
        }
    }
    if (req.requested.back() >= req.total_frames) {
        throw ChunkingError("keyframe " + std::to_string(req.requested.back()) + " outside " +
                            std::to_string(req.total_frames) + " frames");
    }

    ChunkPlan plan;
    plan.keyframes.push_back(0);
    plan.snap_offsets.push_back(0);
    for (std::size_t j = 1; j < req.requested.size(); ++j) {
        const auto prev = static_cast<long>(plan.keyframes.back());
        const auto want = static_cast<long>(req.requested[j]);
        // Exactly one of any four consecutive indices is 1 mod 4 past prev,
        // so scanning offsets -2..+2 (earlier first) always finds one.
        long best = -1;
        for (long off = -kMaxSnap; off <= kMaxSnap; ++off) {
            const long k = want + off;
            if (k <= prev || (k - prev) % static_cast<long>(kTemporalGroup) != 1) continue;
            if (best < 0 || std::abs(k - want) < std::abs(best - want)) best = k;
        }
        if (best < 0 || best - prev < static_cast<long>(kMinChunkFrames)) {
            throw ChunkingError("keyframe " + std::to_string(want) + " snaps to within " +
                                std::to_string(kMinChunkFrames) + " frames of keyframe " + std::to_string(prev) +
                                " (degenerate chunk)");
        }
        if (best >= static_cast<long>(req.total_frames)) {
            throw ChunkingError("keyframe " + std::to_string(want) + " snaps to " + std::to_string(best) +
                                ", past the last frame " + std::to_string(req.total_frames - 1));
        }
        plan.keyframes.push_back(static_cast<std::size_t>(best));
        plan.snap_offsets.push_back(best - want);
    }

    for (std::size_t j = 0; j + 1 < plan.keyframes.size(); ++j)
        plan.lengths.push_back(plan.keyframes[j + 1] - plan.keyframes[j]);
    const std::size_t last = plan.keyframes.back();
    const std::size_t tail = req.total_frames - last;
    const bool only = plan.keyframes.size() == 1;
    if (!chunk_length_ok(tail, only)) {
        // Nearest total whose final chunk is admissible; ties go to the shorter video.
        std::size_t nearest = 0;
        for (std::size_t d = 0;; ++d) {
            if (req.total_frames > d && req.total_frames - d > last && chunk_length_ok(req.total_frames - d - last, only)) {
                nearest = req.total_frames - d;
                break;
            }
            if (chunk_length_ok(req.total_frames + d - last, only)) {
                nearest = req.total_frames + d;
                break;
            }
        }
        throw ChunkingError("total_frames " + std::to_string(req.total_frames) + " leaves a final chunk of " +
                                std::to_string(tail) + " frames; nearest admissible total_frames is " +
                                std::to_string(nearest),
                            nearest);
    }
    plan.lengths.push_back(tail);
    return plan;
}

ChunkPlan plan_from_lengths(const std::vector<std::size_t>& lengths) {
    ChunkPlan plan;
    std::size_t start = 0;
    for (std::size_t len : lengths) {
        plan.keyframes.push_back(start);
        plan.snap_offsets.push_back(0);
        plan.lengths.push_back(len);
        start += len;
    }
    validate_plan(plan);
    return plan;
}

void validate_plan(const ChunkPlan& plan) {
    if (plan.lengths.empty()) throw ChunkingError("plan has no chunks");
    if (plan.keyframes.size() != plan.lengths.size() || plan.snap_offsets.size() != plan.lengths.size()) {
        throw ChunkingError("plan keyframes, lengths and offsets differ in size");
    }
    std::size_t start = 0;
    for (std::size_t j = 0; j < plan.lengths.size(); ++j) {
        if (plan.keyframes[j] != start) {
            throw ChunkingError("keyframe " + std::to_string(j) + " at " + std::to_string(plan.keyframes[j]) +
                                " does not start its chunk (expected " + std::to_string(start) + ")");
        }
        if (!chunk_length_ok(plan.lengths[j], plan.lengths.size() == 1)) {
            throw ChunkingError("chunk " + std::to_string(j) + " has invalid length " + std::to_string(plan.lengths[j]) +
                                " (need 4n+1 and at least " + std::to_string(kMinChunkFrames) + ")");
        }
        if (std::abs(plan.snap_offsets[j]) > kMaxSnap) throw ChunkingError("snap offset beyond +-2");
        start += plan.lengths[j];
    }
}

std::vector<std::size_t> latent_lengths(const ChunkPlan& plan) {
    validate_plan(plan);
    std::vector<std::size_t> f;
    for (std::size_t len : plan.lengths) f.push_back(latent_frames_for(len));
    return f;
}

std::vector<std::size_t> keyframe_latent_positions(const ChunkPlan& plan) {
    std::vector<std::size_t> positions;
    std::size_t p = 0;
    for (std::size_t f : latent_lengths(plan)) {
        positions.push_back(p);
        p += f;
    }
    return positions;
}

std::vector<Video> split_video(const Video& video, const ChunkPlan& plan) {
    validate_plan(plan);
    if (video.frames() != plan.total_frames()) {
        throw ChunkingError("video has " + std::to_string(video.frames()) + " frames but the plan covers " +
                            std::to_string(plan.total_frames()));
    }
    std::vector<Video> chunks;
    for (std::size_t j = 0; j < plan.chunk_count(); ++j)
        chunks.push_back(video.slice(plan.keyframes[j], plan.keyframes[j] + plan.lengths[j]));
    return chunks;
}

}  // namespace mcflow
