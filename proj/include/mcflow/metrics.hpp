#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mcflow/chunking.hpp"
#include "mcflow/video.hpp"

namespace mcflow {

/// 10 log10(1 / MSE) for pixels in [0, 1]; +infinity for identical inputs.
double psnr(const Video& a, const Video& b);
double psnr_frames(const Video& a, const Video& b, const std::vector<std::size_t>& frames);

/// Single-scale SSIM of two single-frame videos: 8x8 windows at stride 8,
/// K1 = 0.01, K2 = 0.03, L = 1, averaged over windows and channels.
double ssim(const Video& a, const Video& b);

/// Minimum PSNR over keyframe positions between the video frame and the codec
/// round trip of the corresponding keyframe image.
double keyframe_adherence(const Video& v, const std::vector<Video>& keyframes, const ChunkPlan& plan);

struct GsbTally {
    double wins = 0, losses = 0, ties = 0;
};
double gsb(const GsbTally& t);

/// Five-point ratings, 1 = A significantly better .. 5 = B significantly
/// better, collapsed to a tally from A's side: 1-2 win, 3 tie, 4-5 loss.
GsbTally collapse_ratings(const std::vector<int>& ratings);
/// Reads a CSV whose header names a "rating" column.
GsbTally tally_from_csv(const std::string& text);

/// "inf" for infinite values, otherwise shortest round-trip decimal.
std::string format_metric(double v);

}  // namespace mcflow
