#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "mcflow/tensor.hpp"

namespace mcflow {

/// Raw pixel video, T x C x H x W, values nominally in [0, 1].
class Video {
public:
    Video() = default;
    Video(std::size_t frames, std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0);
    explicit Video(Tensor pixels);

    std::size_t frames() const { return frames_; }
    std::size_t channels() const { return channels_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t frame_size() const { return channels_ * height_ * width_; }

    const Tensor& pixels() const { return pixels_; }
    Tensor& pixels() { return pixels_; }

    double& at(std::size_t t, std::size_t c, std::size_t y, std::size_t x) {
        return pixels_[((t * channels_ + c) * height_ + y) * width_ + x];
    }
    double at(std::size_t t, std::size_t c, std::size_t y, std::size_t x) const {
        return pixels_[((t * channels_ + c) * height_ + y) * width_ + x];
    }

    std::span<const double> frame_data(std::size_t t) const;
    std::span<double> frame_data(std::size_t t);
    /// Frame t as a single-frame video.
    Video frame(std::size_t t) const;
    /// Frames [begin, end).
    Video slice(std::size_t begin, std::size_t end) const;
    bool same_geometry(const Video& other) const;

    static Video concat(std::span<const Video> parts);

    friend bool operator==(const Video& a, const Video& b) { return a.pixels_ == b.pixels_; }

private:
    std::size_t frames_ = 0, channels_ = 0, height_ = 0, width_ = 0;
    Tensor pixels_;
};

// MCVD: "MCVD", u32 T, C, H, W, then f64 pixels, all little-endian.
void save_video(const std::filesystem::path& path, const Video& video);
Video load_video(const std::filesystem::path& path);

/// Writes one binary PGM (P5, maxval 255) per frame and channel:
/// <prefix>_<frame>[_c<channel>].pgm. Returns the paths written.
std::vector<std::filesystem::path> export_pgm(const Video& video, const std::filesystem::path& dir,
                                              const std::string& prefix);
/// Reads a P5 PGM into a single-frame, single-channel video.
Video import_pgm(const std::filesystem::path& path);

}  // namespace mcflow
