#pragma once

// Synthetic multi-shot corpus: a shape moving in a straight line over a flat
// background, with an optional hard cut that swaps background and shape.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcflow/video.hpp"

namespace mcflow {

enum class ShapeKind { disk, square };

struct Shot {
    ShapeKind kind = ShapeKind::disk;
    double background = 0.2;
    double foreground = 0.8;
    double radius = 5.0;      // half-size for squares, in pixels at the rendered size
    double y0 = 16, x0 = 16;  // centre at the shot's first frame
    double vy = 0, vx = 0;    // pixels per frame
};

struct Scenario {
    std::size_t id = 0;
    std::size_t length = 49;
    std::optional<std::size_t> cut;  // first frame of the second shot
    std::vector<Shot> shots;         // one per shot
    std::uint64_t seed = 0;
};

struct StructuredCaption {
    struct ShotCaption {
        std::string visual;
        std::string camera;
        std::vector<std::string> characters;
    };
    std::string holistic;
    std::vector<ShotCaption> shots;
};

nlohmann::json caption_to_json(const StructuredCaption& c);
StructuredCaption caption_from_json(const nlohmann::json& j);

struct SynthResult {
    Video video;
    std::vector<std::size_t> keyframes;  // ground truth: frame 0, the cut, the final chunk start
    StructuredCaption caption;
};

/// Samples shot parameters for a scenario rendered at height x width. Shots
/// alternate a dark and a light palette so cuts are pronounced.
Scenario random_scenario(std::size_t id, std::size_t length, std::optional<std::size_t> cut, std::uint64_t seed,
                         std::size_t height = 32, std::size_t width = 32, double speed = 0.3);

/// Deterministic render; throws Error if the shape leaves the canvas or the
/// cut cannot become a keyframe of a valid chunk plan.
SynthResult synth_video(const Scenario& s, std::size_t height, std::size_t width, std::size_t channels);

/// Renders scenarios in parallel (kernels::threads()).
std::vector<SynthResult> synth_corpus(const std::vector<Scenario>& scenarios, std::size_t height, std::size_t width,
                                      std::size_t channels);

/// Frames i >= 1 whose mean absolute difference from frame i-1 exceeds threshold.
std::vector<std::size_t> detect_cuts(const Video& v, double threshold);

}  // namespace mcflow
