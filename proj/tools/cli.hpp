#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mcflow/chunking.hpp"
#include "mcflow/dit.hpp"
#include "mcflow/flowgen.hpp"

namespace mcflow::cli {

/// Training run settings read from a JSON config. Absent keys keep the
/// defaults of ModelConfig / TrainConfig; unknown keys are rejected.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::optional<std::uint64_t> seed;
};
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// {"total_frames": int, "keyframes": [int, ...]}
KeyframeRequest parse_keyframe_spec(const std::string& json_text);
KeyframeRequest load_keyframe_spec(const std::filesystem::path& path);

/// Single-frame images from a directory (*.pgm or *.mcvd), in file name order.
std::vector<Video> load_keyframe_images(const std::filesystem::path& dir);

/// Seed of the degradation noise for corpus video `index`.
std::uint64_t degrade_seed(std::uint64_t seed, std::size_t index);

/// Runs one subcommand. args excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mcflow::cli
