#include "mcflow/data.hpp"

#include <algorithm>
#include <cmath>

#include "mcflow/chunking.hpp"
#include "mcflow/error.hpp"
#include "mcflow/kernels.hpp"
#include "mcflow/rng.hpp"

namespace mcflow {
namespace {

const char* kind_name(ShapeKind k) { return k == ShapeKind::disk ? "disk" : "square"; }

const char* tone(double v) { return v < 0.45 ? "dark" : "bright"; }

std::string direction(const Shot& s) {
    if (s.vy == 0 && s.vx == 0) return "stays still";
    const double a = std::atan2(-s.vy, s.vx) * 180.0 / 3.14159265358979323846;
    static const char* names[] = {"right", "up and to the right", "up", "up and to the left",
                                  "left", "down and to the left", "down", "down and to the right"};
    const int sector = static_cast<int>(std::lround((a < 0 ? a + 360 : a) / 45.0)) % 8;
    return std::string("drifts ") + names[sector];
}

bool inside(const Shot& s, ShapeKind kind, double y, double x, double py, double px) {
    const double dy = py + 0.5 - y, dx = px + 0.5 - x;
    if (kind == ShapeKind::disk) return dy * dy + dx * dx <= s.radius * s.radius;
    return std::abs(dy) <= s.radius && std::abs(dx) <= s.radius;
}

std::size_t shot_start(const Scenario& s, std::size_t shot) { return shot == 0 ? 0 : *s.cut; }

}  // namespace

nlohmann::json caption_to_json(const StructuredCaption& c) {
    nlohmann::json shots = nlohmann::json::array();
    for (const auto& s : c.shots)
        shots.push_back({{"visual", s.visual}, {"camera", s.camera}, {"characters", s.characters}});
    return {{"holistic", c.holistic}, {"shots", shots}};
}

StructuredCaption caption_from_json(const nlohmann::json& j) {
    StructuredCaption c;
    j.at("holistic").get_to(c.holistic);
    for (const auto& s : j.at("shots")) {
        StructuredCaption::ShotCaption sc;
        s.at("visual").get_to(sc.visual);
        s.at("camera").get_to(sc.camera);
        s.at("characters").get_to(sc.characters);
        c.shots.push_back(std::move(sc));
    }
    return c;
}

Scenario random_scenario(std::size_t id, std::size_t length, std::optional<std::size_t> cut, std::uint64_t seed,
                         std::size_t height, std::size_t width, double speed) {
    Rng rng(seed, id);
    Scenario s;
    s.id = id;
    s.length = length;
    s.cut = cut;
    s.seed = seed;
    const std::size_t n_shots = cut ? 2 : 1;
    const double scale = static_cast<double>(std::min(height, width)) / 32.0;
    for (std::size_t k = 0; k < n_shots; ++k) {
        Shot shot;
        shot.kind = rng.below(2) == 0 ? ShapeKind::disk : ShapeKind::square;
        const bool dark = k % 2 == 0;
        shot.background = dark ? rng.uniform(0.1, 0.25) : rng.uniform(0.7, 0.85);
        shot.foreground = dark ? rng.uniform(0.65, 0.9) : rng.uniform(0.1, 0.35);
        shot.radius = rng.uniform(4.0, 6.0) * scale;
        const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        shot.vy = speed * std::sin(angle);
        shot.vx = speed * std::cos(angle);
        const std::size_t frames = (k + 1 < n_shots ? *cut : length) - (k == 0 ? 0 : *cut);
        const double span = static_cast<double>(frames - 1);
        // Pick the trajectory midpoint so both ends stay at least one pixel inside.
        const double hy = std::abs(shot.vy) * span / 2 + shot.radius + 1;
        const double hx = std::abs(shot.vx) * span / 2 + shot.radius + 1;
        const double my = rng.uniform(std::min(hy, height / 2.0), std::max(height - hy, height / 2.0));
        const double mx = rng.uniform(std::min(hx, width / 2.0), std::max(width - hx, width / 2.0));
        shot.y0 = my - shot.vy * span / 2;
        shot.x0 = mx - shot.vx * span / 2;
        s.shots.push_back(shot);
    }
    return s;
}

SynthResult synth_video(const Scenario& s, std::size_t height, std::size_t width, std::size_t channels) {
    if (s.length == 0 || height == 0 || width == 0 || channels == 0) throw Error("synth_video: empty dimensions");
    const std::size_t n_shots = s.cut ? 2 : 1;
    if (s.shots.size() != n_shots) {
        throw Error("scenario " + std::to_string(s.id) + " needs " + std::to_string(n_shots) + " shot(s), has " +
                    std::to_string(s.shots.size()));
    }
    std::vector<std::size_t> keyframes{0};
    if (s.cut) {
        if (*s.cut == 0 || *s.cut >= s.length) throw Error("cut frame " + std::to_string(*s.cut) + " outside the video");
        keyframes.push_back(*s.cut);
    }
    const ChunkPlan plan = snap_keyframes({s.length, keyframes});  // throws if the cut cannot anchor a chunk
    if (plan.keyframes.back() != keyframes.back()) keyframes.push_back(plan.keyframes.back());
    std::sort(keyframes.begin(), keyframes.end());
    keyframes.erase(std::unique(keyframes.begin(), keyframes.end()), keyframes.end());

    for (std::size_t k = 0; k < n_shots; ++k) {
        const Shot& sh = s.shots[k];
        const std::size_t frames = (k + 1 < n_shots ? *s.cut : s.length) - shot_start(s, k);
        for (double f : {0.0, static_cast<double>(frames - 1)}) {
            const double y = sh.y0 + sh.vy * f, x = sh.x0 + sh.vx * f;
            if (y - sh.radius < 0 || x - sh.radius < 0 || y + sh.radius > static_cast<double>(height) ||
                x + sh.radius > static_cast<double>(width)) {
                throw Error("scenario " + std::to_string(s.id) + ": shape leaves the canvas in shot " +
                            std::to_string(k));
            }
        }
    }

    SynthResult out{Video(s.length, channels, height, width), keyframes, {}};
    for (std::size_t t = 0; t < s.length; ++t) {
        const std::size_t k = (s.cut && t >= *s.cut) ? 1 : 0;
        const Shot& sh = s.shots[k];
        const double f = static_cast<double>(t - shot_start(s, k));
        const double cy = sh.y0 + sh.vy * f, cx = sh.x0 + sh.vx * f;
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x)
                    out.video.at(t, c, y, x) = inside(sh, sh.kind, cy, cx, static_cast<double>(y), static_cast<double>(x))
                                                   ? sh.foreground
                                                   : sh.background;
    }

    StructuredCaption& cap = out.caption;
    cap.holistic = n_shots == 1 ? "A single continuous shot of a moving " + std::string(kind_name(s.shots[0].kind)) + "."
                                : "Two shots: a " + std::string(kind_name(s.shots[0].kind)) + " on a " +
                                      tone(s.shots[0].background) + " field, then a hard cut to a " +
                                      kind_name(s.shots[1].kind) + " on a " + tone(s.shots[1].background) + " field.";
    for (const auto& sh : s.shots) {
        cap.shots.push_back({std::string("A ") + tone(sh.foreground) + " " + kind_name(sh.kind) + " " + direction(sh) +
                                 " across a " + tone(sh.background) + " background.",
                             "static, locked-off",
                             {std::string(tone(sh.foreground)) + " " + kind_name(sh.kind)}});
    }
    return out;
}

std::vector<SynthResult> synth_corpus(const std::vector<Scenario>& scenarios, std::size_t height, std::size_t width,
                                      std::size_t channels) {
    std::vector<SynthResult> out(scenarios.size());
    std::vector<std::string> errors(scenarios.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::threads())
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(scenarios.size()); ++i) {
        try {
            out[i] = synth_video(scenarios[i], height, width, channels);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw Error(e);
    return out;
}

std::vector<std::size_t> detect_cuts(const Video& v, double threshold) {
    if (!(threshold > 0)) throw Error("detect_cuts: threshold must be positive");
    std::vector<std::size_t> cuts;
    for (std::size_t t = 1; t < v.frames(); ++t) {
        const auto a = v.frame_data(t - 1), b = v.frame_data(t);
        double sum = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(b[i] - a[i]);
        if (sum / static_cast<double>(a.size()) > threshold) cuts.push_back(t);
    }
    return cuts;
}

}  // namespace mcflow
