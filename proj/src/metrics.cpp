#include "mcflow/metrics.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "mcflow/codec.hpp"
#include "mcflow/error.hpp"

namespace mcflow {
namespace {

constexpr std::size_t kSsimWindow = 8;

void require_same_video(const Video& a, const Video& b, const char* what) {
    if (a.frames() != b.frames() || !a.same_geometry(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.pixels().shape()) + " vs " +
                         shape_str(b.pixels().shape()));
    }
}

double psnr_from_mse(double mse) {
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\"");
    const auto e = s.find_last_not_of(" \t\r\"");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    return out;
}

}  // namespace

double psnr(const Video& a, const Video& b) {
    require_same_video(a, b, "psnr");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.pixels().size(); ++i) {
        const double d = a.pixels()[i] - b.pixels()[i];
        sum += d * d;
    }
    return psnr_from_mse(sum / static_cast<double>(a.pixels().size()));
}

double psnr_frames(const Video& a, const Video& b, const std::vector<std::size_t>& frames) {
    require_same_video(a, b, "psnr");
    double sum = 0.0;
    for (std::size_t t : frames) {
        if (t >= a.frames()) throw ShapeError("psnr: frame " + std::to_string(t) + " out of range");
        const auto fa = a.frame_data(t), fb = b.frame_data(t);
        for (std::size_t i = 0; i < fa.size(); ++i) sum += (fa[i] - fb[i]) * (fa[i] - fb[i]);
    }
    if (frames.empty()) throw Error("psnr: no frames selected");
    return psnr_from_mse(sum / static_cast<double>(frames.size() * a.frame_size()));
}

double ssim(const Video& a, const Video& b) {
    require_same_video(a, b, "ssim");
    if (a.height() < kSsimWindow || a.width() < kSsimWindow) {
        throw ShapeError("ssim: frame " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                         " is smaller than the 8x8 window");
    }
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const double n = static_cast<double>(kSsimWindow * kSsimWindow);
    double total = 0.0;
    std::size_t windows = 0;
    for (std::size_t t = 0; t < a.frames(); ++t)
        for (std::size_t c = 0; c < a.channels(); ++c)
            for (std::size_t y0 = 0; y0 + kSsimWindow <= a.height(); y0 += kSsimWindow)
                for (std::size_t x0 = 0; x0 + kSsimWindow <= a.width(); x0 += kSsimWindow) {
                    double ma = 0, mb = 0;
                    for (std::size_t y = y0; y < y0 + kSsimWindow; ++y)
                        for (std::size_t x = x0; x < x0 + kSsimWindow; ++x) {
                            ma += a.at(t, c, y, x);
                            mb += b.at(t, c, y, x);
                        }
                    ma /= n;
                    mb /= n;
                    double va = 0, vb = 0, cov = 0;
                    for (std::size_t y = y0; y < y0 + kSsimWindow; ++y)
                        for (std::size_t x = x0; x < x0 + kSsimWindow; ++x) {
                            const double da = a.at(t, c, y, x) - ma, db = b.at(t, c, y, x) - mb;
                            va += da * da;
                            vb += db * db;
                            cov += da * db;
                        }
                    va /= n;
                    vb /= n;
                    cov /= n;
                    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    ++windows;
                }
    return total / static_cast<double>(windows);
}

double keyframe_adherence(const Video& v, const std::vector<Video>& keyframes, const ChunkPlan& plan) {
    validate_plan(plan);
    if (v.frames() != plan.total_frames()) {
        throw ShapeError("video has " + std::to_string(v.frames()) + " frames but the plan covers " +
                         std::to_string(plan.total_frames()));
    }
    if (keyframes.size() != plan.keyframes.size()) {
        throw Error("missing keyframe: plan has " + std::to_string(plan.keyframes.size()) + " keyframes, got " +
                    std::to_string(keyframes.size()) + " images");
    }
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < keyframes.size(); ++j) {
        const Video ceiling = decode_chunk(encode_keyframe(keyframes[j]));
        worst = std::min(worst, psnr(v.frame(plan.keyframes[j]), ceiling));
    }
    return worst;
}

double gsb(const GsbTally& t) {
    if (t.wins < 0 || t.losses < 0 || t.ties < 0) throw Error("gsb: negative tally");
    const double total = t.wins + t.losses + t.ties;
    if (total <= 0) throw Error("gsb: empty tally");
    return (t.wins - t.losses) / total;
}

GsbTally collapse_ratings(const std::vector<int>& ratings) {
    GsbTally t;
    for (int r : ratings) {
        if (r == 1 || r == 2)
            t.wins += 1;
        else if (r == 3)
            t.ties += 1;
        else if (r == 4 || r == 5)
            t.losses += 1;
        else
            throw Error("rating " + std::to_string(r) + " outside the 1-5 scale");
    }
    return t;
}

GsbTally tally_from_csv(const std::string& text) {
    std::stringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error("ratings CSV is empty");
    const auto header = split_csv(line);
    std::size_t col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == "rating") col = i;
    if (col == header.size()) throw Error("ratings CSV has no \"rating\" column");
    std::vector<int> ratings;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv(line);
        int r = 0;
        if (col >= cells.size() ||
            std::from_chars(cells[col].data(), cells[col].data() + cells[col].size(), r).ec != std::errc{}) {
            throw Error("ratings CSV line " + std::to_string(line_no) + ": bad rating");
        }
        ratings.push_back(r);
    }
    return collapse_ratings(ratings);
}

std::string format_metric(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace mcflow
