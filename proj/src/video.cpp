#include "mcflow/video.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mcflow/binary_io.hpp"
#include "mcflow/error.hpp"

namespace mcflow {

Video::Video(std::size_t frames, std::size_t channels, std::size_t height, std::size_t width, double fill)
    : frames_(frames), channels_(channels), height_(height), width_(width),
      pixels_({frames, channels, height, width}, fill) {}

Video::Video(Tensor pixels) : pixels_(std::move(pixels)) {
    if (pixels_.rank() != 4) throw ShapeError("video tensor must be rank 4, got " + shape_str(pixels_.shape()));
    frames_ = pixels_.dim(0);
    channels_ = pixels_.dim(1);
    height_ = pixels_.dim(2);
    width_ = pixels_.dim(3);
}

std::span<const double> Video::frame_data(std::size_t t) const {
    return pixels_.data().subspan(t * frame_size(), frame_size());
}

std::span<double> Video::frame_data(std::size_t t) { return pixels_.data().subspan(t * frame_size(), frame_size()); }

Video Video::frame(std::size_t t) const { return slice(t, t + 1); }

Video Video::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > frames_) {
        throw ShapeError("frame range [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                         std::to_string(frames_) + " frames");
    }
    Video out(end - begin, channels_, height_, width_);
    std::copy_n(pixels_.data().begin() + begin * frame_size(), out.pixels_.size(), out.pixels_.data().begin());
    return out;
}

bool Video::same_geometry(const Video& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
}

Video Video::concat(std::span<const Video> parts) {
    if (parts.empty()) throw ShapeError("concat of zero videos");
    std::size_t frames = 0;
    for (const auto& p : parts) {
        if (!p.same_geometry(parts.front())) {
            throw ShapeError("video concat: geometry mismatch " + shape_str(parts.front().pixels().shape()) + " vs " +
                             shape_str(p.pixels().shape()));
        }
        frames += p.frames();
    }
    const auto& first = parts.front();
    Video out(frames, first.channels(), first.height(), first.width());
    auto dst = out.pixels_.data().begin();
    for (const auto& p : parts) dst = std::copy(p.pixels_.data().begin(), p.pixels_.data().end(), dst);
    return out;
}

void save_video(const std::filesystem::path& path, const Video& video) {
    io::Writer w;
    w.magic("MCVD");
    w.u32(static_cast<std::uint32_t>(video.frames()));
    w.u32(static_cast<std::uint32_t>(video.channels()));
    w.u32(static_cast<std::uint32_t>(video.height()));
    w.u32(static_cast<std::uint32_t>(video.width()));
    for (double v : video.pixels().data()) w.f64(v);
    io::write_file(path.string(), w.buffer());
}

Video load_video(const std::filesystem::path& path) {
    io::Reader r(io::read_file(path.string()));
    r.expect_magic("MCVD");
    std::uint64_t dims[4];
    for (auto& d : dims) d = r.u32();
    std::uint64_t numel = 1;
    for (auto d : dims) {
        numel *= d;
        if (numel > (std::uint64_t{1} << 36)) {
            throw io::FormatError(io::FormatError::Kind::dim_overflow, 4, "dimension overflow");
        }
    }
    if (r.remaining() < numel * 8) {
        throw io::FormatError(io::FormatError::Kind::truncated, r.offset() + r.remaining(), "truncated payload");
    }
    Video v(dims[0], dims[1], dims[2], dims[3]);
    for (double& x : v.pixels().data()) x = r.f64();
    return v;
}

std::vector<std::filesystem::path> export_pgm(const Video& video, const std::filesystem::path& dir,
                                              const std::string& prefix) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    for (std::size_t t = 0; t < video.frames(); ++t)
        for (std::size_t c = 0; c < video.channels(); ++c) {
            char name[64];
            if (video.channels() == 1)
                std::snprintf(name, sizeof name, "_%04zu.pgm", t);
            else
                std::snprintf(name, sizeof name, "_%04zu_c%zu.pgm", t, c);
            const auto path = dir / (prefix + name);
            std::ofstream out(path, std::ios::binary);
            out << "P5\n" << video.width() << " " << video.height() << "\n255\n";
            for (std::size_t y = 0; y < video.height(); ++y)
                for (std::size_t x = 0; x < video.width(); ++x) {
                    const double v = std::clamp(video.at(t, c, y, x), 0.0, 1.0);
                    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
                }
            if (!out) throw Error("failed to write " + path.string());
            written.push_back(path);
        }
    return written;
}

Video import_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::string magic;
    in >> magic;
    auto next_int = [&]() {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string comment;
            std::getline(in, comment);
            in >> std::ws;
        }
        long v = -1;
        in >> v;
        return v;
    };
    const long w = next_int(), h = next_int(), maxval = next_int();
    if (magic != "P5" || w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
        throw Error(path.string() + ": not an 8-bit binary PGM");
    }
    in.get();
    Video v(1, 1, static_cast<std::size_t>(h), static_cast<std::size_t>(w));
    for (double& x : v.pixels().data()) {
        const int c = in.get();
        if (c == EOF) throw Error(path.string() + ": truncated pixel data");
        x = static_cast<double>(c) / static_cast<double>(maxval);
    }
    return v;
}

}  // namespace mcflow
