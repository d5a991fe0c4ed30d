#include "mcflow/mcrope.hpp"

#include <cmath>

#include "mcflow/error.hpp"

namespace mcflow {

std::vector<double> mc_temporal_indices(const std::vector<std::size_t>& latent_lengths) {
    if (latent_lengths.empty()) throw Error("mc_temporal_indices: empty length list");
    std::vector<double> u;
    for (std::size_t j = 0; j < latent_lengths.size(); ++j) {
        if (latent_lengths[j] == 0) throw Error("mc_temporal_indices: chunk " + std::to_string(j) + " has no latents");
        for (std::size_t i = 0; i < latent_lengths[j]; ++i) {
            if (u.empty())
                u.push_back(0.0);
            else
                u.push_back(u.back() + (j > 0 && i == 0 ? kKeyframeStep : 1.0));
        }
    }
    return u;
}

RopeBands rope_bands(std::size_t head_dim) {
    if (head_dim == 0 || head_dim % 8 != 0) {
        throw Error("head_dim " + std::to_string(head_dim) + " cannot be split 2:1:1 into even bands");
    }
    return {head_dim / 4, head_dim / 8, head_dim / 8};
}

std::vector<double> rope_phases(double u, double y, double x, std::size_t head_dim) {
    const RopeBands b = rope_bands(head_dim);
    std::vector<double> angles;
    angles.reserve(b.pairs());
    auto band = [&](double pos, std::size_t pairs) {
        const double dim = static_cast<double>(2 * pairs);
        for (std::size_t m = 0; m < pairs; ++m)
            angles.push_back(pos * std::pow(kRopeBase, -2.0 * static_cast<double>(m) / dim));
    };
    band(u, b.t);
    band(y, b.y);
    band(x, b.x);
    return angles;
}

Tensor rope_angle_table(const std::vector<double>& u, const std::vector<double>& ys, const std::vector<double>& xs,
                        std::size_t head_dim) {
    if (u.size() != ys.size() || u.size() != xs.size()) throw ShapeError("rope_angle_table: coordinate counts differ");
    const std::size_t pairs = rope_bands(head_dim).pairs();
    Tensor table({u.size(), pairs});
    for (std::size_t i = 0; i < u.size(); ++i) {
        const auto a = rope_phases(u[i], ys[i], xs[i], head_dim);
        std::copy(a.begin(), a.end(), table.data().begin() + i * pairs);
    }
    return table;
}

Tensor apply_rope(const Tensor& x, const Tensor& angles) {
    if (x.rank() != 2 || angles.rank() != 2 || angles.dim(0) != x.dim(0) || angles.dim(1) == 0 ||
        x.dim(1) % (2 * angles.dim(1)) != 0) {
        throw ShapeError("apply_rope: shape mismatch " + shape_str(x.shape()) + " vs angles " +
                         shape_str(angles.shape()));
    }
    const std::size_t n = x.dim(0), width = x.dim(1), pairs = angles.dim(1);
    Tensor out(x.shape());
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t p = 0; p < pairs; ++p) {
            const double c = std::cos(angles[t * pairs + p]), s = std::sin(angles[t * pairs + p]);
            for (std::size_t h = 0; h < width / (2 * pairs); ++h) {
                const std::size_t i = t * width + h * 2 * pairs + 2 * p;
                const double a = x[i], b = x[i + 1];
                out[i] = a * c - b * s;
                out[i + 1] = a * s + b * c;
            }
        }
    return out;
}

}  // namespace mcflow
