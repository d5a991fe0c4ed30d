#include <doctest.h>

#include <cmath>
#include <limits>

#include "mcflow/codec.hpp"
#include "mcflow/error.hpp"
#include "mcflow/metrics.hpp"
#include "mcflow/rng.hpp"

using namespace mcflow;

namespace {

Video random_frame(std::size_t h, std::size_t w, std::uint64_t seed) {
    Rng rng(seed);
    return Video(rand_uniform({1, 1, h, w}, rng));
}

Video offset(const Video& v, double d) {
    Video out = v;
    for (double& x : out.pixels().data()) x += d;
    return out;
}

}  // namespace

TEST_CASE("psnr") {
    const Video a = random_frame(8, 8, 1);
    CHECK(std::isinf(psnr(a, a)));
    CHECK(psnr(a, offset(a, 0.1)) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(psnr(a, offset(a, 0.01)) == doctest::Approx(40.0).epsilon(1e-12));
    CHECK_THROWS_AS(psnr(a, random_frame(8, 6, 1)), ShapeError);

    Rng rng(2);
    const Tensor dir = randn({1, 1, 8, 8}, rng);
    double last = std::numeric_limits<double>::infinity();
    for (double mag : {1e-4, 1e-3, 1e-2, 0.1, 0.3}) {
        Video b = a;
        for (std::size_t i = 0; i < dir.size(); ++i) b.pixels()[i] += mag * dir[i];
        const double p = psnr(a, b);
        CHECK(p < last);
        last = p;
    }
    CHECK(format_metric(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_metric(20.5) == "20.5");
}

TEST_CASE("ssim") {
    const Video a = random_frame(16, 24, 3), b = random_frame(16, 24, 4);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(ssim(a, b) == ssim(b, a));
    CHECK(ssim(a, b) < 0.5);
    const double c1 = 1e-4;
    CHECK(ssim(Video(1, 1, 8, 8, 0.0), Video(1, 1, 8, 8, 1.0)) == doctest::Approx(c1 / (1 + c1)).epsilon(1e-14));
    CHECK_THROWS_AS(ssim(Video(1, 1, 7, 8), Video(1, 1, 7, 8)), ShapeError);
}

TEST_CASE("keyframe adherence") {
    const Video k0 = random_frame(8, 8, 5), k1 = random_frame(8, 8, 6);
    const auto plan = plan_from_lengths({9, 5});
    Video v(14, 1, 8, 8);
    auto place = [&](std::size_t t, const Video& k) {
        const Video rt = decode_chunk(encode_keyframe(k));
        std::copy(rt.pixels().data().begin(), rt.pixels().data().end(), v.frame_data(t).begin());
    };
    place(0, k0);
    place(9, k1);
    CHECK(std::isinf(keyframe_adherence(v, {k0, k1}, plan)));

    Video zeroed = v;
    for (double& x : zeroed.frame_data(9)) x = 0.0;
    const double p = keyframe_adherence(zeroed, {k0, k1}, plan);
    CHECK(std::isfinite(p));
    CHECK(p < 10.0);

    const auto single = plan_from_lengths({9});
    Video s(9, 1, 8, 8);
    std::copy(v.frame_data(0).begin(), v.frame_data(0).end(), s.frame_data(0).begin());
    CHECK(std::isinf(keyframe_adherence(s, {k0}, single)));
    CHECK_THROWS_AS(keyframe_adherence(v, {k0}, plan), Error);
}

TEST_CASE("gsb") {
    // Multi-shot overall quality: wins 50.00 + 21.58, losses 4.74 + 12.11, neutral 11.58.
    const double g = gsb({50.00 + 21.58, 4.74 + 12.11, 11.58});
    CHECK(std::abs(g - 0.5473) <= 1e-4);
    CHECK(gsb({3, 3, 4}) == 0.0);
    CHECK(gsb({5, 0, 0}) == 1.0);
    CHECK_THROWS_AS(gsb({0, 0, 0}), Error);

    Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        const double w = rng.uniform(0, 50), l = rng.uniform(0, 50), t = rng.uniform(0.1, 50);
        CHECK(gsb({w, l, t}) == -gsb({l, w, t}));
        CHECK(gsb({4 * w, 4 * l, 4 * t}) == gsb({w, l, t}));
    }

    const GsbTally tally = tally_from_csv("pair,rating\na,1\nb,2\nc,3\nd,4\ne,5\nf,1\n");
    CHECK(tally.wins == 3);
    CHECK(tally.ties == 1);
    CHECK(tally.losses == 2);
    CHECK_THROWS_AS(tally_from_csv("pair,score\na,1\n"), Error);
    CHECK_THROWS_AS(tally_from_csv("rating\n6\n"), Error);
}
