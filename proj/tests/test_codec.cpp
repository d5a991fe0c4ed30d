#include <doctest.h>

#include <filesystem>

#include "mcflow/binary_io.hpp"
#include "mcflow/codec.hpp"
#include "mcflow/kernels.hpp"
#include "mcflow/rng.hpp"

using namespace mcflow;
namespace fs = std::filesystem;

namespace {

Video random_video(std::size_t frames, std::size_t h, std::size_t w, std::uint64_t seed, std::size_t c = 1) {
    Rng rng(seed);
    return Video(rand_uniform({frames, c, h, w}, rng));
}

// Straightforward per-element evaluation of the codec definition.
double oracle_latent(const Video& v, std::size_t i, std::size_t c, std::size_t y, std::size_t x) {
    auto pool = [&](std::size_t t) {
        return (v.at(t, c, 2 * y, 2 * x) + v.at(t, c, 2 * y, 2 * x + 1) + v.at(t, c, 2 * y + 1, 2 * x) +
                v.at(t, c, 2 * y + 1, 2 * x + 1)) /
               4.0;
    };
    if (i == 0) return pool(0);
    double s = 0.0;
    for (std::size_t t = 4 * i - 3; t <= 4 * i; ++t) s += pool(t);
    return s / 4.0;
}

}  // namespace

TEST_CASE("encode shapes and constants") {
    CHECK(encode_chunk(Video(1, 1, 4, 4)).frames() == 1);
    const auto z = encode_chunk(Video(49, 2, 32, 32, 0.37));
    CHECK(z.data.shape() == Shape{13, 2, 16, 16});
    for (double x : z.data.data()) CHECK(x == 0.37);
    CHECK_THROWS_AS(encode_chunk(Video(6, 1, 4, 4)), ChunkingError);
    CHECK_THROWS_AS(encode_chunk(Video(5, 1, 3, 4)), ShapeError);
}

TEST_CASE("encode matches the per-element definition") {
    const Video v = random_video(13, 6, 8, 1, 2);
    const auto z = encode_chunk(v);
    for (std::size_t i = 0; i < z.frames(); ++i)
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t y = 0; y < 3; ++y)
                for (std::size_t x = 0; x < 4; ++x)
                    CHECK(z.data[((i * 2 + c) * 3 + y) * 4 + x] == doctest::Approx(oracle_latent(v, i, c, y, x)).epsilon(1e-14));
}

TEST_CASE("decode") {
    const auto one = decode_chunk(LatentChunk{Tensor({1, 1, 2, 2}, 0.5)});
    CHECK(one.frames() == 1);
    CHECK(one.height() == 4);

    // Block-constant in time groups and 2x2 spatial blocks: exact round trip.
    Rng rng(2);
    const Tensor z = rand_uniform({4, 1, 3, 3}, rng);
    const Video v = decode_chunk(LatentChunk{z});
    CHECK(v.frames() == 13);
    CHECK(encode_chunk(v).data == z);
    CHECK(decode_chunk(encode_chunk(v)) == v);
}

TEST_CASE("prefix causality") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t k = 1 + rng.below(12);
        const std::size_t m = rng.below(k);
        const Video v = random_video(4 * k + 1, 4, 4, 50 + trial);
        const auto full = encode_chunk(v);
        const auto prefix = encode_chunk(v.slice(0, 4 * m + 1));
        const std::size_t n = prefix.data.size();
        CHECK(std::equal(prefix.data.data().begin(), prefix.data.data().end(), full.data.data().begin()));
        CHECK(n == (m + 1) * 4);
    }
}

TEST_CASE("linearity") {
    const Video u = random_video(9, 4, 4, 4), w = random_video(9, 4, 4, 5);
    Video mix(9, 1, 4, 4);
    for (std::size_t i = 0; i < mix.pixels().size(); ++i) mix.pixels()[i] = 0.3 * u.pixels()[i] - 1.7 * w.pixels()[i];
    const auto zu = encode_chunk(u).data, zw = encode_chunk(w).data, zm = encode_chunk(mix).data;
    for (std::size_t i = 0; i < zm.size(); ++i) CHECK(zm[i] == doctest::Approx(0.3 * zu[i] - 1.7 * zw[i]).epsilon(1e-13));
}

TEST_CASE("multichunk") {
    const Video v = random_video(98, 4, 4, 6);
    const auto plan = plan_from_lengths({49, 49});
    const auto chunks = split_video(v, plan);
    const auto mc = encode_multichunk(chunks);
    CHECK(mc.total_frames() == 26);
    CHECK(mc.keyframe_positions() == std::vector<std::size_t>{0, 13});
    CHECK(mc.latent_lengths() == std::vector<std::size_t>{13, 13});
    CHECK(mc.chunks[0] == encode_chunk(chunks[0]));
    CHECK(mc.chunks[1] == encode_chunk(chunks[1]));
    for (std::size_t i = 0; i < mc.concat.size(); ++i) {
        const std::size_t half = mc.concat.size() / 2;
        const double expect = i < half ? mc.chunks[0].data[i] : mc.chunks[1].data[i - half];
        CHECK(mc.concat[i] == expect);
    }

    const auto single = encode_multichunk({chunks[0]});
    CHECK(single.chunks[0] == encode_chunk(chunks[0]));
    CHECK(single.keyframe_mask[0]);
    CHECK(std::count(single.keyframe_mask.begin(), single.keyframe_mask.end(), true) == 1);

    CHECK_THROWS_AS(encode_multichunk({}), ChunkingError);

    // Chunk 0 latents ignore chunk 1 pixels.
    auto shuffled = chunks;
    Rng rng(7);
    auto px = shuffled[1].pixels().data();
    for (std::size_t i = px.size() - 1; i > 0; --i) std::swap(px[i], px[rng.below(i + 1)]);
    const auto mc2 = encode_multichunk(shuffled);
    CHECK(mc2.chunks[0] == mc.chunks[0]);

    const int saved = kernels::threads();
    kernels::set_threads(3);
    CHECK(encode_multichunk(chunks) == mc);
    kernels::set_threads(saved);

    CHECK(decode_multichunk(mc).frames() == 98);
    CHECK(mc.with_concat(mc.concat) == mc);
}

TEST_CASE("naive insert ablation") {
    const Video v = random_video(97, 4, 4, 8);
    const auto only0 = naive_insert_encode(v, {0});
    CHECK(only0 == encode_multichunk({v}));

    const auto a = naive_insert_encode(v, {0, 49});
    CHECK(a.keyframe_positions() == std::vector<std::size_t>{0, 12});
    const auto key = encode_keyframe(v.frame(49));
    const std::size_t fs_ = key.frame_size();
    CHECK(std::equal(key.data.data().begin(), key.data.data().end(), a.concat.data().begin() + 12 * fs_));
    CHECK(a.chunks[0].data == a.concat);
    const auto whole = encode_chunk(v);
    for (std::size_t i = 0; i < a.concat.size(); ++i)
        if (i / fs_ != 12) CHECK(a.concat[i] == whole.data[i]);

    CHECK_THROWS_AS(naive_insert_encode(v, {0, 97}), ChunkingError);
    CHECK_THROWS_AS(naive_insert_encode(random_video(96, 4, 4, 1), {0}), ChunkingError);
}

TEST_CASE("replicate ablation") {
    const auto plan = plan_from_lengths({49});
    const Video c(49, 1, 4, 4, 0.25);
    CHECK(replicate_encode(c, plan) == encode_video(c, plan));

    // Moving dot: group 1 becomes four copies of the keyframe.
    Video dot(98, 1, 8, 8);
    for (std::size_t t = 0; t < 98; ++t) dot.at(t, 0, (t / 3) % 8, t % 8) = 1.0;
    const auto r = replicate_encode(dot, plan_from_lengths({49, 49}));
    CHECK(r.total_frames() == 26);
    for (const auto& ch : r.chunks) {
        const std::size_t n = ch.frame_size();
        CHECK(std::equal(ch.data.data().begin(), ch.data.data().begin() + n, ch.data.data().begin() + n));
    }
    CHECK_THROWS_AS(replicate_encode(Video(1, 1, 4, 4), plan_from_lengths({1})), ChunkingError);
}

TEST_CASE("latent file round trip") {
    const Video v = random_video(98, 4, 4, 9);
    auto mc = encode_video(v, plan_from_lengths({49, 49}));
    const auto dir = fs::temp_directory_path() / "mcflow_test_codec";
    fs::create_directories(dir);
    save_latent(dir / "z.mclt", mc);
    CHECK(load_latent(dir / "z.mclt") == mc);
    CHECK(fs::file_size(dir / "z.mclt") == 4 + 4 + 2 * (16 + 13 * 4 * 8) + 26);

    auto bytes = io::read_file((dir / "z.mclt").string());
    bytes.resize(40);
    io::write_file((dir / "t.mclt").string(), bytes);
    CHECK_THROWS_AS(load_latent(dir / "t.mclt"), io::FormatError);
}
