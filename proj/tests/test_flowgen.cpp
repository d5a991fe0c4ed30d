#include <doctest.h>

#include <cmath>
#include <limits>

#include "mcflow/codec.hpp"
#include "mcflow/error.hpp"
#include "mcflow/flowgen.hpp"
#include "mcflow/metrics.hpp"

using namespace mcflow;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.model_dim = 16;
    cfg.n_heads = 2;
    cfg.head_dim = 8;
    cfg.n_layers = 1;
    cfg.n_scenarios = 2;
    return cfg;
}

FrameMask mask_of(std::size_t frames, std::vector<std::size_t> on) {
    FrameMask m(frames, false);
    for (auto i : on) m[i] = true;
    return m;
}

}  // namespace

TEST_CASE("interpolate") {
    Rng rng(1);
    const Tensor z0 = randn({4, 1, 2, 2}, rng), z1 = randn({4, 1, 2, 2}, rng);
    const FrameMask mask = mask_of(4, {0, 2});
    CHECK(interpolate(z0, z1, 0.0, mask) == z0);
    const Tensor at1 = interpolate(z0, z1, 1.0, mask);
    for (std::size_t i = 0; i < at1.size(); ++i) CHECK(at1[i] == (mask[i / 4] ? z0[i] : z1[i]));

    const Tensor a({1, 1, 1, 1}, 0.0), b({1, 1, 1, 1}, 2.0);
    CHECK(interpolate(a, b, 0.5, {false})[0] == 1.0);
    CHECK_THROWS_AS(interpolate(z0, Tensor({3, 1, 2, 2}), 0.5, mask), ShapeError);
    CHECK_THROWS_AS(interpolate(z0, z1, 1.5, mask), Error);
}

TEST_CASE("interpolate is affine in t and constant on masked frames") {
    Rng rng(2);
    for (int draw = 0; draw < 20; ++draw) {
        const Tensor z0 = randn({5, 1, 2, 2}, rng), z1 = randn({5, 1, 2, 2}, rng);
        const FrameMask mask = mask_of(5, {0, 3});
        const double ts[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
        for (double t : ts) {
            const Tensor zt = interpolate(z0, z1, t, mask);
            for (std::size_t i = 0; i < zt.size(); ++i) {
                if (mask[i / 4])
                    CHECK(zt[i] == z0[i]);
                else
                    CHECK(zt[i] == doctest::Approx(z0[i] + t * (z1[i] - z0[i])).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("fm loss") {
    Rng rng(3);
    const Tensor target = randn({4, 1, 2, 2}, rng);
    const FrameMask half = mask_of(4, {1, 3});
    CHECK(fm_loss(target, target, half) == 0.0);
    Tensor plus1 = target;
    for (double& x : plus1.data()) x += 1.0;
    CHECK(fm_loss(plus1, target, half) == doctest::Approx(1.0).epsilon(1e-15));
    Tensor masked_err = target;
    for (std::size_t i = 4; i < 8; ++i) masked_err[i] += 3.0;
    CHECK(fm_loss(masked_err, target, half) == 0.0);
    CHECK_THROWS_AS(fm_loss(target, target, mask_of(4, {0, 1, 2, 3})), Error);
}

TEST_CASE("fm loss gradient closed form") {
    Rng rng(4);
    const Tensor pred = randn({3, 1, 2, 2}, rng), target = randn({3, 1, 2, 2}, rng);
    const FrameMask mask = mask_of(3, {1});
    const auto leaf = ad::parameter("p", pred);
    const auto grads = ad::backward(fm_loss(leaf, target, unmasked_weights(pred.shape(), mask)));
    const Tensor& g = grads.at("p");
    const double n = 8.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double expect = mask[i / 4] ? 0.0 : 2.0 * (pred[i] - target[i]) / n;
        CHECK(std::abs(g[i] - expect) <= 1e-10);
    }
    CHECK(fm_loss(leaf, target, unmasked_weights(pred.shape(), mask)).value().item() ==
          doctest::Approx(fm_loss(pred, target, mask)).epsilon(1e-14));
}

TEST_CASE("teacher forcing recovers z0 in one step") {
    Rng rng(5);
    const Tensor z0 = randn({6, 1, 4, 4}, rng);
    const FrameMask mask = mask_of(6, {0, 3});
    Rng noise_rng(77);
    const Tensor z1 = randn(z0.shape(), noise_rng);
    // The oracle knows the straight path through (z0, z1).
    const VelocityFn oracle = [&](const Tensor&, double) { return velocity_target(z0, z1, mask); };
    const Tensor start = interpolate(z0, z1, 1.0, mask);
    const Tensor out = euler_integrate(oracle, start, z0, mask, 1);
    CHECK(max_abs_diff(out, z0) <= 1e-12 * std::max(1.0, l2_norm(z0.data())));
    CHECK(euler_sample(oracle, z0, mask, 1, 77) == out);
    CHECK_THROWS_AS(euler_integrate(oracle, start, z0, mask, 0), Error);
}

TEST_CASE("sampler keeps keyframes exact") {
    Rng rng(6);
    const Tensor key = randn({5, 1, 4, 4}, rng);
    const FrameMask mask = mask_of(5, {0, 2});
    const VelocityFn wild = [](const Tensor& z, double t) {
        Tensor v = z;
        for (double& x : v.data()) x = std::sin(3 * x) + t;
        return v;
    };
    for (std::size_t steps : {1, 3, 20}) {
        const Tensor out = euler_sample(wild, key, mask, steps, 9);
        for (std::size_t i = 0; i < out.size(); ++i)
            if (mask[i / 16]) CHECK(out[i] == key[i]);
    }
    const VelocityFn blowup = [](const Tensor& z, double) {
        Tensor v = z;
        for (double& x : v.data()) x = std::numeric_limits<double>::infinity();
        return v;
    };
    CHECK_THROWS_AS(euler_sample(blowup, key, mask, 4, 1), NonFiniteError);
}

TEST_CASE("training") {
    const ModelConfig cfg = tiny_config();
    Rng rng(7);
    const ParamStore init = init_params(cfg, rng);
    auto ctx = std::make_shared<const DitContext>(make_context(make_layout({2, 2}, 1, 4, 4, 2), cfg));
    std::vector<Example> examples;
    for (std::size_t s = 0; s < 2; ++s) examples.push_back({rand_uniform({4, 1, 4, 4}, rng), mask_of(4, {0, 2}), s, ctx, {}});

    TrainConfig tc;
    tc.steps = 5;
    tc.seed = 3;
    tc.adam.lr = 0.0;
    ParamStore frozen = init;
    train(frozen, cfg, examples, tc);
    frozen.step = init.step;
    CHECK(frozen == init);

    tc.adam.lr = 1e-2;
    tc.steps = 30;
    tc.batch = 2;
    ParamStore a = init, b = init;
    const auto ra = train(a, cfg, examples, tc);
    const auto rb = train(b, cfg, examples, tc);
    CHECK(ra.losses == rb.losses);
    CHECK(a == b);
    CHECK(a.step == 30);
    CHECK(ra.eval_final < ra.eval_initial);

    auto batch = draw_batch(examples, 1, 1, 1);
    CHECK(batch.size() == 1);
    Tensor& bad = a.entries.at("final.out.b");
    bad[0] = std::nan("");
    AdamState state;
    CHECK_THROWS_AS(train_step(a, state, cfg, tc.adam, batch), NonFiniteError);
}

TEST_CASE("generate with an untrained model reproduces keyframes") {
    ModelConfig cfg = tiny_config();
    Rng rng(8);
    const ParamStore params = init_params(cfg, rng);
    Video a(1, 1, 8, 8), b(1, 1, 8, 8);
    for (std::size_t i = 0; i < 64; ++i) {
        a.pixels()[i] = rng.uniform();
        b.pixels()[i] = rng.uniform();
    }
    const Video out = generate(params, cfg, {a, b}, {18, {0, 10}}, 4, 1, 5);
    REQUIRE(out.frames() == 18);
    const auto plan = snap_keyframes({18, {0, 10}});
    CHECK(plan.keyframes == std::vector<std::size_t>{0, 9});
    CHECK(out.frame(0) == decode_chunk(encode_keyframe(a)));
    CHECK(out.frame(9) == decode_chunk(encode_keyframe(b)));
    CHECK(std::isinf(keyframe_adherence(out, {a, b}, plan)));

    const Video single = generate(params, cfg, {a}, {49, {0}}, 2, 0, 5);
    CHECK(single.frames() == 49);
    CHECK_THROWS_AS(generate(params, cfg, {a}, {18, {0, 10}}, 4, 1, 5), Error);
}
