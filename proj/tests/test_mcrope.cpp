#include <doctest.h>

#include <cmath>

#include "mcflow/autograd.hpp"
#include "mcflow/error.hpp"
#include "mcflow/mcrope.hpp"
#include "mcflow/rng.hpp"

using namespace mcflow;

namespace {

// Independent fold: the index at a position is its count of preceding
// frames, minus 0.75 for every chunk boundary already crossed.
std::vector<double> fold_indices(const std::vector<std::size_t>& lengths) {
    std::vector<double> u;
    std::size_t pos = 0;
    for (std::size_t j = 0; j < lengths.size(); ++j)
        for (std::size_t i = 0; i < lengths[j]; ++i, ++pos) u.push_back(static_cast<double>(pos) - 0.75 * j);
    return u;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_CASE("temporal index examples") {
    CHECK(mc_temporal_indices({3, 2}) == std::vector<double>{0, 1, 2, 2.25, 3.25});
    CHECK(mc_temporal_indices({5}) == std::vector<double>{0, 1, 2, 3, 4});
    const auto u = mc_temporal_indices({13, 13});
    REQUIRE(u.size() == 26);
    CHECK(u[12] == 12.0);
    CHECK(u[13] == 12.25);
    CHECK(u[14] == 13.25);
    CHECK(u[25] == 24.25);
    CHECK_THROWS_AS(mc_temporal_indices({}), Error);
    CHECK_THROWS_AS(mc_temporal_indices({3, 0}), Error);
}

TEST_CASE("temporal index properties") {
    Rng rng(1);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::size_t> lengths(1 + rng.below(6));
        for (auto& f : lengths) f = 1 + rng.below(15);
        const auto u = mc_temporal_indices(lengths);
        CHECK(u == fold_indices(lengths));
        CHECK(u[0] == 0.0);
        int quarter_steps = 0;
        for (std::size_t i = 1; i < u.size(); ++i) {
            const double d = u[i] - u[i - 1];
            CHECK((d == 1.0 || d == 0.25));
            quarter_steps += d == 0.25;
        }
        CHECK(quarter_steps == static_cast<int>(lengths.size()) - 1);
    }
}

TEST_CASE("phases") {
    const auto b = rope_bands(8);
    CHECK(b.t == 2);
    CHECK(b.y == 1);
    CHECK(b.x == 1);
    CHECK_THROWS_AS(rope_bands(12), Error);

    for (double a : rope_phases(0, 0, 0, 16)) CHECK(a == 0.0);
    const auto one = rope_phases(1, 0, 0, 8);
    CHECK(one[0] == 1.0);
    CHECK(one[1] == doctest::Approx(0.01).epsilon(1e-15));

    const auto a0 = rope_phases(0, 0, 0, 16), a1 = rope_phases(1, 0, 0, 16);
    const auto a2 = rope_phases(2, 0, 0, 16), a225 = rope_phases(2.25, 0, 0, 16);
    for (std::size_t p = 0; p < 4; ++p) CHECK(a225[p] - a2[p] == doctest::Approx(0.25 * (a1[p] - a0[p])).epsilon(1e-14));

    const auto s = rope_phases(0, 3, 5, 16);
    CHECK(s[4] == 3.0);
    CHECK(s[6] == 5.0);
}

TEST_CASE("apply rope") {
    Rng rng(2);
    const Tensor x = randn({6, 32}, rng);
    CHECK(apply_rope(x, Tensor({6, 8})) == x);

    const Tensor angles = rand_uniform({6, 8}, rng, -20, 20);
    const Tensor r = apply_rope(x, angles);
    for (std::size_t t = 0; t < 6; ++t) {
        double n0 = 0, n1 = 0;
        for (std::size_t i = 0; i < 32; ++i) {
            n0 += x[t * 32 + i] * x[t * 32 + i];
            n1 += r[t * 32 + i] * r[t * 32 + i];
        }
        CHECK(std::abs(std::sqrt(n1) - std::sqrt(n0)) <= 1e-12 * std::sqrt(n0));
    }
    CHECK(ad::rope(ad::constant(x), angles).value() == r);
    CHECK_THROWS_AS(apply_rope(x, Tensor({5, 8})), ShapeError);
}

TEST_CASE("relative position property") {
    Rng rng(3);
    const Tensor q = randn({1, 16}, rng), k = randn({1, 16}, rng);
    auto score = [&](double ui, double uj) {
        const Tensor qi = apply_rope(q, Tensor({1, 8}, rope_phases(ui, 0, 0, 16)));
        const Tensor kj = apply_rope(k, Tensor({1, 8}, rope_phases(uj, 0, 0, 16)));
        return dot(qi, kj);
    };
    CHECK(score(5, 2) == doctest::Approx(score(13.25, 10.25)).epsilon(1e-12));
    CHECK(score(1, 0) == doctest::Approx(score(7.5, 6.5)).epsilon(1e-12));
    CHECK(score(1, 0) != doctest::Approx(score(2, 0)).epsilon(1e-6));
}
