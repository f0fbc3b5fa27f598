#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lipfilter/error.hpp"
#include "lipfilter/lipcore.hpp"
#include "lipfilter/perturb.hpp"

using namespace lipfilter;

namespace {

double norm(const GridSpec& g, std::size_t t) {
    double s = 0.0;
    for (int a = 0; a < g.dim(); ++a) s += g.coord(t, a) * g.coord(t, a);
    return std::sqrt(s);
}

double dist(const GridSpec& g, std::size_t a, std::size_t b) {
    double s = 0.0;
    for (int k = 0; k < g.dim(); ++k) s += std::pow(g.coord(a, k) - g.coord(b, k), 2);
    return std::sqrt(s);
}

// Headroom subtraction recomputed from coordinates.
std::vector<double> oracle_headroom(const SampledFunction& phi, double eps1, double slope) {
    const auto& g = phi.grid;
    std::vector<double> out(phi.values.size());
    for (std::size_t t = 0; t < out.size(); ++t) {
        double d = g.size();
        for (int a = 0; a < g.dim(); ++a) d = std::min(d, g.size() - std::abs(g.coord(t, a)));
        out[t] = std::max(0.0, phi[t] - std::min(eps1, slope * d));
    }
    return out;
}

std::size_t origin(const GridSpec& g) {
    const std::vector<double> zero(static_cast<std::size_t>(g.dim()), 0.0);
    return *g.nearest_node(zero);
}

const GridSpec kReference = GridSpec::box(2, 1.0, 129);

}  // namespace

TEST_CASE("break_invariance on a constant input digs a cone of slope c'") {
    const double eps = 0.5, c = 0.5, cp = 1.0;
    const SampledFunction phi(kReference, std::vector<double>(kReference.node_count(), 0.6));
    const auto res = break_invariance(phi, eps, c, cp);
    const auto& g = kReference;
    const double h = g.spacing();
    CHECK(res.epsilon1 == doctest::Approx(0.125));
    CHECK(res.delta == doctest::Approx(0.95 * 0.125));
    CHECK(res.tau_grid == doctest::Approx(2 * cp * h / res.delta));

    // Plateau value 0.6 - eps1 near the origin; the origin sits c' times
    // the nearest ring radius above it.
    double ring = 1e9;
    for (std::size_t t = 0; t < g.node_count(); ++t) {
        const double r = norm(g, t);
        if (r >= res.delta / 2) ring = std::min(ring, r);
    }
    const std::size_t o = origin(g);
    CHECK(res.function[o] == doctest::Approx(0.6 - 0.125 + cp * ring).epsilon(1e-13));
    CHECK(res.function[o] - (0.6 - 0.125) <= cp * res.delta);
    CHECK(local_modulus(res.function, o, res.delta) == doctest::Approx(cp).epsilon(1e-12));
}

TEST_CASE("break_invariance on random inputs") {
    const double eps = 0.5, c = 0.5, cp = 1.0, c1 = (c + cp) / 2;
    const auto& g = kReference;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto phi = random_lipschitz(g, c, seed);
        const auto res = break_invariance(phi, eps, c, cp);
        const auto& psi = res.function;
        double sup = 0.0;
        for (std::size_t t = 0; t < g.node_count(); ++t) {
            sup = std::max(sup, std::abs(psi[t] - phi[t]));
            if (g.on_boundary_layer(t)) CHECK(psi[t] == phi[t]);
        }
        CHECK(sup < eps);
        const double L0 = local_modulus(psi, origin(g), res.delta);
        CHECK(L0 <= cp + 1e-12);
        CHECK(L0 >= cp - res.tau_grid);
        for (int k = 0; k < 16; ++k) {
            const double th = 2 * std::numbers::pi * k / 16;
            const double p[] = {0.75 * std::cos(th), 0.75 * std::sin(th)};
            CHECK(local_modulus(psi, *g.nearest_node(p), res.delta) <= c1 + res.tau_grid);
        }
    }
}

TEST_CASE("break_invariance errors") {
    const auto& g = kReference;
    const auto phi = random_lipschitz(g, 0.5, 2);
    CHECK_THROWS_AS(break_invariance(phi, 1.0, 0.5, 1.0), Error);
    CHECK_THROWS_AS(break_invariance(phi, 0.5, 1.0, 0.5), Error);
    CHECK_THROWS_AS(break_invariance(phi, 0.5, 0.2, 1.0), Error);  // not 0.2-Lipschitz
    const auto coarse = random_lipschitz(GridSpec::box(2, 1.0, 33), 0.5, 2);
    CHECK_THROWS_AS(break_invariance(coarse, 0.5, 0.5, 1.0), Error);
}

TEST_CASE("one-dimensional outputs are Lipschitz at the stated constants") {
    const auto g = GridSpec::box(1, 1.0, 2001);
    const auto phi = random_lipschitz(g, 0.5, 12);
    const auto res = break_invariance(phi, 0.5, 0.5, 1.0);
    CHECK(is_lipschitz(res.function, 1.0, 1e-9));

    const auto layout = make_layout(g, 2, default_chain(0.5, 1.0), 0.5);
    const double s[] = {0.3, 0.9};
    const auto enc = multibump_encode(phi, s, layout, 0.5);
    CHECK(is_lipschitz(enc, 1.0, 1e-9));
    const auto back = multibump_decode(enc, layout);
    CHECK(back[0] == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(back[1] == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("multibump layout") {
    const auto chain = default_chain(0.5, 1.0);
    CHECK(chain == std::array<double, 4>{0.5, 0.625, 0.75, 1.0});
    const auto layout = make_layout(kReference, 3, chain, 0.5);
    CHECK(layout.epsilon1 == doctest::Approx(0.0625));
    CHECK(layout.delta == doctest::Approx(0.95 * 0.0625));
    // Balls B_delta(0), B_delta(p_k) disjoint and inside B_{r/2}.
    for (std::size_t k = 0; k < 3; ++k) {
        const double pk = norm(kReference, layout.anchors[k]);
        CHECK(pk > 2 * layout.delta);
        CHECK(pk + layout.delta <= 0.5);
        for (std::size_t l = k + 1; l < 3; ++l)
            CHECK(dist(kReference, layout.anchors[k], layout.anchors[l]) > 2 * layout.delta);
    }
    const auto text = layout_to_string(kReference, layout);
    const auto back = layout_from_string(kReference, text);
    CHECK(back.anchors == layout.anchors);
    CHECK(back.delta == layout.delta);
    CHECK(back.chain == layout.chain);
    CHECK_THROWS_AS(layout_from_string(kReference, "r=1 delta=0.05"), Error);
    CHECK_THROWS_AS(make_layout(GridSpec::box(2, 1.0, 33), 3, chain, 0.5), Error);
    CHECK_THROWS_AS(make_layout(kReference, {origin(kReference)}, chain, 0.5), Error);
}

TEST_CASE("multibump encode and decode") {
    const auto& g = kReference;
    const double eps = 0.5;
    const auto chain = default_chain(0.5, 1.0);
    const auto layout = make_layout(g, 3, chain, eps);
    const double tau = grid_tolerance(chain[3], g.spacing(), layout.delta);
    const auto phi = random_lipschitz(g, 0.5, 31);
    const auto base = oracle_headroom(phi, layout.epsilon1, chain[1] - chain[0]);

    std::vector<double> previous;
    for (double v : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const double s[] = {v, 1.0 - v, 0.5};
        const auto enc = multibump_encode(phi, s, layout, eps);
        const auto dec = multibump_decode(enc, layout);
        for (int k = 0; k < 3; ++k) CHECK(std::abs(dec[k] - s[k]) <= 1e-9);
        if (!previous.empty()) CHECK(dec[0] > previous[0]);
        previous = dec;

        CHECK(std::abs(local_modulus(enc, origin(g), layout.delta / 2) - chain[3]) <= tau);
        CHECK(local_modulus(enc, layout.anchors[0], layout.delta) ==
              doctest::Approx((1 - v) * chain[1] + v * chain[2]).epsilon(1e-12));

        for (std::size_t t = 0; t < g.node_count(); ++t) {
            CHECK(std::abs(enc[t] - phi[t]) < eps);
            if (g.on_boundary_layer(t)) CHECK(enc[t] == phi[t]);
            bool in_pit = norm(g, t) < layout.delta / 4;
            for (std::size_t p : layout.anchors) in_pit = in_pit || dist(g, t, p) < layout.delta / 2;
            if (!in_pit) CHECK(enc[t] == doctest::Approx(base[t]).epsilon(1e-15));
        }
    }

    // Modulus at delta/2 stays below c3 away from the peaks.
    const double s[] = {1.0, 1.0, 1.0};
    const auto enc = multibump_encode(phi, s, layout, eps);
    for (std::size_t t = 0; t < g.node_count(); t += 37) {
        const double r = norm(g, t);
        if (r < layout.delta || r > 1.0 - layout.delta / 2) continue;
        bool ok = true;
        for (int a = 0; a < 2; ++a) ok = ok && std::abs(g.coord(t, a)) + layout.delta / 2 <= 1.0;
        if (!ok) continue;
        CHECK(local_modulus(enc, t, layout.delta / 2) <= chain[2] + tau);
    }

    const double bad[] = {0.5, 1.5, 0.0};
    CHECK_THROWS_AS(multibump_encode(phi, bad, layout, eps), Error);
    const double short_s[] = {0.5};
    CHECK_THROWS_AS(multibump_encode(phi, short_s, layout, eps), Error);
}

TEST_CASE("build_cover") {
    const double eps = 0.4;
    SUBCASE("one tight cluster") {
        std::vector<std::vector<double>> d = {{0, 0.05, 0.08}, {0.05, 0, 0.03}, {0.08, 0.03, 0}};
        const auto fs = build_cover(d, eps);
        CHECK(fs.cover.size() == 1);
        for (const auto& row : fs.chi) CHECK(row[0] == 1.0);
    }
    SUBCASE("two separated clusters") {
        std::vector<std::vector<double>> d = {
            {0, 0.02, 0.9, 0.95}, {0.02, 0, 0.92, 0.9}, {0.9, 0.92, 0, 0.01}, {0.95, 0.9, 0.01, 0}};
        const auto fs = build_cover(d, eps);
        REQUIRE(fs.cover.size() == 2);
        CHECK(fs.chi[0] == std::vector<double>{1.0, 0.0});
        CHECK(fs.chi[3] == std::vector<double>{0.0, 1.0});
    }
    SUBCASE("partial membership") {
        std::vector<std::vector<double>> d = {{0, 0.08, 0.13}, {0.08, 0, 0.05}, {0.13, 0.05, 0}};
        const auto fs = build_cover(d, eps);
        REQUIRE(fs.cover.size() == 2);
        CHECK(fs.centers == std::vector<std::size_t>{0, 2});
        CHECK(fs.cover[1] == std::vector<std::size_t>{1, 2});
        CHECK(fs.chi[2][0] == doctest::Approx(0.5));
        CHECK(fs.chi[0][1] == doctest::Approx(0.2));
        CHECK(fs.chi[1] == std::vector<double>{1.0, 1.0});
    }
    SUBCASE("support of chi has diameter below eps") {
        std::vector<std::vector<double>> d(6, std::vector<double>(6));
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) d[i][j] = 0.07 * std::abs(i - j);
        const auto fs = build_cover(d, eps);
        for (std::size_t k = 0; k < fs.cover.size(); ++k) {
            CHECK(fs.chi[fs.centers[k]][k] == 1.0);
            for (int x = 0; x < 6; ++x)
                for (int y = 0; y < 6; ++y)
                    if (fs.chi[x][k] > 0 && fs.chi[y][k] > 0) CHECK(d[x][y] < eps);
        }
    }
}

TEST_CASE("distinguish_family separates distant members") {
    const auto& g = kReference;
    const double eps = 0.5, c = 0.5, cp = 1.0;
    std::vector<SampledFunction> fam;
    fam.push_back(SampledFunction(g, std::vector<double>(g.node_count(), 0.1)));
    fam.push_back(SampledFunction(g, std::vector<double>(g.node_count(), 0.8)));
    fam.push_back(fam[0]);
    const auto out = distinguish_family(fam, eps, c, cp);
    CHECK(out.space.cover.size() == 2);
    CHECK(out.eta == doctest::Approx(2 * cp * g.spacing()));
    for (std::size_t x = 0; x < fam.size(); ++x) {
        for (std::size_t t = 0; t < g.node_count(); ++t) CHECK(std::abs(out.functions[x][t] - fam[x][t]) < eps);
    }
    CHECK_FALSE(shifted_agreement(out.functions[0], out.functions[1], out.eta).has_value());
    const auto self = shifted_agreement(out.functions[0], out.functions[0], 0.0);
    REQUIRE(self.has_value());
    // Identical members map to identical outputs, so the identity shift works.
    CHECK(out.functions[0].values == out.functions[2].values);

    std::vector<SampledFunction> single{random_lipschitz(g, c, 4)};
    const auto one = distinguish_family(single, eps, c, cp);
    CHECK(one.space.cover.size() == 1);
}
