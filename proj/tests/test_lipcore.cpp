#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "lipfilter/error.hpp"
#include "lipfilter/lipcore.hpp"

using namespace lipfilter;

namespace {

// Independent geometry: coordinates and minimal-image distances recomputed here.
double oracle_distance(const GridSpec& g, std::size_t a, std::size_t b) {
    double s = 0.0;
    for (int k = 0; k < g.dim(); ++k) {
        double d = std::abs(g.coord(a, k) - g.coord(b, k));
        if (g.is_torus()) d = std::min(d, g.size() - d);
        s += d * d;
    }
    return std::sqrt(s);
}

double oracle_lipschitz(const SampledFunction& phi) {
    double best = 0.0;
    for (std::size_t a = 0; a < phi.values.size(); ++a)
        for (std::size_t b = a + 1; b < phi.values.size(); ++b)
            best = std::max(best, std::abs(phi[a] - phi[b]) / oracle_distance(phi.grid, a, b));
    return best;
}

// Least s on a fine mesh with |(1-s)x + s y| <= c.
double oracle_feasibility(double x, double y, double c) {
    const int steps = 200000;
    for (int i = 0; i <= steps; ++i) {
        const double s = double(i) / steps;
        if (std::abs((1 - s) * x + s * y) <= c) return s;
    }
    return 1.0;
}

SampledFunction random_values(const GridSpec& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> v(g.node_count());
    for (auto& x : v) x = unit(rng);
    return SampledFunction(g, v);
}

}  // namespace

TEST_CASE("absolute value on a five-node box") {
    const auto g = GridSpec::box(1, 1.0, 5);
    const auto phi = sample_field(g, [](std::span<const double> t) { return std::abs(t[0]); });
    const auto rep = lipschitz_constant(phi);
    CHECK(rep.constant == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.witness_a == 0);
    CHECK(rep.witness_b == 1);
    CHECK(local_modulus(phi, 2, 0.5) == doctest::Approx(1.0));
    CHECK_THROWS_AS(local_modulus(phi, 2, 1.5), Error);
}

TEST_CASE("exhaustive constant matches an independent brute force") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const GridSpec g = (seed % 2) ? GridSpec::torus(1 + seed % 3, 2.0, 5) : GridSpec::box(2, 1.0, 7);
        const auto phi = random_values(g, seed);
        const auto rep = lipschitz_constant(phi);
        CHECK(rep.constant == doctest::Approx(oracle_lipschitz(phi)).epsilon(1e-12));
        CHECK(std::abs(phi[rep.witness_a] - phi[rep.witness_b]) /
                  oracle_distance(g, rep.witness_a, rep.witness_b) ==
              doctest::Approx(rep.constant).epsilon(1e-12));
        const auto bound = lipschitz_constant(phi, LipschitzMethod::Bound);
        CHECK(bound.constant >= rep.constant * (1 - 1e-12));
        CHECK(is_lipschitz(phi, rep.constant, 1e-12));
        CHECK_FALSE(is_lipschitz(phi, rep.constant * 0.99, 0.0));
    }
}

TEST_CASE("exhaustive mode refuses oversized grids") {
    const auto g = GridSpec::torus(2, 1.0, 65);
    const auto phi = random_values(g, 3);
    CHECK_THROWS_AS(lipschitz_constant(phi), Error);
    CHECK_NOTHROW(lipschitz_constant(phi, LipschitzMethod::Bound));
}

TEST_CASE("convex feasibility agrees with a mesh scan") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> wide(-3.0, 3.0);
    std::uniform_real_distribution<double> pos(0.05, 1.5);
    int checked = 0;
    while (checked < 400) {
        const double c = pos(rng);
        const double x = wide(rng);
        const double y = std::uniform_real_distribution<double>(-c * 0.99, c * 0.99)(rng);
        const double s = convex_feasibility(x, y, c);
        CHECK(std::abs(s - oracle_feasibility(x, y, c)) <= 1e-5);
        CHECK(std::abs((1 - s) * x + s * y) <= c + 1e-12);
        ++checked;
    }
    CHECK(convex_feasibility(0.3, 0.0, 0.5) == 0.0);
    CHECK(convex_feasibility(1.0, 0.0, 0.5) == doctest::Approx(0.5));
    CHECK(convex_feasibility(-1.0, 0.0, 0.5) == doctest::Approx(0.5));

    const FeasibilityPair pairs[] = {{1.0, 0.0, 0.5}, {2.0, 0.0, 0.5}, {0.1, 0.0, 0.5}};
    CHECK(convex_feasibility_multi(pairs) == doctest::Approx(0.75));
    CHECK(convex_feasibility_multi({}) == 0.0);
}

TEST_CASE("McShane extension") {
    const auto g = GridSpec::box(2, 1.0, 9);
    NodeData data;
    data.nodes = {0, 40, 80};
    data.values = {0.2, 0.5, 0.9};
    const double c = 0.8;
    const auto ext = mcshane_extend(g, data, c);
    for (std::size_t i = 0; i < data.nodes.size(); ++i) CHECK(ext[data.nodes[i]] == data.values[i]);
    CHECK(is_lipschitz(ext, c, 1e-12));
    for (std::size_t t = 0; t < g.node_count(); ++t) {
        double expect = 1.0;
        for (std::size_t i = 0; i < data.nodes.size(); ++i)
            expect = std::min(expect, data.values[i] + c * oracle_distance(g, t, data.nodes[i]));
        CHECK(ext[t] == doctest::Approx(expect).epsilon(1e-14));
    }

    NodeData bad{{0, 1}, {0.0, 1.0}};
    CHECK_THROWS_AS(mcshane_extend(g, bad, c), Error);
    CHECK_THROWS_AS(mcshane_extend(g, NodeData{}, c), Error);
}

TEST_CASE("random_lipschitz is deterministic and admissible") {
    const auto g = GridSpec::torus(2, 4.0, 12);
    const auto a = random_lipschitz(g, 0.5, 99);
    const auto b = random_lipschitz(g, 0.5, 99);
    CHECK(a.values == b.values);
    CHECK(a.values != random_lipschitz(g, 0.5, 100).values);
    CHECK(all_in_unit_interval(a.values));
    CHECK(oracle_lipschitz(a) <= 0.5 + 1e-12);
    CHECK(oracle_lipschitz(a) > 0.0);
}

TEST_CASE("local modulus matches a scan over every node") {
    const auto g = GridSpec::box(2, 1.0, 33);
    const auto phi = random_values(g, 8);
    for (double r : {0.06, 0.17, 0.2301, 0.5}) {
        for (std::size_t p : {std::size_t(16 * 33 + 16), std::size_t(10 * 33 + 20)}) {
            double expect = 0.0;
            for (std::size_t t = 0; t < g.node_count(); ++t) {
                const double d = oracle_distance(g, t, p);
                if (t != p && d <= r) expect = std::max(expect, std::abs(phi[t] - phi[p]) / d);
            }
            CHECK(local_modulus(phi, p, r) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}
