#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "lipfilter/error.hpp"
#include "lipfilter/filter.hpp"
#include "lipfilter/lipcore.hpp"

using namespace lipfilter;

namespace {

double oracle_distance(const GridSpec& g, std::size_t a, std::size_t b) {
    double s = 0.0;
    for (int k = 0; k < g.dim(); ++k) {
        double d = std::abs(g.coord(a, k) - g.coord(b, k));
        d = std::min(d, g.size() - d);
        s += d * d;
    }
    return std::sqrt(s);
}

// Plain transcription of the coset induction, with its own distances and a
// mesh-free feasibility formula.
std::vector<double> oracle_discrete_filter(const std::vector<double>& phi, const FilterPlan& plan) {
    const auto& g = plan.torus_grid;
    const auto& chain = plan.params.chain;
    std::vector<double> out = phi;
    auto feas = [](double x, double y, double c) {
        if (std::abs(x) <= c) return 0.0;
        return x > 0 ? (x - c) / (x - y) : (c + x) / (x - y);
    };
    for (std::size_t k = 1; k < plan.coset_count(); ++k) {
        for (std::size_t slot = plan.coset_begin[k]; slot < plan.coset_begin[k + 1]; ++slot) {
            const auto t = plan.gamma_nodes[slot];
            double psi = 1.0;
            for (std::size_t u = 0; u < plan.coset_begin[k]; ++u)
                psi = std::min(psi, out[u] + chain[k - 1] * oracle_distance(g, t, plan.gamma_nodes[u]));
            double s = 0.0;
            for (std::size_t u = 0; u < plan.coset_begin[k]; ++u) {
                const double d = oracle_distance(g, t, plan.gamma_nodes[u]);
                if (d * chain[k] > 1.0 + 1e-12) continue;
                s = std::max(s, feas(phi[slot] - out[u], psi - out[u], chain[k] * d));
            }
            out[slot] = (1 - s) * phi[slot] + s * psi;
        }
    }
    return out;
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("geometric chain and reach") {
    const auto chain = geometric_chain(0.5, 1.0, 2);
    REQUIRE(chain.size() == 2);
    CHECK(chain[0] == 0.5);
    CHECK(chain[1] == 1.0);
    CHECK(chain_reach(chain) == doctest::Approx(1.0));
    CHECK(geometric_chain(0.5, 1.0, 1) == std::vector<double>{1.0});
    const auto four = geometric_chain(0.25, 1.0, 3);
    CHECK(four[1] == doctest::Approx(0.5));

    // Two cosets on [0,4): L = 1/c_2 = 1, R = 1 + eps/(2c') + 2 sqrt(1) 4 = 10.
    const auto plan = build_plan(2.0, 0.5, 1.0, GridSpec::torus(1, 4.0, 8), 4);
    CHECK(plan.coset_count() == 2);
    const auto [L, R] = filter_reach(plan);
    CHECK(L == doctest::Approx(1.0));
    CHECK(R == doctest::Approx(10.0));
}

TEST_CASE("build_plan enforces its preconditions") {
    const auto g = GridSpec::torus(1, 4.0, 16);
    CHECK_NOTHROW(build_plan(0.5, 0.5, 1.0, g, 2));
    CHECK_THROWS_AS(build_plan(0.5, 0.5, 1.0, g, 4), Error);   // lattice too coarse
    CHECK_THROWS_AS(build_plan(0.5, 1.0, 0.5, g, 2), Error);   // c >= c'
    CHECK_THROWS_AS(build_plan(0.5, 0.25, 0.5, g, 1), Error);  // 1/M = c
    CHECK_THROWS_AS(build_plan(0.0, 0.5, 1.0, g, 2), Error);
    CHECK_THROWS_AS(build_plan(0.5, 0.5, 1.0, GridSpec::box(1, 1.0, 5), 1), Error);
    CHECK(coarsest_admissible_stride(0.5, 1.0, g, 4.0) == 2);
    CHECK(coarsest_admissible_stride(0.01, 1.0, g, 4.0) == std::nullopt);
    CHECK_THROWS_AS(build_plan_with_chain(0.5, 0.5, 1.0, g, 2, {0.5, 1.0}), Error);
}

TEST_CASE("discrete filter matches the oracle and fixes Lip_c data") {
    const auto g = GridSpec::torus(2, 4.0, 8);
    const auto plan = build_plan(2.0, 0.5, 1.0, g, 2);
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> phi(plan.gamma_nodes.size());
        for (auto& v : phi) v = unit(rng);
        CHECK(sup_diff(discrete_filter(phi, plan), oracle_discrete_filter(phi, plan)) <= 1e-12);
        const auto lip = restrict_to_gamma(random_lipschitz(g, 0.5, 100 + trial), plan);
        CHECK(sup_diff(discrete_filter(lip, plan), lip) <= 1e-12);
    }
}

TEST_CASE("discrete filter support property") {
    const auto g = GridSpec::torus(1, 64.0, 256);
    const auto plan = build_plan(0.5, 0.5, 1.0, g, 2, 4.0);
    const double L = plan.params.reach;
    const std::size_t xi = plan.gamma_nodes[plan.coset_begin.back() - 1];
    std::vector<double> phi(plan.gamma_nodes.size());
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t j = 0; j < phi.size(); ++j)
        phi[j] = oracle_distance(g, plan.gamma_nodes[j], xi) <= L ? 0.0 : unit(rng);
    const auto out = discrete_filter(phi, plan);
    CHECK(out[plan.coset_begin.back() - 1] == 0.0);
}

TEST_CASE("filter on a one-dimensional torus") {
    const auto g = GridSpec::torus(1, 16.0, 64);
    const auto plan = build_plan(0.5, 0.5, 1.0, g, 2, 4.0);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto phi = random_lipschitz(g, 0.5, seed);
        const auto out = apply_filter_detailed(phi, plan);
        CHECK(out.max_excursion <= 1e-9);
        CHECK(sup_diff(out.function.values, phi.values) < 0.5);
        CHECK(is_lipschitz(out.function, 1.0, 1e-9));
        for (int s = 0; s < 64; ++s) {
            const int step[] = {s};
            CHECK(apply_filter(torus_shift(phi, step), plan).values == torus_shift(out.function, step).values);
        }
    }
    for (double k : {0.0, 0.3, 1.0}) {
        const SampledFunction c(g, std::vector<double>(g.node_count(), k));
        CHECK(sup_diff(apply_filter(c, plan).values, c.values) <= 1e-9);
    }
}

TEST_CASE("filter output vanishes where the input vanishes on a large ball") {
    const auto g = GridSpec::torus(1, 64.0, 256);
    const auto plan = build_plan(0.5, 0.5, 1.0, g, 2, 4.0);
    const double R = plan.params.support_radius;
    REQUIRE(R < 32.0);
    const std::size_t xi = 128;
    const auto phi = sample_field(g, [&](std::span<const double> t) {
        const double d = std::abs(t[0] - 32.0);
        return std::min(1.0, 0.5 * std::max(0.0, d - R));
    });
    CHECK(std::abs(apply_filter(phi, plan)[xi]) <= 1e-9);
}

TEST_CASE("plan_to_json carries the constants") {
    const auto plan = build_plan(0.5, 0.5, 1.0, GridSpec::torus(1, 4.0, 16), 2);
    const auto j = nlohmann::json::parse(plan_to_json(plan));
    CHECK(j["epsilon"].get<double>() == 0.5);
    CHECK(j["chain"].size() == 8);
}
