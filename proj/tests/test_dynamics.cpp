#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lipfilter/dynamics.hpp"
#include "lipfilter/error.hpp"
#include "lipfilter/lipcore.hpp"

using namespace lipfilter;

namespace {

const GridSpec kLine = GridSpec::torus(1, 4.0, 16);
const GridSpec kPlane = GridSpec::torus(2, 4.0, 16);

TorusAction rank_one() { return TorusAction::make(kPlane, 2, {1.0, 0.0, 0.0, 0.0}); }

NodeSet rows(const GridSpec& g, std::initializer_list<int> which) {
    NodeSet s(g.node_count(), 0);
    for (std::size_t x = 0; x < g.node_count(); ++x)
        for (int r : which)
            if (g.axis_index(x, 1) == r) s[x] = 1;
    return s;
}

double torus_gap(double M, double a, double b) {
    double d = std::fmod(std::abs(a - b), M);
    return std::min(d, M - d);
}

// Brute-force sup of |phi(s) - phi(t)| / |s - t| over orbit pairs read straight from the generator.
double oracle_orbit_lipschitz(const EquivariantMap& f) {
    const auto& g = f.action.space;
    const int m = g.points_per_axis();
    const int n = f.action.n;
    double worst = 0.0;
    const std::size_t tcount = static_cast<std::size_t>(std::pow(m, n));
    auto steps_of = [&](std::size_t k) {
        std::vector<int> s(static_cast<std::size_t>(n));
        for (int j = n - 1; j >= 0; --j) {
            s[static_cast<std::size_t>(j)] = static_cast<int>(k % m);
            k /= m;
        }
        return s;
    };
    for (std::size_t x = 0; x < g.node_count(); ++x)
        for (std::size_t a = 0; a < tcount; ++a)
            for (std::size_t b = a + 1; b < tcount; ++b) {
                const auto sa = steps_of(a);
                const auto sb = steps_of(b);
                double sq = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double gap = torus_gap(g.size(), sa[j] * g.spacing(), sb[j] * g.spacing());
                    sq += gap * gap;
                }
                const double q = std::abs(f.evaluate(x, sa) - f.evaluate(x, sb)) / std::sqrt(sq);
                worst = std::max(worst, q);
            }
    return worst;
}

}  // namespace

TEST_CASE("act: identity, fixed points and the action law") {
    const auto flow = TorusAction::free_flow(kPlane);
    const std::vector<double> x{1.25, 3.5};
    CHECK(act(flow, x, std::vector<double>{0.0, 0.0}) == x);
    const auto still = TorusAction::trivial(kPlane, 3);
    CHECK(act(still, x, std::vector<double>{2.0, -7.0, 0.3}) == x);

    const auto tilted = TorusAction::make(kPlane, 2, {1.0, 2.0, -1.0, 3.0});
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int k = 0; k < 50; ++k) {
        const std::vector<double> t{u(rng), u(rng)}, s{u(rng), u(rng)};
        const std::vector<double> ts{t[0] + s[0], t[1] + s[1]};
        const auto lhs = act(tilted, x, ts);
        const auto rhs = act(tilted, act(tilted, x, s), t);
        for (int i = 0; i < 2; ++i) CHECK(torus_gap(4.0, lhs[i], rhs[i]) < 1e-12);
    }
}

TEST_CASE("act_node agrees with act at grid times") {
    const auto tilted = TorusAction::make(kPlane, 2, {1.0, 2.0, -1.0, 3.0});
    for (std::size_t x : {0ul, 37ul, 255ul})
        for (const std::vector<int>& k : {std::vector<int>{1, 0}, {0, 1}, {-3, 5}, {7, -2}}) {
            const std::vector<double> t{k[0] * kPlane.spacing(), k[1] * kPlane.spacing()};
            const auto y = act(tilted, kPlane.coords(x), t);
            const auto node = act_node(tilted, x, k);
            for (int i = 0; i < 2; ++i) CHECK(torus_gap(4.0, kPlane.coord(node, i), y[i]) < 1e-12);
        }
    CHECK_THROWS_AS(act_node(TorusAction::make(kPlane, 1, {0.5, 1.0}), 0, std::vector<int>{1}), Error);
}

TEST_CASE("stabilizer_split") {
    const auto s1 = stabilizer_split(rank_one());
    REQUIRE(s1.g.size() == 1);
    REQUIRE(s1.h.size() == 1);
    CHECK(std::abs(s1.g[0][0]) < 1e-14);
    CHECK(s1.g[0][1] == doctest::Approx(1.0));
    CHECK(s1.h[0][0] == doctest::Approx(1.0));

    CHECK(stabilizer_split(TorusAction::free_flow(kPlane)).g.empty());
    const auto s0 = stabilizer_split(TorusAction::trivial(kPlane, 3));
    CHECK(s0.g.size() == 3);
    CHECK(s0.h.empty());

    // 2x3 with a one-dimensional kernel spanned by (1, -1, 1)/sqrt 3.
    const auto wide = TorusAction::make(kPlane, 3, {1.0, 1.0, 0.0, 0.0, 1.0, 1.0});
    const auto sw = stabilizer_split(wide);
    REQUIRE(sw.g.size() == 1);
    const double k = 1.0 / std::sqrt(3.0);
    CHECK(sw.g[0][0] == doctest::Approx(k));
    CHECK(sw.g[0][1] == doctest::Approx(-k));
    CHECK(sw.g[0][2] == doctest::Approx(k));
    CHECK(sw.h.size() == 2);
}

TEST_CASE("gram_schmidt_frame") {
    const auto f1 = gram_schmidt_frame({{1.0, 0.0}}, {{1.0, 0.0}});
    REQUIRE(f1.rank() == 1);
    CHECK(f1.columns[0] == std::vector<double>{1.0, 0.0});

    const double s = 1.0 / std::sqrt(2.0);
    const auto f2 = gram_schmidt_frame({{s, s}}, {{1.0, 0.0}});
    CHECK(f2.columns[0][0] == doctest::Approx(s).epsilon(1e-14));
    CHECK(f2.columns[0][1] == doctest::Approx(s).epsilon(1e-14));

    const std::vector<std::vector<double>> basis{{1.0, 2.0, 0.0}, {0.0, 1.0, 1.0}};
    const auto a = gram_schmidt_frame(basis, standard_reference(3, 2));
    const auto b = gram_schmidt_frame(basis, standard_reference(3, 2));
    CHECK(a.columns == b.columns);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k) dot += a.columns[i][k] * a.columns[j][k];
            CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-12);
        }

    CHECK_THROWS_AS(gram_schmidt_frame({{0.0, 1.0}}, {{1.0, 0.0}}), Error);
}

TEST_CASE("equivariant evaluation is consistent under grid shifts") {
    const auto tilted = TorusAction::make(kPlane, 2, {1.0, 2.0, -1.0, 3.0});
    const EquivariantMap f{tilted, random_lipschitz(kPlane, 0.5, 11)};
    for (std::size_t x : {0ul, 100ul})
        for (const std::vector<int>& s : {std::vector<int>{1, 0}, {2, -3}})
            for (const std::vector<int>& t : {std::vector<int>{0, 0}, {4, 1}, {-5, 7}}) {
                const std::vector<int> ts{t[0] + s[0], t[1] + s[1]};
                CHECK(f.evaluate(act_node(tilted, x, s), t) == f.evaluate(x, ts));
            }
}

TEST_CASE("invariant sets and fixed points") {
    const auto r1 = rank_one();
    CHECK(is_invariant(r1, rows(kPlane, {0, 3})));
    NodeSet one(kPlane.node_count(), 0);
    one[5] = 1;
    CHECK_FALSE(is_invariant(r1, one));
    CHECK(is_invariant(TorusAction::trivial(kPlane, 2), one));
    const auto fix0 = fixed_nodes(TorusAction::trivial(kLine, 1));
    CHECK(std::all_of(fix0.begin(), fix0.end(), [](char c) { return c == 1; }));
    const auto fix1 = fixed_nodes(TorusAction::free_flow(kLine));
    CHECK(std::none_of(fix1.begin(), fix1.end(), [](char c) { return c == 1; }));
}

TEST_CASE("orbit plans") {
    const auto flow = TorusAction::free_flow(kLine);
    const auto p = make_orbit_plan(flow, 0.5, 0.5, 1.0);
    CHECK(p.t_period == 4.0);
    CHECK(p.plan.params.lattice.density_radius <= 0.25);
    const auto q = make_coarse_orbit_plan(flow, 0.1125, 0.225);
    CHECK(q.t_period == 12.0);
    CHECK(q.plan.params.lattice.offsets.size() == 1);
}

TEST_CASE("filter_map matches a direct filter of the orbit function") {
    const auto flow = TorusAction::free_flow(kLine);
    const EquivariantMap f{flow, random_lipschitz(kLine, 1.0, 4)};
    const auto plan = make_orbit_plan(flow, 0.5, 0.5, 1.0);
    const auto g = filter_map(f, plan);
    const auto direct = apply_filter(f.orbit_function(0, plan.t_period), plan.plan);
    for (std::size_t x = 0; x < kLine.node_count(); ++x) CHECK(g.generator[x] == direct[x]);
}

TEST_CASE("equivariant_cutoff") {
    const auto flow = TorusAction::free_flow(kLine);
    const NodeSet all(kLine.node_count(), 1), none(kLine.node_count(), 0);

    const auto full = equivariant_cutoff(flow, all, all, 0.225);
    CHECK(std::all_of(full.beta.generator.values.begin(), full.beta.generator.values.end(),
                      [](double v) { return v == 1.0; }));

    NodeSet V = none;
    V[3] = V[4] = 1;
    const auto empty = equivariant_cutoff(flow, none, V, 0.225);
    for (std::size_t x = 0; x < kLine.node_count(); ++x)
        if (!V[x]) CHECK(empty.beta.generator[x] == 0.0);

    const auto r1 = rank_one();
    const auto A = rows(kPlane, {4, 5});
    const auto Vr = rows(kPlane, {2, 3, 4, 5, 6});
    const auto band = equivariant_cutoff(r1, A, Vr, 0.225);
    for (std::size_t x = 0; x < kPlane.node_count(); ++x) {
        if (A[x]) CHECK(band.beta.generator[x] == 1.0);
        if (!Vr[x]) CHECK(band.beta.generator[x] == 0.0);
    }
    CHECK(orbit_lipschitz(band.beta) <= 0.225 + 1e-9);
    CHECK(oracle_orbit_lipschitz(band.beta) == doctest::Approx(orbit_lipschitz(band.beta)));

    NodeSet bad = rows(kPlane, {4});
    bad[kPlane.flat_index(std::vector<int>{0, 7})] = 1;
    CHECK_THROWS_AS(equivariant_cutoff(r1, bad, Vr, 0.225), Error);
    CHECK_THROWS_AS(equivariant_cutoff(r1, rows(kPlane, {1}), Vr, 0.225), Error);
}

TEST_CASE("equivariant_blend") {
    const auto r1 = rank_one();
    const EquivariantMap f{r1, random_lipschitz(kPlane, 0.5, 1)};
    const EquivariantMap g{r1, random_lipschitz(kPlane, 0.5, 2)};
    const NodeSet all(kPlane.node_count(), 1), none(kPlane.node_count(), 0);

    const auto one = equivariant_cutoff(r1, all, all, 0.225);
    CHECK(equivariant_blend(f, g, one, all, 2.0).generator.values == g.generator.values);
    const auto zero = equivariant_cutoff(r1, none, none, 0.225);
    CHECK(equivariant_blend(f, g, zero, none, 2.0).generator.values == f.generator.values);

    CHECK_THROWS_AS(equivariant_blend(f, g, one, all, 1e-3), Error);

    const auto A = rows(kPlane, {4, 5});
    const auto V = rows(kPlane, {3, 4, 5, 6});
    const auto beta = equivariant_cutoff(r1, A, V, 0.225);
    const auto h = equivariant_blend(f, g, beta, V, 2.0);
    CHECK(orbit_lipschitz(h) <= 0.5 + 2 * 0.225 + 1e-9);
    for (std::size_t x = 0; x < kPlane.node_count(); ++x) {
        if (A[x]) CHECK(h.generator[x] == g.generator[x]);
        if (!V[x]) CHECK(h.generator[x] == f.generator[x]);
    }
}

TEST_CASE("equivariant_extend") {
    const auto still = TorusAction::trivial(kLine, 1);
    const auto g = random_lipschitz(kLine, 0.5, 5);
    NodeSet A(kLine.node_count(), 0);
    for (std::size_t x = 0; x < 8; ++x) A[x] = 1;
    const auto e0 = equivariant_extend(still, A, g, 0.5, 1.0, 0.5);
    for (std::size_t x = 0; x < 8; ++x) CHECK(e0.generator[x] == g[x]);

    const auto flow = TorusAction::free_flow(kLine);
    const NodeSet all(kLine.node_count(), 1);
    const auto e1 = equivariant_extend(flow, all, g, 0.5, 1.0, 0.5);
    for (std::size_t x = 0; x < kLine.node_count(); ++x) CHECK(std::abs(e1.generator[x] - g[x]) < 0.5);
    CHECK(orbit_lipschitz(e1) <= 1.0 + 1e-9);

    const SampledFunction flat(kLine, std::vector<double>(kLine.node_count(), 0.3));
    const auto e2 = equivariant_extend(flow, all, flat, 0.5, 1.0, 0.5);
    CHECK(std::all_of(e2.generator.values.begin(), e2.generator.values.end(), [](double v) { return v == 0.3; }));

    const NodeSet none(kLine.node_count(), 0);
    const auto e3 = equivariant_extend(flow, none, g, 0.5, 1.0, 0.5);
    CHECK(std::all_of(e3.generator.values.begin(), e3.generator.values.end(), [](double v) { return v == 0.0; }));
    CHECK_THROWS_AS(equivariant_extend(flow, A, g, 0.5, 1.0, 0.5), Error);
}

TEST_CASE("extend_and_filter contracts") {
    const double c = 0.5, cp = 1.5, e1 = 0.6, e2 = 0.5;
    for (const auto& action : {TorusAction::trivial(kPlane, 2), TorusAction::free_flow(kLine)}) {
        const auto& X = action.space;
        const EquivariantMap f{action, random_lipschitz(X, c, 21)};
        // g = f + 0.1 (kept in range), c-Lipschitz and within eps1 of f.
        std::vector<double> gv(X.node_count());
        for (std::size_t x = 0; x < gv.size(); ++x) gv[x] = std::min(1.0, f.generator[x] + 0.1);
        const SampledFunction g(X, gv);
        NodeSet A(X.node_count(), action.is_zero() ? 0 : 1);
        if (action.is_zero())
            for (std::size_t x = 0; x < X.node_count(); x += 3) A[x] = 1;
        const auto res = extend_and_filter(action, A, f, g, c, cp, e1, e2);
        for (std::size_t x = 0; x < X.node_count(); ++x) {
            CHECK(std::abs(res.h.generator[x] - f.generator[x]) < e1);
            if (A[x]) CHECK(std::abs(res.h.generator[x] - g[x]) < e2);
            if (A[x] && action.is_zero()) CHECK(res.h.generator[x] == g[x]);
        }
        if (!action.is_zero()) CHECK(orbit_lipschitz(res.h) <= cp + 1e-9);
    }

    const auto flow = TorusAction::free_flow(kLine);
    const EquivariantMap f{flow, random_lipschitz(kLine, c, 3)};
    const NodeSet all(kLine.node_count(), 1);
    CHECK_THROWS_AS(extend_and_filter(flow, all, f, SampledFunction(kLine, std::vector<double>(16, 1.0)), c, cp,
                                      0.01, 0.01),
                    Error);
}

TEST_CASE("base_map") {
    const auto iota = random_lipschitz(kPlane, 3.0, 8);
    const auto still = TorusAction::trivial(kPlane, 2);
    CHECK(base_map(still, iota, 0.3).generator.values == iota.values);

    const auto flow = TorusAction::free_flow(kLine);
    const auto f = base_map(flow, random_lipschitz(kLine, 3.0, 9), 0.3);
    CHECK(orbit_lipschitz(f) <= 0.3 + 1e-9);
    CHECK(oracle_orbit_lipschitz(f) == doctest::Approx(orbit_lipschitz(f)));

    const SampledFunction flat(kLine, std::vector<double>(16, 0.7));
    const auto fc = base_map(flow, flat, 0.3);
    CHECK(fc.generator.values == flat.values);
}

TEST_CASE("section_functional") {
    const auto flow1 = TorusAction::free_flow(GridSpec::torus(1, 4.0, 128));
    const Frame e1{{{1.0}}};
    const std::vector<double> x{0.5};
    const auto one = section_functional(flow1, [](std::span<const double>) { return 1.0; }, e1, x, 1.0, 64);
    CHECK(one[0] == doctest::Approx(1.0).epsilon(1e-12));
    const auto zero = section_functional(flow1, [](std::span<const double>) { return 0.0; }, e1, x, 1.0, 64);
    CHECK(zero[0] == 0.0);

    const auto flow2 = TorusAction::free_flow(GridSpec::torus(2, 4.0, 64));
    const Frame e2{{{1.0, 0.0}, {0.0, 1.0}}};
    const std::vector<double> x2{0.5, 0.5};
    const auto half = section_functional(flow2, [](std::span<const double>) { return 1.0; }, e2, x2, 1.0, 256);
    const double tol = 4.0 * (2.0 / 256.0);
    CHECK(std::abs(half[0] - std::numbers::pi / 2) < tol);
    CHECK(half[0] == half[1]);

    // f(x) = integral over [-r, 0] of h(x + t), h the bump about p = 0, by a fine trapezoid rule.
    const auto pc = std::vector<double>{0.0};
    const auto h = section_bump(flow1, pc, e1, 1.0);
    for (double xv : {-0.3, -0.05, 0.0, 0.1, 0.2}) {
        const std::vector<double> pt{xv < 0 ? xv + 4.0 : xv};
        const auto f = section_functional(flow1, h, e1, pt, 1.0, 2048);
        double ref = 0.0;
        const int steps = 200000;
        for (int k = 0; k <= steps; ++k) {
            const double t = -1.0 + k * (1.0 / steps);
            const double s = std::abs(xv + t);
            const double v = s <= 0.45 ? 1.0 : (s >= 0.5 ? 0.0 : (0.5 - s) / 0.05);
            ref += (k == 0 || k == steps ? 0.5 : 1.0) * v / steps;
        }
        CHECK(std::abs(f[0] - ref) < 1e-5);
    }
    CHECK_THROWS_AS(section_functional(flow1, h, Frame{}, x, 1.0, 64), Error);
}

TEST_CASE("local section for the free flow on the circle") {
    const auto flow = TorusAction::free_flow(GridSpec::torus(1, 4.0, 128));
    const auto sec = build_local_section(flow, 0, 1.0);
    CHECK(sec.E == std::vector<std::size_t>{0});
    CHECK(sec.geometry.delta == doctest::Approx(0.09));
    for (const auto& row : sec.audit) {
        INFO(row.name << " " << row.measured << " " << row.witness);
        CHECK(row.pass);
    }
    CHECK(sec.audit.front().witness.rfind("samples=", 0) == 0);
    CHECK(sec.passed());
    CHECK(audit_to_csv(sec.audit).rfind("name,status,measured,tolerance,witness\n", 0) == 0);

    CHECK_THROWS_AS(build_local_section(flow, 0, 1.0, 0, PointField([](std::span<const double>) { return 1.0; })),
                    Error);
    CHECK_THROWS_AS(build_local_section(TorusAction::trivial(GridSpec::torus(1, 4.0, 128), 1), 0, 1.0), Error);
    CHECK_THROWS_AS(build_local_section(flow, 0, 2.5), Error);
}

TEST_CASE("local section for the rank-one action on the 2-torus") {
    const GridSpec X = GridSpec::torus(2, 4.0, 64);
    const auto act1 = TorusAction::make(X, 2, {1.0, 0.0, 0.0, 0.0});
    const std::size_t p = X.flat_index(std::vector<int>{8, 8});
    const auto sec = build_local_section(act1, p, 1.0);
    REQUIRE(sec.E.size() >= 2);
    for (std::size_t x : sec.E) CHECK(X.axis_index(x, 0) == 8);
    for (const auto& row : sec.audit) {
        INFO(row.name << " " << row.measured << " " << row.witness);
        CHECK(row.pass);
    }
}

TEST_CASE("local section for the free flow on the 2-torus") {
    const GridSpec X = GridSpec::torus(2, 4.0, 64);
    const auto sec = build_local_section(TorusAction::free_flow(X), 0, 1.0);
    CHECK(sec.E == std::vector<std::size_t>{0});
    for (const auto& row : sec.audit) {
        INFO(row.name << " " << row.measured << " " << row.witness);
        CHECK(row.pass);
    }
    CHECK(sec.audit.back().name == "independence");
    CHECK(sec.audit.back().witness != "single transverse direction");
}
