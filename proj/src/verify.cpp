#include "lipfilter/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "lipfilter/dynamics.hpp"
#include "lipfilter/error.hpp"
#include "lipfilter/filter.hpp"
#include "lipfilter/grid.hpp"
#include "lipfilter/lipcore.hpp"
#include "lipfilter/perturb.hpp"

namespace lipfilter {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t property_seed(std::uint64_t seed, const std::string& id) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : id) h = (h ^ ch) * 1099511628211ULL;
    return splitmix(seed ^ h);
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
    return s;
}

struct Outcome {
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string witness;
};

/// measured <= tolerance.
Outcome at_most(double measured, double tolerance, std::string witness = {}) {
    return {measured, tolerance, measured <= tolerance, std::move(witness)};
}

/// measured < tolerance.
Outcome below(double measured, double tolerance, std::string witness = {}) {
    return {measured, tolerance, measured < tolerance, std::move(witness)};
}

struct Context {
    const VerifyOptions& opt;
    std::mt19937_64 rng;
    std::uint64_t seed;

    std::uint64_t next() { return rng(); }
    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }
    int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); }
};

// -- shared configurations ----------------------------------------------------

const GridSpec& filter_grid() {
    static const GridSpec g = GridSpec::torus(1, 16.0, 64);
    return g;
}

const GridSpec& support_grid() {
    static const GridSpec g = GridSpec::torus(1, 64.0, 256);
    return g;
}

const GridSpec& reference_grid() {
    static const GridSpec g = GridSpec::box(2, 1.0, 129);
    return g;
}

FilterPlan plan_on(const GridSpec& g, const VerifyOptions& o) {
    const auto stride = coarsest_admissible_stride(o.epsilon, o.c_prime, g, 4.0);
    if (!stride) throw Error("no admissible lattice for eps = " + format_double(o.epsilon));
    return build_plan(o.epsilon, o.c, o.c_prime, g, *stride, 4.0);
}

std::size_t center(const GridSpec& g) {
    return *g.nearest_node(std::vector<double>(static_cast<std::size_t>(g.dim()), 0.0));
}

// -- grid ----------------------------------------------------------------------

Outcome grid_shift_compose(Context& ctx) {
    const GridSpec g = GridSpec::torus(2, 4.0, 16);
    const auto phi = random_lipschitz(g, 1.0, ctx.next());
    int bad = 0;
    std::string witness;
    for (int k = 0; k < 20; ++k) {
        const std::vector<int> u{ctx.integer(-20, 20), ctx.integer(-20, 20)};
        const std::vector<int> v{ctx.integer(-20, 20), ctx.integer(-20, 20)};
        const std::vector<int> uv{u[0] + v[0], u[1] + v[1]};
        if (torus_shift(torus_shift(phi, v), u).values != torus_shift(phi, uv).values) {
            ++bad;
            witness = "u=(" + std::to_string(u[0]) + " " + std::to_string(u[1]) + ") v=(" + std::to_string(v[0]) +
                      " " + std::to_string(v[1]) + ")";
        }
    }
    return at_most(bad, 0, witness.empty() ? "20 pairs" : witness);
}

Outcome grid_lfn_roundtrip(Context& ctx) {
    int bad = 0;
    std::string witness = "100 functions";
    for (int k = 0; k < 100; ++k) {
        const int dim = 1 + k % 2;
        const int m = 2 * ctx.integer(2, 8) + 1;
        const GridSpec g = k % 3 == 0 ? GridSpec::box(dim, ctx.uniform(0.5, 3.0), m)
                                      : GridSpec::torus(dim, ctx.uniform(0.5, 8.0), m);
        const auto phi = random_lipschitz(g, ctx.uniform(0.2, 4.0), ctx.next());
        std::stringstream s;
        save_lfn(phi, s);
        const auto back = load_lfn(s);
        if (!(back.grid == phi.grid) || back.values != phi.values) {
            ++bad;
            witness = "function " + std::to_string(k);
        }
    }
    return at_most(bad, 0, witness);
}

Outcome grid_density_radius(Context&) {
    double worst = 0.0;
    int odd_violations = 0;
    std::string witness = "dims 1-2; strides 1 2 3 4 6";
    for (int dim = 1; dim <= 2; ++dim) {
        const GridSpec g = GridSpec::torus(dim, 4.0, 24);
        for (int s : {1, 2, 3, 4, 6}) {
            const auto lat = LatticeSubset::strided(g, 4.0, s);
            const double brute = lattice_density_radius(g, lat);
            const double formula = 0.5 * s * g.spacing() * std::sqrt(static_cast<double>(dim));
            if (s % 2 == 0) {
                const double gap = std::max(std::abs(brute - formula), std::abs(lat.density_radius - formula));
                if (gap > worst) {
                    worst = gap;
                    witness = "dim " + std::to_string(dim) + " stride " + std::to_string(s);
                }
            } else if (brute > formula + 1e-12) {
                ++odd_violations;
            }
        }
    }
    if (odd_violations) return {std::numeric_limits<double>::infinity(), 1e-12, false, "odd stride above formula"};
    return at_most(worst, 1e-12, witness);
}

// -- lipcore -------------------------------------------------------------------

struct ExtensionCase {
    GridSpec grid;
    NodeData data;
    double c = 0.0;
};

ExtensionCase random_extension_case(Context& ctx, int k) {
    ExtensionCase ec;
    ec.grid = k % 2 == 0 ? GridSpec::box(1, 1.0, 2 * ctx.integer(10, 200) + 1)
                         : GridSpec::torus(2, ctx.uniform(2.0, 6.0), ctx.integer(8, 32));
    ec.c = ctx.uniform(0.3, 3.0);
    const auto src = random_lipschitz(ec.grid, ec.c, ctx.next());
    const int count = ctx.integer(1, 20);
    std::vector<std::size_t> nodes(ec.grid.node_count());
    for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = i;
    std::shuffle(nodes.begin(), nodes.end(), ctx.rng);
    nodes.resize(static_cast<std::size_t>(count));
    std::sort(nodes.begin(), nodes.end());
    for (std::size_t n : nodes) {
        ec.data.nodes.push_back(n);
        ec.data.values.push_back(src[n]);
    }
    return ec;
}

Outcome lipcore_mcshane_lipschitz(Context& ctx) {
    double worst = -std::numeric_limits<double>::infinity();
    std::string witness;
    for (int k = 0; k < 10; ++k) {
        const auto ec = random_extension_case(ctx, k);
        const auto ext = mcshane_extend(ec.grid, ec.data, ec.c);
        for (std::size_t i = 0; i < ec.data.nodes.size(); ++i)
            if (ext[ec.data.nodes[i]] != ec.data.values[i])
                return {std::numeric_limits<double>::infinity(), 1e-12, false,
                        "case " + std::to_string(k) + " differs on S at node " + std::to_string(ec.data.nodes[i])};
        const auto rep = lipschitz_constant(ext);
        if (rep.constant - ec.c > worst) {
            worst = rep.constant - ec.c;
            witness = "case " + std::to_string(k) + " pair " + std::to_string(rep.witness_a) + " " +
                      std::to_string(rep.witness_b);
        }
    }
    return at_most(worst, 1e-12, witness);
}

Outcome lipcore_mcshane_maximal(Context& ctx) {
    const GridSpec g = GridSpec::box(2, 1.0, 21);
    const double c = ctx.uniform(0.5, 2.0);
    const auto src = random_lipschitz(g, c, ctx.next());
    NodeData data;
    for (std::size_t n = 0; n < g.node_count(); n += 37) {
        data.nodes.push_back(n);
        data.values.push_back(src[n]);
    }
    const auto ext = mcshane_extend(g, data, c);
    double worst = -std::numeric_limits<double>::infinity();
    std::string witness;
    for (int k = 0; k < 20; ++k) {
        // Competitor: feasible values on extra nodes picked one by one, then extended.
        NodeData more = data;
        for (int j = 0; j < 10; ++j) {
            const std::size_t t = static_cast<std::size_t>(ctx.integer(0, static_cast<int>(g.node_count()) - 1));
            if (std::find(more.nodes.begin(), more.nodes.end(), t) != more.nodes.end()) continue;
            double lo = 0.0, hi = 1.0;
            for (std::size_t i = 0; i < more.nodes.size(); ++i) {
                const double d = g.distance(t, more.nodes[i]);
                lo = std::max(lo, more.values[i] - c * d);
                hi = std::min(hi, more.values[i] + c * d);
            }
            more.nodes.push_back(t);
            more.values.push_back(lo + (hi - lo) * ctx.uniform(0.0, 1.0));
        }
        const auto psi = mcshane_extend(g, more, c);
        for (std::size_t t = 0; t < g.node_count(); ++t)
            if (psi[t] - ext[t] > worst) {
                worst = psi[t] - ext[t];
                witness = "competitor " + std::to_string(k) + " node " + std::to_string(t);
            }
    }
    return at_most(worst, 1e-12, witness);
}

Outcome lipcore_feasibility_infimum(Context& ctx) {
    int bad = 0;
    std::string witness = "1000 triples";
    for (int k = 0; k < 1000; ++k) {
        const double c = ctx.uniform(0.1, 2.0);
        const double y = ctx.uniform(-0.99, 0.99) * c;
        const double x = ctx.uniform(-3.0, 3.0);
        const double s = convex_feasibility(x, y, c);
        auto feasible = [&](double t) { return std::abs((1.0 - t) * x + t * y) <= c + 1e-12; };
        bool ok = feasible(std::min(s + 1e-4, 1.0));
        for (double t = 0.0; ok && t < s - 1e-4; t += 1e-4) ok = !feasible(t);
        if (!ok) {
            ++bad;
            witness = "x=" + format_double(x) + " y=" + format_double(y) + " c=" + format_double(c);
        }
    }
    return at_most(bad, 0, witness);
}

Outcome lipcore_local_modulus_bound(Context& ctx) {
    const GridSpec g = GridSpec::torus(2, 4.0, 16);
    double worst = -std::numeric_limits<double>::infinity();
    std::string witness;
    for (int k = 0; k < 20; ++k) {
        const auto phi = random_lipschitz(g, ctx.uniform(0.2, 3.0), ctx.next());
        const double global = lipschitz_constant(phi).constant;
        const std::size_t p = static_cast<std::size_t>(ctx.integer(0, static_cast<int>(g.node_count()) - 1));
        const double r = ctx.uniform(0.1, 2.0);
        const double local = local_modulus(phi, p, r);
        if (local - global > worst) {
            worst = local - global;
            witness = "p=" + std::to_string(p) + " r=" + format_double(r);
        }
    }
    return at_most(worst, 1e-12, witness);
}

// -- filter --------------------------------------------------------------------

Outcome filter_discrete_identity(Context& ctx) {
    const auto plan = plan_on(filter_grid(), ctx.opt);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const auto gamma = restrict_to_gamma(random_lipschitz(filter_grid(), ctx.opt.c, ctx.next()), plan);
        worst = std::max(worst, sup_diff(discrete_filter(gamma, plan), gamma));
    }
    return at_most(worst, 1e-12, "20 lattice functions");
}

Outcome filter_discrete_support(Context& ctx) {
    const auto plan = plan_on(support_grid(), ctx.opt);
    const double L = plan.params.reach;
    double worst = 0.0;
    std::string witness = "L=" + format_double(L);
    for (int k = 0; k < 10; ++k) {
        const std::size_t slot = static_cast<std::size_t>(ctx.integer(0, static_cast<int>(plan.gamma_nodes.size()) - 1));
        const std::size_t xi = plan.gamma_nodes[slot];
        std::vector<double> phi(plan.gamma_nodes.size());
        for (std::size_t j = 0; j < phi.size(); ++j)
            phi[j] = support_grid().distance(plan.gamma_nodes[j], xi) <= L ? 0.0 : ctx.uniform(0.0, 1.0);
        const double v = std::abs(discrete_filter(phi, plan)[slot]);
        if (v > worst) {
            worst = v;
            witness = "xi=" + std::to_string(xi);
        }
    }
    return at_most(worst, 0.0, witness);
}

struct FilterRun {
    std::vector<SampledFunction> inputs;
    std::vector<SampledFunction> outputs;
};

FilterRun filter_runs(Context& ctx, int count) {
    const auto plan = plan_on(filter_grid(), ctx.opt);
    FilterRun run;
    for (int k = 0; k < count; ++k) {
        run.inputs.push_back(random_lipschitz(filter_grid(), ctx.opt.c, ctx.next()));
        run.outputs.push_back(apply_filter(run.inputs.back(), plan));
    }
    return run;
}

Outcome filter_approximation(Context& ctx) {
    const auto run = filter_runs(ctx, 20);
    double worst = 0.0;
    for (std::size_t k = 0; k < run.inputs.size(); ++k)
        worst = std::max(worst, sup_diff(run.inputs[k].values, run.outputs[k].values));
    return below(worst, ctx.opt.epsilon, "20 Lip_c inputs");
}

Outcome filter_lipschitz(Context& ctx) {
    const auto run = filter_runs(ctx, 20);
    double worst = 0.0;
    std::string witness;
    for (std::size_t k = 0; k < run.outputs.size(); ++k) {
        const auto rep = lipschitz_constant(run.outputs[k]);
        if (rep.constant > worst) {
            worst = rep.constant;
            witness = "input " + std::to_string(k) + " pair " + std::to_string(rep.witness_a) + " " +
                      std::to_string(rep.witness_b);
        }
    }
    return at_most(worst, ctx.opt.c_prime + 1e-9, witness);
}

Outcome filter_constants(Context& ctx) {
    const auto plan = plan_on(filter_grid(), ctx.opt);
    double worst = 0.0;
    for (double k : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const SampledFunction c(filter_grid(), std::vector<double>(filter_grid().node_count(), k));
        worst = std::max(worst, sup_diff(apply_filter(c, plan).values, c.values));
    }
    return at_most(worst, 1e-9, "constants 0 0.25 0.5 0.75 1");
}

Outcome filter_support(Context& ctx) {
    const GridSpec& g = support_grid();
    const auto plan = plan_on(g, ctx.opt);
    const double R = plan.params.support_radius;
    if (!(R < g.size() / 2.0)) return {R, g.size() / 2.0, false, "support radius exceeds half the torus"};
    double worst = 0.0;
    std::string witness = "R=" + format_double(R);
    for (int k = 0; k < 10; ++k) {
        const std::size_t xi = static_cast<std::size_t>(ctx.integer(0, static_cast<int>(g.node_count()) - 1));
        const auto rho = random_lipschitz(g, ctx.opt.c, ctx.next());
        std::vector<double> v(g.node_count());
        for (std::size_t t = 0; t < v.size(); ++t)
            v[t] = std::min(rho[t], ctx.opt.c * std::max(0.0, g.distance(t, xi) - R));
        const double out = std::abs(apply_filter(SampledFunction(g, v), plan)[xi]);
        if (out > worst) {
            worst = out;
            witness = "R=" + format_double(R) + " xi=" + std::to_string(xi);
        }
    }
    return at_most(worst, 1e-9, witness);
}

Outcome filter_equivariance(Context& ctx) {
    const auto plan = plan_on(filter_grid(), ctx.opt);
    int bad = 0;
    std::string witness = "3 inputs x 64 shifts";
    for (int k = 0; k < 3; ++k) {
        const auto phi = random_lipschitz(filter_grid(), ctx.opt.c, ctx.next());
        const auto out = apply_filter(phi, plan);
        for (int s = 0; s < filter_grid().points_per_axis(); ++s) {
            const int step[] = {s};
            if (apply_filter(torus_shift(phi, step), plan).values != torus_shift(out, step).values) {
                ++bad;
                witness = "input " + std::to_string(k) + " shift " + std::to_string(s);
            }
        }
    }
    return at_most(bad, 0, witness);
}

Outcome filter_idempotence(Context& ctx) {
    const auto& o = ctx.opt;
    const auto plan = plan_on(filter_grid(), o);
    VerifyOptions second = o;
    second.c = o.c_prime;
    second.c_prime = 2.0 * o.c_prime;
    const auto plan2 = plan_on(filter_grid(), second);
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
        const auto once = apply_filter(random_lipschitz(filter_grid(), o.c, ctx.next()), plan);
        worst = std::max(worst, sup_diff(apply_filter(once, plan2).values, once.values));
    }
    return below(worst, o.epsilon, "second pass at (eps, c', 2c')");
}

Outcome filter_average_invariance(Context& ctx) {
    const auto plan = plan_on(filter_grid(), ctx.opt);
    const GridSpec& g = plan.torus_grid;
    auto average_at = [&](std::size_t t) {
        std::vector<double> terms;
        for (const auto& u : plan.fundamental_steps) {
            std::vector<int> neg(u.size());
            for (std::size_t i = 0; i < u.size(); ++i) neg[i] = -u[i];
            terms.push_back(plan.psi[g.translate(t, neg)]);
        }
        std::sort(terms.begin(), terms.end());
        double s = 0.0;
        for (double v : terms) s += v;
        return s;
    };
    const double a0 = average_at(0);
    double worst = 0.0;
    std::string witness = "all grid t";
    for (std::size_t t = 1; t < g.node_count(); ++t) {
        const double d = std::abs(average_at(t) - a0);
        if (d > worst) {
            worst = d;
            witness = "t=" + std::to_string(t);
        }
    }
    return at_most(worst, 0.0, witness);
}

// -- perturb -------------------------------------------------------------------

Outcome perturb_break_boundary(Context& ctx) {
    const GridSpec& g = reference_grid();
    int bad = 0;
    for (int k = 0; k < 2; ++k) {
        const auto phi = random_lipschitz(g, ctx.opt.c, ctx.next());
        const auto res = break_invariance(phi, ctx.opt.epsilon, ctx.opt.c, ctx.opt.c_prime);
        for (std::size_t t = 0; t < g.node_count(); ++t)
            if (g.on_boundary_layer(t) && res.function[t] != phi[t]) ++bad;
    }
    return at_most(bad, 0, "2 inputs; boundary layer");
}

Outcome perturb_break_sup(Context& ctx) {
    const GridSpec& g = reference_grid();
    double worst = 0.0;
    for (int k = 0; k < 2; ++k) {
        const auto phi = random_lipschitz(g, ctx.opt.c, ctx.next());
        const auto res = break_invariance(phi, ctx.opt.epsilon, ctx.opt.c, ctx.opt.c_prime);
        worst = std::max(worst, sup_diff(res.function.values, phi.values));
    }
    return below(worst, ctx.opt.epsilon, "2 inputs");
}

Outcome perturb_break_origin_modulus(Context& ctx) {
    const GridSpec& g = reference_grid();
    double worst = 0.0;
    double tau = 0.0;
    std::string witness;
    for (int k = 0; k < 2; ++k) {
        const auto phi = random_lipschitz(g, ctx.opt.c, ctx.next());
        const auto res = break_invariance(phi, ctx.opt.epsilon, ctx.opt.c, ctx.opt.c_prime);
        tau = res.tau_grid;
        const double L = local_modulus(res.function, center(g), res.delta);
        // Distance of L from [c' - tau, c'].
        const double miss = std::max({0.0, L - ctx.opt.c_prime - 1e-12, ctx.opt.c_prime - tau - L});
        witness = "L=" + format_double(L) + " tau=" + format_double(tau);
        worst = std::max(worst, miss);
    }
    return at_most(worst, 0.0, witness);
}

Outcome perturb_break_anchor_modulus(Context& ctx) {
    const GridSpec& g = reference_grid();
    const double c1 = 0.5 * (ctx.opt.c + ctx.opt.c_prime);
    double worst = 0.0;
    double bound = 0.0;
    std::string witness;
    for (int k = 0; k < 2; ++k) {
        const auto phi = random_lipschitz(g, ctx.opt.c, ctx.next());
        const auto res = break_invariance(phi, ctx.opt.epsilon, ctx.opt.c, ctx.opt.c_prime);
        bound = c1 + res.tau_grid;
        for (int j = 0; j < 16; ++j) {
            const double a = 2.0 * std::numbers::pi * j / 16.0;
            const std::vector<double> q{0.75 * g.size() * std::cos(a), 0.75 * g.size() * std::sin(a)};
            const double L = local_modulus(res.function, *g.nearest_node(q), res.delta);
            if (L > worst) {
                worst = L;
                witness = "direction " + std::to_string(j);
            }
        }
    }
    return at_most(worst, bound, witness);
}

BumpLayout reference_layout(const VerifyOptions& o) {
    return make_layout(reference_grid(), 3, default_chain(o.c, o.c_prime), o.epsilon);
}

Outcome perturb_encode_roundtrip(Context& ctx) {
    const auto layout = reference_layout(ctx.opt);
    double worst = 0.0;
    std::string witness;
    for (int k = 0; k < 2; ++k) {
        const auto phi = random_lipschitz(reference_grid(), ctx.opt.c, ctx.next());
        for (const std::vector<double>& s : {std::vector<double>{0.0, 0.5, 1.0}, {0.25, 0.75, 0.5}}) {
            const auto back = multibump_decode(multibump_encode(phi, s, layout, ctx.opt.epsilon), layout);
            const double e = sup_diff(back, s);
            if (e >= worst) {
                worst = e;
                witness = "s=(" + format_double(s[0]) + " " + format_double(s[1]) + " " + format_double(s[2]) + ")";
            }
        }
    }
    return at_most(worst, 0.05, witness);
}

Outcome perturb_encode_origin_modulus(Context& ctx) {
    const auto layout = reference_layout(ctx.opt);
    const double c4 = layout.chain[3];
    const double tau = grid_tolerance(c4, reference_grid().spacing(), layout.delta);
    const auto phi = random_lipschitz(reference_grid(), ctx.opt.c, ctx.next());
    const std::vector<double> s{0.0, 0.5, 1.0};
    const auto enc = multibump_encode(phi, s, layout, ctx.opt.epsilon);
    const double L = local_modulus(enc, center(reference_grid()), layout.delta / 2.0);
    return at_most(std::abs(L - c4), tau, "L=" + format_double(L));
}

Outcome perturb_encode_boundary(Context& ctx) {
    const GridSpec& g = reference_grid();
    const auto layout = reference_layout(ctx.opt);
    const auto phi = random_lipschitz(g, ctx.opt.c, ctx.next());
    const auto enc = multibump_encode(phi, std::vector<double>{1.0, 0.0, 0.5}, layout, ctx.opt.epsilon);
    int bad = 0;
    for (std::size_t t = 0; t < g.node_count(); ++t)
        if (g.on_boundary_layer(t) && enc[t] != phi[t]) ++bad;
    return at_most(bad, 0, "boundary layer");
}

Outcome perturb_decode_monotone(Context& ctx) {
    const auto layout = reference_layout(ctx.opt);
    const auto phi = random_lipschitz(reference_grid(), ctx.opt.c, ctx.next());
    double previous = -std::numeric_limits<double>::infinity();
    double worst = 0.0;
    std::string witness = "s_1 over 0 0.25 0.5 0.75 1";
    for (double v : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const std::vector<double> s{v, 0.5, 0.5};
        const double got = multibump_decode(multibump_encode(phi, s, layout, ctx.opt.epsilon), layout)[0];
        if (previous - got > worst) {
            worst = previous - got;
            witness = "drop at s_1=" + format_double(v);
        }
        previous = got;
    }
    return at_most(worst, 0.0, witness);
}

Outcome perturb_disjointness(Context& ctx) {
    const GridSpec& g = reference_grid();
    const auto layout = reference_layout(ctx.opt);
    const auto phi = random_lipschitz(g, ctx.opt.c, ctx.next());
    const auto enc = multibump_encode(phi, std::vector<double>{0.3, 0.6, 0.9}, layout, ctx.opt.epsilon);
    const double slope = layout.chain[1] - layout.chain[0];
    const std::size_t origin = center(g);
    double worst = 0.0;
    std::string witness = "outside the pits";
    for (std::size_t t = 0; t < g.node_count(); ++t) {
        bool inside = g.distance(t, origin) < layout.delta / 2.0;
        for (std::size_t p : layout.anchors) inside = inside || g.distance(t, p) < layout.delta;
        if (inside) continue;
        const double bump = std::min(layout.epsilon1, slope * g.steps_to_boundary(t) * g.spacing());
        const double base = std::max(0.0, phi[t] - bump);
        const double d = std::abs(enc[t] - base);
        if (d > worst) {
            worst = d;
            witness = "node " + std::to_string(t);
        }
    }
    return at_most(worst, 0.0, witness);
}

Outcome perturb_lipschitz(Context& ctx) {
    const GridSpec g = GridSpec::box(1, 1.0, 2001);
    const auto& o = ctx.opt;
    const auto phi = random_lipschitz(g, o.c, ctx.next());
    const auto broken = break_invariance(phi, o.epsilon, o.c, o.c_prime).function;
    const auto layout = make_layout(g, 3, default_chain(o.c, o.c_prime), o.epsilon);
    const auto enc = multibump_encode(phi, std::vector<double>{0.2, 0.5, 0.8}, layout, o.epsilon);
    const double a = lipschitz_constant(broken).constant;
    const double b = lipschitz_constant(enc).constant;
    return at_most(std::max(a, b), o.c_prime + 1e-9,
                   "break " + format_double(a) + " encode " + format_double(b) + " on box(1 1 2001)");
}

Outcome perturb_family_distinguished(Context& ctx) {
    const auto& o = ctx.opt;
    std::vector<SampledFunction> family;
    for (int attempt = 0; attempt < 200 && family.size() < 3; ++attempt) {
        auto f = random_lipschitz(reference_grid(), o.c, ctx.next());
        bool far = true;
        for (const auto& g : family) far = far && sup_diff(f.values, g.values) >= o.epsilon;
        if (far) family.push_back(std::move(f));
    }
    if (family.size() < 3) return {0.0, 0.0, false, "could not draw 3 eps-separated members"};
    const auto dist = distinguish_family(family, o.epsilon, o.c, o.c_prime);
    int bad = 0;
    std::string witness = "3 members; eta=" + format_double(dist.eta);
    for (std::size_t x = 0; x < family.size(); ++x)
        for (std::size_t y = 0; y < family.size(); ++y) {
            const auto s = shifted_agreement(dist.functions[x], dist.functions[y], dist.eta);
            const bool ok = x == y ? s.has_value() : !s.has_value();
            if (!ok) {
                ++bad;
                witness = "pair " + std::to_string(x) + " " + std::to_string(y);
            }
        }
    return at_most(bad, 0, witness);
}

// -- dynamics ------------------------------------------------------------------

NodeSet band(const GridSpec& g, std::initializer_list<int> rows) {
    NodeSet s(g.node_count(), 0);
    for (std::size_t x = 0; x < g.node_count(); ++x)
        for (int r : rows)
            if (g.axis_index(x, 1) == r) s[x] = 1;
    return s;
}

Outcome dynamics_evaluation_consistency(Context& ctx) {
    const GridSpec X = GridSpec::torus(2, 4.0, 16);
    const auto action = TorusAction::make(X, 2, {1.0, 2.0, -1.0, 3.0});
    const EquivariantMap f{action, random_lipschitz(X, 0.5, ctx.next())};
    int bad = 0;
    for (int k = 0; k < 200; ++k) {
        const std::size_t x = static_cast<std::size_t>(ctx.integer(0, static_cast<int>(X.node_count()) - 1));
        const std::vector<int> s{ctx.integer(-30, 30), ctx.integer(-30, 30)};
        const std::vector<int> t{ctx.integer(-30, 30), ctx.integer(-30, 30)};
        const std::vector<int> ts{t[0] + s[0], t[1] + s[1]};
        if (f.evaluate(act_node(action, x, s), t) != f.evaluate(x, ts)) ++bad;
        const std::vector<double> tv{t[0] * X.spacing(), t[1] * X.spacing()};
        const auto y = act(action, X.coords(x), tv);
        if (f.evaluate(x, t) != f.generator[*X.nearest_node(y)]) ++bad;
    }
    return at_most(bad, 0, "200 grid (x s t)");
}

Outcome dynamics_cutoff(Context&) {
    const GridSpec X = GridSpec::torus(2, 4.0, 16);
    const auto action = TorusAction::make(X, 2, {1.0, 0.0, 0.0, 0.0});
    const auto A = band(X, {4, 5});
    const auto V = band(X, {2, 3, 4, 5, 6});
    const double delta = 0.225;
    const auto cut = equivariant_cutoff(action, A, V, delta);
    int bad = 0;
    for (std::size_t x = 0; x < X.node_count(); ++x) {
        if (A[x] && cut.beta.generator[x] != 1.0) ++bad;
        if (!V[x] && cut.beta.generator[x] != 0.0) ++bad;
    }
    const double lip = orbit_lipschitz(cut.beta);
    if (bad) return {lip, delta + 1e-9, false, std::to_string(bad) + " nodes break beta = 1 on A or beta = 0 off V"};
    return at_most(lip, delta + 1e-9, "rank-one action; bands");
}

Outcome dynamics_blend_lipschitz(Context& ctx) {
    const double c = 0.5, delta = 0.225, eps = 0.9;
    const GridSpec X1 = GridSpec::torus(1, 4.0, 16);
    const GridSpec X2 = GridSpec::torus(2, 4.0, 16);
    double worst = 0.0;
    std::string witness;
    for (int k = 0; k < 10; ++k) {
        const int kind = k % 3;
        const TorusAction action = kind == 0   ? TorusAction::trivial(X2, 2)
                                   : kind == 1 ? TorusAction::free_flow(X1)
                                               : TorusAction::make(X2, 2, {1.0, 0.0, 0.0, 0.0});
        const GridSpec& X = action.space;
        const EquivariantMap f{action, random_lipschitz(X, c, ctx.next())};
        const EquivariantMap g{action, random_lipschitz(X, c, ctx.next())};
        NodeSet V(X.node_count(), 0), A(X.node_count(), 0);
        for (std::size_t x = 0; x < X.node_count(); ++x) V[x] = std::abs(f.generator[x] - g.generator[x]) < eps;
        // A: nodes whose whole orbit lies in V.
        for (std::size_t x = 0; x < X.node_count(); ++x) {
            if (!V[x]) continue;
            bool whole = true;
            for (int j = 0; j < X.points_per_axis() && whole; ++j) {
                std::vector<int> steps(static_cast<std::size_t>(action.n), 0);
                steps[0] = j;
                whole = V[act_node(action, x, steps)] != 0;
            }
            A[x] = whole;
        }
        // Any subset is invariant under the trivial action.
        if (kind == 0)
            for (std::size_t x = 0; x < X.node_count(); ++x)
                if (A[x] && ctx.uniform(0.0, 1.0) < 0.3) A[x] = 0;
        if (!is_invariant(action, A)) A.assign(X.node_count(), 0);
        const auto beta = equivariant_cutoff(action, A, V, delta);
        const auto h = equivariant_blend(f, g, beta, V, eps);
        const double lip = orbit_lipschitz(h);
        if (lip >= worst) {
            worst = lip;
            witness = "case " + std::to_string(k);
        }
    }
    return at_most(worst, c + 2.0 * delta + 1e-9, witness);
}

struct ExtendFilterRun {
    double sup_f = 0.0;
    double sup_g = 0.0;
    double fix_gap = 0.0;
};

ExtendFilterRun extend_filter_runs(Context& ctx, double e1, double e2) {
    const double c = 0.5, cp = 1.5;
    ExtendFilterRun out;
    for (const auto& action : {TorusAction::trivial(GridSpec::torus(2, 4.0, 16), 2),
                               TorusAction::free_flow(GridSpec::torus(1, 4.0, 16))}) {
        const GridSpec& X = action.space;
        const EquivariantMap f{action, random_lipschitz(X, c, ctx.next())};
        std::vector<double> gv(X.node_count());
        const double lift = ctx.uniform(-0.15, 0.15);
        for (std::size_t x = 0; x < gv.size(); ++x) gv[x] = std::clamp(f.generator[x] + lift, 0.0, 1.0);
        const SampledFunction g(X, gv);
        NodeSet A(X.node_count(), 1);
        if (action.is_zero())
            for (std::size_t x = 0; x < X.node_count(); ++x) A[x] = ctx.uniform(0.0, 1.0) < 0.5;
        const auto res = extend_and_filter(action, A, f, g, c, cp, e1, e2);
        const auto fix = fixed_nodes(action);
        for (std::size_t x = 0; x < X.node_count(); ++x) {
            out.sup_f = std::max(out.sup_f, std::abs(res.h.generator[x] - f.generator[x]));
            if (A[x]) out.sup_g = std::max(out.sup_g, std::abs(res.h.generator[x] - g[x]));
            if (A[x] && fix[x]) out.fix_gap = std::max(out.fix_gap, std::abs(res.h.generator[x] - g[x]));
        }
    }
    return out;
}

Outcome dynamics_extend_filter_f(Context& ctx) {
    const auto run = extend_filter_runs(ctx, 0.6, 0.5);
    return below(run.sup_f, 0.6, "B=0 and B=I");
}

Outcome dynamics_extend_filter_g(Context& ctx) {
    const auto run = extend_filter_runs(ctx, 0.6, 0.5);
    return below(run.sup_g, 0.5, "B=0 and B=I");
}

Outcome dynamics_extend_filter_fix(Context& ctx) {
    const auto run = extend_filter_runs(ctx, 0.6, 0.5);
    return at_most(run.fix_gap, 0.0, "A and Fix nodes");
}

Outcome dynamics_base_map_lipschitz(Context& ctx) {
    const double delta = 0.3;
    const auto action = TorusAction::free_flow(GridSpec::torus(2, 4.0, 16));
    const auto f = base_map(action, random_lipschitz(action.space, 3.0, ctx.next()), delta);
    return at_most(orbit_lipschitz(f), delta + 1e-9, "free flow on the 2-torus");
}

Outcome dynamics_base_map_fix(Context& ctx) {
    const auto action = TorusAction::trivial(GridSpec::torus(2, 4.0, 16), 2);
    const auto iota = random_lipschitz(action.space, 3.0, ctx.next());
    const auto f = base_map(action, iota, 0.3);
    return at_most(sup_diff(f.generator.values, iota.values), 0.0, "B=0");
}

Outcome section_outcome(const LocalSection& sec) {
    int failed = 0;
    std::string witness;
    for (const auto& row : sec.audit) {
        if (!row.pass) {
            ++failed;
            witness += row.name + ": " + row.witness + "; ";
        }
    }
    if (witness.empty()) witness = "E has " + std::to_string(sec.E.size()) + " nodes; " + sec.audit.front().witness;
    return at_most(failed, 0, witness);
}

Outcome dynamics_section_circle(Context&) {
    const auto action = TorusAction::free_flow(GridSpec::torus(1, 4.0, 128));
    return section_outcome(build_local_section(action, 0, 1.0));
}

Outcome dynamics_section_rank_one(Context&) {
    const GridSpec X = GridSpec::torus(2, 4.0, 64);
    const auto action = TorusAction::make(X, 2, {1.0, 0.0, 0.0, 0.0});
    return section_outcome(build_local_section(action, X.flat_index(std::vector<int>{8, 8}), 1.0));
}

Outcome dynamics_section_monotone(Context&) {
    const auto action = TorusAction::free_flow(GridSpec::torus(1, 4.0, 128));
    const auto sec = build_local_section(action, 0, 1.0);
    for (const auto& row : sec.audit)
        if (row.name == "monotonicity") return {row.measured, row.tolerance, row.pass, "strictness margin; " + row.witness};
    return {0.0, 0.0, false, "no monotonicity row"};
}

struct Property {
    const char* id;
    const char* anchor;
    Outcome (*run)(Context&);
};

const std::vector<Property>& properties() {
    static const std::vector<Property> table = {
        {"dynamics.base_map_fix", "C is not empty", dynamics_base_map_fix},
        {"dynamics.base_map_lipschitz", "C is not empty", dynamics_base_map_lipschitz},
        {"dynamics.blend_lipschitz", "Lipschitz approximation", dynamics_blend_lipschitz},
        {"dynamics.cutoff", "filtering cutoff", dynamics_cutoff},
        {"dynamics.evaluation_consistency", "iota(x)(t) = iota0(T^t x)", dynamics_evaluation_consistency},
        {"dynamics.extend_filter_f", "extension and filter", dynamics_extend_filter_f},
        {"dynamics.extend_filter_fix", "extension and filter", dynamics_extend_filter_fix},
        {"dynamics.extend_filter_g", "extension and filter", dynamics_extend_filter_g},
        {"dynamics.section_circle", "local section", dynamics_section_circle},
        {"dynamics.section_monotone", "local section", dynamics_section_monotone},
        {"dynamics.section_rank_one", "local section", dynamics_section_rank_one},
        {"filter.approximation", "Lipschitz filter", filter_approximation},
        {"filter.average_invariance", "invariance of integral", filter_average_invariance},
        {"filter.constants", "Lipschitz filter", filter_constants},
        {"filter.discrete_identity", "discrete filter", filter_discrete_identity},
        {"filter.discrete_support", "discrete filter", filter_discrete_support},
        {"filter.equivariance", "Lipschitz filter", filter_equivariance},
        {"filter.idempotence", "Lipschitz filter", filter_idempotence},
        {"filter.lipschitz", "Lipschitz filter", filter_lipschitz},
        {"filter.support", "Lipschitz filter", filter_support},
        {"grid.density_radius", "discrete filter", grid_density_radius},
        {"grid.lfn_roundtrip", "file format", grid_lfn_roundtrip},
        {"grid.shift_compose", "shift sigma^u", grid_shift_compose},
        {"lipcore.feasibility_infimum", "convex combination", lipcore_feasibility_infimum},
        {"lipcore.local_modulus_bound", "local modulus L(phi, p, r)", lipcore_local_modulus_bound},
        {"lipcore.mcshane_lipschitz", "elementary Lipschitz extension", lipcore_mcshane_lipschitz},
        {"lipcore.mcshane_maximal", "elementary Lipschitz extension", lipcore_mcshane_maximal},
        {"perturb.break_anchor_modulus", "local perturbation map, no translation invariance",
         perturb_break_anchor_modulus},
        {"perturb.break_boundary", "local perturbation map, no translation invariance", perturb_break_boundary},
        {"perturb.break_origin_modulus", "local perturbation map, no translation invariance",
         perturb_break_origin_modulus},
        {"perturb.break_sup", "local perturbation map, no translation invariance", perturb_break_sup},
        {"perturb.decode_monotone", "multi bump function", perturb_decode_monotone},
        {"perturb.disjointness", "multi bump function", perturb_disjointness},
        {"perturb.encode_boundary", "multi bump function", perturb_encode_boundary},
        {"perturb.encode_origin_modulus", "multi bump function", perturb_encode_origin_modulus},
        {"perturb.encode_roundtrip", "multi bump function", perturb_encode_roundtrip},
        {"perturb.family_distinguished", "local perturbation map", perturb_family_distinguished},
        {"perturb.lipschitz", "multi bump function", perturb_lipschitz},
    };
    return table;
}

std::string reproducer(const VerifyOptions& o, const std::string& id) {
    return "lipfilter verify --seed " + std::to_string(o.seed) + " --eps " + format_double(o.epsilon) + " --c " +
           format_double(o.c) + " --cprime " + format_double(o.c_prime) + " --only " + id;
}

}  // namespace

std::vector<std::string> property_ids() {
    std::vector<std::string> ids;
    for (const auto& p : properties()) ids.emplace_back(p.id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<ReportRow> run_verify(const VerifyOptions& options) {
    const auto ids = property_ids();
    for (const auto& want : options.only)
        if (!std::binary_search(ids.begin(), ids.end(), want)) throw Error("verify: unknown property id '" + want + "'");

    std::vector<ReportRow> rows;
    for (const auto& p : properties()) {
        if (!options.only.empty() && std::find(options.only.begin(), options.only.end(), p.id) == options.only.end())
            continue;
        Context ctx{options, std::mt19937_64(property_seed(options.seed, p.id)), options.seed};
        ReportRow row;
        row.id = p.id;
        row.anchor = p.anchor;
        row.seed = options.seed;
        try {
            const Outcome out = p.run(ctx);
            row.measured = out.measured;
            row.tolerance = out.tolerance;
            row.pass = out.pass;
            row.witness = out.witness;
        } catch (const std::exception& e) {
            row.pass = false;
            row.measured = std::numeric_limits<double>::quiet_NaN();
            row.witness = std::string("error: ") + e.what();
        }
        if (!row.pass) row.witness += " | rerun: " + reproducer(options, row.id);
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) { return a.id < b.id; });
    return rows;
}

std::string report_to_csv(const std::vector<ReportRow>& rows) {
    auto field = [](std::string s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char ch : s) {
            if (ch == '"') q += '"';
            q += ch == '\n' ? ' ' : ch;
        }
        return q + "\"";
    };
    std::string out = "id,anchor,status,measured,tolerance,seed,witness\n";
    for (const auto& r : rows)
        out += field(r.id) + "," + field(r.anchor) + "," + (r.pass ? "pass" : "fail") + "," +
               format_double(r.measured) + "," + format_double(r.tolerance) + "," + std::to_string(r.seed) + "," +
               field(r.witness) + "\n";
    return out;
}

}  // namespace lipfilter
