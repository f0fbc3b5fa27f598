#include "lipfilter/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>

#include <Eigen/Dense>

#include "detail.hpp"
#include "lipfilter/error.hpp"
#include "lipfilter/lipcore.hpp"

namespace lipfilter {

namespace {

std::vector<int> unit_step(int n, int axis) {
    std::vector<int> e(static_cast<std::size_t>(n), 0);
    e[static_cast<std::size_t>(axis)] = 1;
    return e;
}

void require_integral(const TorusAction& action, const char* who) {
    if (!action.integral())
        throw Error(std::string(who) + ": grid orbits need an integer matrix B");
}

void require_node_set(const TorusAction& action, const NodeSet& set, const char* who) {
    if (set.size() != action.space.node_count())
        throw Error(std::string(who) + ": node set size does not match the action grid");
}

/// Smallest multiple of the torus period strictly above 1/c.
double orbit_period(const TorusAction& action, double c) {
    const double M = action.period();
    double k = std::floor(1.0 / (c * M)) + 1.0;
    return std::max(1.0, k) * M;
}

GridSpec t_grid(const TorusAction& action, double period) {
    const double ratio = period / action.period();
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0 - 1e-9)
        throw Error("orbit grid: period must be a positive multiple of the torus period");
    const int m = static_cast<int>(std::lround(static_cast<double>(action.space.points_per_axis()) * ratio));
    return GridSpec::torus(action.n, std::round(ratio) * action.period(), m);
}

bool is_constant(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

void require_generator(const TorusAction& action, const SampledFunction& g, const char* who) {
    if (!(g.grid == action.space)) throw Error(std::string(who) + ": generator grid does not match the action grid");
}

}  // namespace

// -- actions -------------------------------------------------------------------

TorusAction TorusAction::make(const GridSpec& space, int n, std::vector<double> B) {
    if (!space.is_torus()) throw Error("TorusAction: the phase space must be a torus grid");
    if (n < 1) throw Error("TorusAction: acting dimension must be positive");
    if (B.size() != static_cast<std::size_t>(space.dim()) * static_cast<std::size_t>(n))
        throw Error("TorusAction: B must have d x n entries");
    for (double b : B)
        if (!std::isfinite(b)) throw Error("TorusAction: B entries must be finite");
    TorusAction a;
    a.n = n;
    a.B = std::move(B);
    a.space = space;
    return a;
}

TorusAction TorusAction::free_flow(const GridSpec& space) {
    const int d = space.dim();
    std::vector<double> B(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) B[static_cast<std::size_t>(i) * d + i] = 1.0;
    return make(space, d, std::move(B));
}

TorusAction TorusAction::trivial(const GridSpec& space, int n) {
    return make(space, n, std::vector<double>(static_cast<std::size_t>(space.dim()) * n, 0.0));
}

bool TorusAction::integral() const {
    return std::all_of(B.begin(), B.end(), [](double b) { return b == std::round(b); });
}

bool TorusAction::is_zero() const {
    return std::all_of(B.begin(), B.end(), [](double b) { return b == 0.0; });
}

std::vector<double> act(const TorusAction& action, std::span<const double> x, std::span<const double> t) {
    const int d = action.d();
    if (x.size() != static_cast<std::size_t>(d) || t.size() != static_cast<std::size_t>(action.n))
        throw Error("act: dimension mismatch");
    const double M = action.period();
    std::vector<double> y(x.begin(), x.end());
    for (int i = 0; i < d; ++i) {
        double s = 0.0;
        for (int j = 0; j < action.n; ++j) s += action.b(i, j) * t[static_cast<std::size_t>(j)];
        double v = std::fmod(y[static_cast<std::size_t>(i)] + s, M);
        if (v < 0.0) v += M;
        if (v >= M) v -= M;
        y[static_cast<std::size_t>(i)] = v;
    }
    return y;
}

std::size_t act_node(const TorusAction& action, std::size_t node, std::span<const int> steps) {
    require_integral(action, "act_node");
    if (steps.size() != static_cast<std::size_t>(action.n)) throw Error("act_node: dimension mismatch");
    const int d = action.d();
    std::vector<int> shift(static_cast<std::size_t>(d), 0);
    for (int i = 0; i < d; ++i) {
        long s = 0;
        for (int j = 0; j < action.n; ++j) s += std::lround(action.b(i, j)) * steps[static_cast<std::size_t>(j)];
        shift[static_cast<std::size_t>(i)] = static_cast<int>(s % action.space.points_per_axis());
    }
    return action.space.translate(node, shift);
}

// -- stabilizer and frames -------------------------------------------------------

StabilizerSplit stabilizer_split(const TorusAction& action) {
    const int d = action.d();
    const int n = action.n;
    Eigen::MatrixXd B(d, n);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < n; ++j) B(i, j) = action.b(i, j);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const Eigen::MatrixXd& V = svd.matrixV();

    StabilizerSplit split;
    for (int j = 0; j < n; ++j) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = V(i, j);
        // First nonzero component positive.
        for (double& x : v)
            if (std::abs(x) > 1e-14) {
                if (x < 0.0)
                    for (double& y : v) y = -y;
                break;
            }
        for (double& x : v)
            if (x == 0.0) x = 0.0;
        const bool kernel = j >= sv.size() || sv(j) <= 1e-10;
        (kernel ? split.g : split.h).push_back(std::move(v));
    }
    return split;
}

std::vector<double> Frame::apply(std::span<const double> t) const {
    if (t.size() != columns.size()) throw Error("Frame: expected one coefficient per column");
    if (columns.empty()) return {};
    std::vector<double> out(columns.front().size(), 0.0);
    for (std::size_t i = 0; i < columns.size(); ++i)
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += t[i] * columns[i][k];
    return out;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Gram-Schmidt in order; *failed is the index of the first dependent vector, or in.size().
std::vector<std::vector<double>> orthonormalize(const std::vector<std::vector<double>>& in, double rel_tol,
                                                std::size_t* failed) {
    std::vector<std::vector<double>> out;
    for (std::size_t k = 0; k < in.size(); ++k) {
        std::vector<double> v = in[k];
        const double norm0 = std::sqrt(dot(v, v));
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& u : out) {
                const double p = dot(v, u);
                for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * u[i];
            }
        const double norm = std::sqrt(dot(v, v));
        if (!(norm0 > 0.0) || norm <= rel_tol * norm0 || norm < 1e-12) {
            *failed = k;
            return out;
        }
        for (double& x : v) x /= norm;
        out.push_back(std::move(v));
    }
    *failed = in.size();
    return out;
}

}  // namespace

Frame gram_schmidt_frame(const std::vector<std::vector<double>>& h_basis,
                         const std::vector<std::vector<double>>& reference) {
    if (reference.size() != h_basis.size())
        throw Error("gram_schmidt_frame: need one reference vector per dimension of h");
    if (h_basis.empty()) return {};
    const std::size_t n = h_basis.front().size();
    for (const auto& v : h_basis)
        if (v.size() != n) throw Error("gram_schmidt_frame: basis vectors differ in length");
    for (const auto& v : reference)
        if (v.size() != n) throw Error("gram_schmidt_frame: reference vectors must live in R^n");

    std::size_t failed = 0;
    const auto onb = orthonormalize(h_basis, 1e-8, &failed);
    if (failed != h_basis.size()) throw Error("gram_schmidt_frame: the basis of h is linearly dependent");

    std::vector<std::vector<double>> projected;
    for (const auto& e : reference) {
        std::vector<double> p(n, 0.0);
        for (const auto& u : onb) {
            const double s = dot(e, u);
            for (std::size_t i = 0; i < n; ++i) p[i] += s * u[i];
        }
        projected.push_back(std::move(p));
    }
    Frame frame;
    frame.columns = orthonormalize(projected, 1e-8, &failed);
    if (failed != projected.size())
        throw Error("gram_schmidt_frame: reference vector " + std::to_string(failed + 1) +
                    " projects into the span of the others; choose a different reference frame");
    return frame;
}

std::vector<std::vector<double>> standard_reference(int n, int m) {
    std::vector<std::vector<double>> out;
    for (int i = 0; i < m; ++i) {
        std::vector<double> e(static_cast<std::size_t>(n), 0.0);
        e[static_cast<std::size_t>(i)] = 1.0;
        out.push_back(std::move(e));
    }
    return out;
}

// -- equivariant maps ------------------------------------------------------------

double EquivariantMap::evaluate(std::size_t x, std::span<const int> steps) const {
    return generator[act_node(action, x, steps)];
}

SampledFunction EquivariantMap::orbit_function(std::size_t x, double period) const {
    require_integral(action, "orbit_function");
    const GridSpec tg = t_grid(action, period);
    std::vector<double> values(tg.node_count());
    for (std::size_t k = 0; k < tg.node_count(); ++k) {
        const auto steps = tg.multi_index(k);
        values[k] = evaluate(x, steps);
    }
    return SampledFunction(tg, std::move(values));
}

bool is_invariant(const TorusAction& action, const NodeSet& set) {
    require_integral(action, "is_invariant");
    require_node_set(action, set, "is_invariant");
    for (std::size_t x = 0; x < set.size(); ++x) {
        if (!set[x]) continue;
        for (int j = 0; j < action.n; ++j) {
            const auto e = unit_step(action.n, j);
            if (!set[act_node(action, x, e)]) return false;
        }
    }
    return true;
}

NodeSet fixed_nodes(const TorusAction& action) {
    return NodeSet(action.space.node_count(), action.is_zero() ? 1 : 0);
}

OrbitPlan make_orbit_plan(const TorusAction& action, double epsilon, double c, double c_prime) {
    require_integral(action, "make_orbit_plan");
    if (!(c > 0.0) || !(c < c_prime)) throw Error("make_orbit_plan: requires 0 < c < c'");
    OrbitPlan out;
    out.t_period = orbit_period(action, c);
    const GridSpec tg = t_grid(action, out.t_period);
    const auto stride = coarsest_admissible_stride(epsilon, c_prime, tg, out.t_period);
    if (!stride)
        throw Error("make_orbit_plan: no lattice on the orbit grid is dense enough for eps = " +
                    format_double(epsilon));
    out.plan = build_plan(epsilon, c, c_prime, tg, *stride, out.t_period);
    return out;
}

OrbitPlan make_coarse_orbit_plan(const TorusAction& action, double c, double c_prime) {
    require_integral(action, "make_coarse_orbit_plan");
    if (!(c > 0.0) || !(c < c_prime)) throw Error("make_coarse_orbit_plan: requires 0 < c < c'");
    OrbitPlan out;
    out.t_period = orbit_period(action, c);
    const GridSpec tg = t_grid(action, out.t_period);
    const int stride = tg.points_per_axis();
    const auto lat = LatticeSubset::strided(tg, out.t_period, stride);
    const double epsilon = 2.0 * c_prime * lat.density_radius * (1.0 + 1e-12);
    out.plan = build_plan(epsilon, c, c_prime, tg, stride, out.t_period);
    return out;
}

EquivariantMap filter_map(const EquivariantMap& f, const OrbitPlan& plan) {
    const TorusAction& action = f.action;
    require_integral(action, "filter_map");
    require_generator(action, f.generator, "filter_map");
    const GridSpec& tg = plan.plan.torus_grid;
    const std::size_t N = action.space.node_count();

    std::vector<std::vector<int>> steps(tg.node_count());
    for (std::size_t k = 0; k < tg.node_count(); ++k) steps[k] = tg.multi_index(k);

    // Orbit representatives and the node reached from each by every t-grid step.
    std::vector<std::size_t> reps;
    std::vector<char> seen(N, 0);
    for (std::size_t x = 0; x < N; ++x) {
        if (seen[x]) continue;
        reps.push_back(x);
        for (const auto& s : steps) seen[act_node(action, x, s)] = 1;
    }

    std::vector<double> out(N, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::vector<std::pair<std::size_t, double>>> results(reps.size());
    detail::parallel_for(reps.size(), [&](std::size_t r) {
        const std::size_t x = reps[r];
        std::vector<std::size_t> target(tg.node_count());
        std::vector<double> values(tg.node_count());
        for (std::size_t k = 0; k < tg.node_count(); ++k) {
            target[k] = act_node(action, x, steps[k]);
            values[k] = f.generator[target[k]];
        }
        std::vector<double> filtered;
        if (is_constant(values)) {
            filtered = values;
        } else {
            filtered = apply_filter(SampledFunction(tg, values), plan.plan).values;
        }
        auto& res = results[r];
        res.reserve(tg.node_count());
        for (std::size_t k = 0; k < tg.node_count(); ++k) res.emplace_back(target[k], filtered[k]);
    });
    for (const auto& res : results)
        for (const auto& [node, v] : res) {
            if (std::isnan(out[node])) {
                out[node] = v;
            } else if (out[node] != v) {
                throw Error("filter_map: orbit values disagree at node " + std::to_string(node));
            }
        }
    return EquivariantMap{action, SampledFunction(action.space, std::move(out))};
}

Cutoff equivariant_cutoff(const TorusAction& action, const NodeSet& A, const NodeSet& V, double delta) {
    require_integral(action, "equivariant_cutoff");
    require_node_set(action, A, "equivariant_cutoff");
    require_node_set(action, V, "equivariant_cutoff");
    if (!(delta > 0.0)) throw Error("equivariant_cutoff: delta must be positive");
    const std::size_t N = action.space.node_count();
    for (std::size_t x = 0; x < N; ++x)
        if (A[x] && !V[x]) throw Error("equivariant_cutoff: A is not contained in V (node " + std::to_string(x) + ")");
    if (!is_invariant(action, A)) throw Error("equivariant_cutoff: A is not invariant");

    Cutoff out;
    const OrbitPlan plan = make_coarse_orbit_plan(action, delta / 2.0, delta);
    out.support_radius = plan.plan.params.support_radius;

    // Grid steps within the R-ball; with integer B only their residues modulo m matter.
    const double h = action.space.spacing();
    const int reach = static_cast<int>(std::floor(out.support_radius / h + 1e-9));
    const int m = action.space.points_per_axis();
    std::map<std::vector<int>, char> residues;
    std::vector<int> k(static_cast<std::size_t>(action.n), -reach);
    while (true) {
        long sq = 0;
        for (int v : k) sq += static_cast<long>(v) * v;
        if (static_cast<double>(sq) * h * h <= out.support_radius * out.support_radius * (1.0 + 1e-12)) {
            std::vector<int> shift(static_cast<std::size_t>(action.d()));
            for (int i = 0; i < action.d(); ++i) {
                long s = 0;
                for (int j = 0; j < action.n; ++j) s += std::lround(action.b(i, j)) * k[static_cast<std::size_t>(j)];
                shift[static_cast<std::size_t>(i)] = static_cast<int>(((s % m) + m) % m);
            }
            residues.emplace(std::move(shift), 1);
        }
        int axis = action.n - 1;
        while (axis >= 0 && k[static_cast<std::size_t>(axis)] == reach) {
            k[static_cast<std::size_t>(axis)] = -reach;
            --axis;
        }
        if (axis < 0) break;
        ++k[static_cast<std::size_t>(axis)];
    }

    out.W.assign(N, 0);
    for (std::size_t x = 0; x < N; ++x) {
        bool inside = true;
        for (const auto& [shift, unused] : residues) {
            (void)unused;
            if (!V[action.space.translate(x, shift)]) {
                inside = false;
                break;
            }
        }
        out.W[x] = inside ? 1 : 0;
    }
    for (std::size_t x = 0; x < N; ++x)
        if (A[x] && !out.W[x])
            throw Error("equivariant_cutoff: V leaves no room for the R-ball flow from A (R = " +
                        format_double(out.support_radius) + "); node " + std::to_string(x) +
                        " of A flows out of V within that radius");

    const bool all_w = std::all_of(out.W.begin(), out.W.end(), [](char c) { return c != 0; });
    const bool no_a = std::none_of(A.begin(), A.end(), [](char c) { return c != 0; });
    std::vector<double> alpha(N, 0.0);
    if (all_w) {
        std::fill(alpha.begin(), alpha.end(), 1.0);
    } else if (!no_a) {
        for (std::size_t x = 0; x < N; ++x) {
            double da = std::numeric_limits<double>::infinity();
            double dw = std::numeric_limits<double>::infinity();
            for (std::size_t y = 0; y < N; ++y) {
                const double dist = action.space.distance(x, y);
                if (A[y]) da = std::min(da, dist);
                if (!out.W[y]) dw = std::min(dw, dist);
            }
            alpha[x] = A[x] ? 1.0 : dw / (da + dw);
        }
    }
    const EquivariantMap a{action, SampledFunction(action.space, std::move(alpha))};
    out.beta = filter_map(a, plan);
    return out;
}

EquivariantMap equivariant_blend(const EquivariantMap& f, const EquivariantMap& g, const Cutoff& beta,
                                 const NodeSet& V, double epsilon) {
    const TorusAction& action = f.action;
    require_generator(action, f.generator, "equivariant_blend");
    require_generator(action, g.generator, "equivariant_blend");
    require_generator(action, beta.beta.generator, "equivariant_blend");
    require_node_set(action, V, "equivariant_blend");
    const std::size_t N = action.space.node_count();
    for (std::size_t x = 0; x < N; ++x) {
        if (!V[x]) continue;
        const double gap = std::abs(f.generator[x] - g.generator[x]);
        if (!(gap < epsilon))
            throw Error("equivariant_blend: |f - g| = " + format_double(gap) + " >= eps on V at node " +
                        std::to_string(x));
    }
    std::vector<double> h(N);
    for (std::size_t x = 0; x < N; ++x) {
        const double b = beta.beta.generator[x];
        h[x] = (1.0 - b) * f.generator[x] + b * g.generator[x];
    }
    return EquivariantMap{action, SampledFunction(action.space, std::move(h))};
}

EquivariantMap equivariant_extend(const TorusAction& action, const NodeSet& A, const SampledFunction& g, double c,
                                  double c_prime, double epsilon) {
    require_integral(action, "equivariant_extend");
    require_node_set(action, A, "equivariant_extend");
    require_generator(action, g, "equivariant_extend");
    if (!is_invariant(action, A)) throw Error("equivariant_extend: A is not invariant");
    const OrbitPlan plan = make_orbit_plan(action, epsilon, c, c_prime);

    NodeData data;
    for (std::size_t x = 0; x < A.size(); ++x)
        if (A[x]) {
            if (!(g[x] >= 0.0 && g[x] <= 1.0)) throw Error("equivariant_extend: g must take values in [0,1] on A");
            data.nodes.push_back(x);
            data.values.push_back(g[x]);
        }
    if (data.nodes.empty()) {
        std::clog << "lipfilter: equivariant_extend with empty A; returning the filtered zero map\n";
        const EquivariantMap zero{action, SampledFunction(action.space, std::vector<double>(A.size(), 0.0))};
        return filter_map(zero, plan);
    }
    for (std::size_t i = 0; i < data.nodes.size(); ++i)
        for (std::size_t j = i + 1; j < data.nodes.size(); ++j) {
            const double dist = action.space.distance(data.nodes[i], data.nodes[j]);
            if (std::abs(data.values[i] - data.values[j]) > c * dist + 1e-9)
                throw Error("equivariant_extend: g is not c-Lipschitz on A");
        }
    // Any continuous extension will do; the filter regularizes it.
    const SampledFunction extended = mcshane_extend(action.space, data, 10.0 * c_prime);
    return filter_map(EquivariantMap{action, extended}, plan);
}

ExtendAndFilter extend_and_filter(const TorusAction& action, const NodeSet& A, const EquivariantMap& f,
                                  const SampledFunction& g, double c, double c_prime, double epsilon1,
                                  double epsilon2) {
    require_generator(action, f.generator, "extend_and_filter");
    require_generator(action, g, "extend_and_filter");
    require_node_set(action, A, "extend_and_filter");
    if (!(c > 0.0) || !(c < c_prime)) throw Error("extend_and_filter: requires 0 < c < c'");
    if (!(epsilon1 > 0.0) || !(epsilon2 > 0.0)) throw Error("extend_and_filter: tolerances must be positive");
    if (!is_lipschitz(f.generator, c, 1e-9)) throw Error("extend_and_filter: f is not c-Lipschitz");

    double sup = 0.0;
    for (std::size_t x = 0; x < A.size(); ++x)
        if (A[x]) sup = std::max(sup, std::abs(f.generator[x] - g[x]));
    if (!(sup < epsilon1))
        throw Error("extend_and_filter: sup over A of |f - g| is " + format_double(sup) + ", not below eps1 = " +
                    format_double(epsilon1));

    ExtendAndFilter out;
    out.epsilon = 0.99 * std::min(epsilon2, epsilon1 - sup);
    out.c1 = 0.5 * (c + c_prime);
    out.delta = 0.9 * (c_prime - out.c1) / 2.0;
    out.g_extended = equivariant_extend(action, A, g, c, out.c1, out.epsilon);

    const std::size_t N = action.space.node_count();
    out.V.assign(N, 0);
    for (std::size_t x = 0; x < N; ++x)
        out.V[x] = std::abs(f.generator[x] - out.g_extended.generator[x]) < epsilon1 ? 1 : 0;
    out.cutoff = equivariant_cutoff(action, A, out.V, out.delta);
    out.h = equivariant_blend(f, out.g_extended, out.cutoff, out.V, epsilon1);
    return out;
}

EquivariantMap base_map(const TorusAction& action, const SampledFunction& iota0, double delta) {
    require_generator(action, iota0, "base_map");
    if (!(delta > 0.0)) throw Error("base_map: delta must be positive");
    if (!all_in_unit_interval(iota0.values)) throw Error("base_map: iota0 must take values in [0,1]");
    // Fix is all of X or empty for a linear action; either way iota0 is the extension.
    const OrbitPlan plan = make_coarse_orbit_plan(action, delta / 2.0, delta);
    return filter_map(EquivariantMap{action, iota0}, plan);
}

double orbit_lipschitz(const EquivariantMap& f) {
    const TorusAction& action = f.action;
    require_integral(action, "orbit_lipschitz");
    const std::size_t N = action.space.node_count();
    const GridSpec tg = t_grid(action, action.period());
    std::vector<std::size_t> reps;
    std::vector<char> seen(N, 0);
    for (std::size_t x = 0; x < N; ++x) {
        if (seen[x]) continue;
        reps.push_back(x);
        for (std::size_t k = 0; k < tg.node_count(); ++k) seen[act_node(action, x, tg.multi_index(k))] = 1;
    }
    std::vector<double> worst(reps.size(), 0.0);
    detail::parallel_for(reps.size(), [&](std::size_t r) {
        const auto phi = f.orbit_function(reps[r], action.period());
        worst[r] = lipschitz_constant(phi, LipschitzMethod::Exhaustive, std::numeric_limits<std::size_t>::max())
                       .constant;
    });
    return worst.empty() ? 0.0 : *std::max_element(worst.begin(), worst.end());
}


// -- local sections --------------------------------------------------------------

namespace {

double ramp(double s, double lo, double hi) {
    if (s <= lo) return 1.0;
    if (s >= hi) return 0.0;
    return (hi - s) / (hi - lo);
}

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

/// Minimal-image displacement y - x on the torus.
std::vector<double> displacement(double M, std::span<const double> x, std::span<const double> y) {
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double v = std::fmod(y[i] - x[i], M);
        if (v < -M / 2) v += M;
        if (v >= M / 2) v -= M;
        z[i] = v;
    }
    return z;
}

double torus_distance(double M, std::span<const double> x, std::span<const double> y) {
    return norm(displacement(M, x, y));
}

std::string point_text(std::span<const double> v) {
    std::string s = "(";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ' ';
        s += format_double(v[i]);
    }
    return s + ")";
}

int default_quadrature(std::size_t m) {
    if (m == 1) return 2048;
    if (m == 2) return 256;
    return 64;
}

/// Sample directions on the unit sphere of R^m.
std::vector<std::vector<double>> sphere_directions(std::size_t m) {
    std::vector<std::vector<double>> out;
    if (m == 1) return {{-1.0}, {1.0}};
    if (m == 2) {
        for (int k = 0; k < 720; ++k) {
            const double a = 2.0 * std::numbers::pi * k / 720.0;
            out.push_back({std::cos(a), std::sin(a)});
        }
        return out;
    }
    // Normalized points of a grid on the cube surface.
    const int g = 12;
    std::vector<int> idx(m, -g);
    while (true) {
        const bool on_surface = std::any_of(idx.begin(), idx.end(), [&](int v) { return std::abs(v) == g; });
        if (on_surface) {
            std::vector<double> v(idx.begin(), idx.end());
            const double nv = norm(v);
            for (double& x : v) x /= nv;
            out.push_back(std::move(v));
        }
        std::size_t axis = m;
        while (axis > 0 && idx[axis - 1] == g) idx[--axis] = -g;
        if (axis == 0) break;
        ++idx[axis - 1];
    }
    return out;
}

/// Points of the cubic grid with `per_axis` points on [-radius, radius]^m that lie in the closed ball.
std::vector<std::vector<double>> ball_grid(std::size_t m, double radius, int per_axis) {
    std::vector<std::vector<double>> out;
    std::vector<int> idx(m, 0);
    const double step = per_axis > 1 ? 2.0 * radius / (per_axis - 1) : 0.0;
    while (true) {
        std::vector<double> v(m);
        for (std::size_t i = 0; i < m; ++i) v[i] = per_axis > 1 ? -radius + step * idx[i] : 0.0;
        if (norm(v) <= radius * (1.0 + 1e-12)) out.push_back(std::move(v));
        std::size_t axis = m;
        while (axis > 0 && idx[axis - 1] == per_axis - 1) idx[--axis] = 0;
        if (axis == 0) break;
        ++idx[axis - 1];
    }
    return out;
}

struct SectionContext {
    const TorusAction& action;
    const PointField& h;
    const Frame& frame;
    double r;
    int q;

    std::vector<double> flow(std::span<const double> x, std::span<const double> u) const {
        const auto t = frame.apply(u);
        return act(action, x, t);
    }
    std::vector<double> f(std::span<const double> x) const { return section_functional(action, h, frame, x, r, q); }
    double fi(std::span<const double> x, std::size_t i) const { return f(x)[i]; }
};

}  // namespace

SectionGeometry default_section_geometry(const TorusAction& action, double r, int quadrature) {
    const std::size_t m = stabilizer_split(action).h.size();
    if (m == 0) throw Error("local section: the action has no transverse directions (k = n)");
    if (!(r > 0.0) || !(r < action.period() / 2.0)) throw Error("local section: requires 0 < r < M/2");
    SectionGeometry g;
    g.r = r;
    g.quadrature = quadrature > 0 ? quadrature : default_quadrature(m);
    if (g.quadrature % 2 != 0 || g.quadrature < 18)
        throw Error("local section: quadrature needs an even number of at least 18 cells per axis");
    g.a = r / 5.0;
    g.delta = 0.09 * r;
    g.v_radius = r / 4.0;
    g.a_radius = 0.07 * r;
    g.tol = 4.0 * (2.0 * r / g.quadrature) * std::pow(r, static_cast<double>(m) - 1.0);
    return g;
}

PointField section_bump(const TorusAction& action, std::span<const double> p, const Frame& frame, double r) {
    const int d = action.d();
    const std::size_t m = frame.rank();
    if (m == 0) throw Error("section_bump: empty frame");
    // G = B rho maps flow coordinates to displacements; P is its pseudo-inverse.
    Eigen::MatrixXd G(d, static_cast<Eigen::Index>(m));
    for (int i = 0; i < d; ++i)
        for (std::size_t c = 0; c < m; ++c) {
            double s = 0.0;
            for (int j = 0; j < action.n; ++j) s += action.b(i, j) * frame.columns[c][static_cast<std::size_t>(j)];
            G(i, static_cast<Eigen::Index>(c)) = s;
        }
    const Eigen::MatrixXd Pinv = G.completeOrthogonalDecomposition().pseudoInverse();
    std::vector<double> g(G.data(), G.data() + G.size());          // column-major d x m
    std::vector<double> pinv(Pinv.data(), Pinv.data() + Pinv.size());  // column-major m x d
    const std::vector<double> centre(p.begin(), p.end());
    const double M = action.period();
    return [g, pinv, centre, M, r, d, m](std::span<const double> x) {
        double z[8], u[8];
        if (d > 8 || m > 8) throw Error("section_bump: dimension above 8");
        for (int i = 0; i < d; ++i) {
            double v = std::fmod(x[static_cast<std::size_t>(i)] - centre[static_cast<std::size_t>(i)], M);
            if (v < -M / 2) v += M;
            if (v >= M / 2) v -= M;
            z[i] = v;
        }
        double along = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            double s = 0.0;
            for (int i = 0; i < d; ++i) s += pinv[c + m * static_cast<std::size_t>(i)] * z[i];
            u[c] = s;
            along += s * s;
        }
        double across = 0.0;
        for (int i = 0; i < d; ++i) {
            double s = z[i];
            for (std::size_t c = 0; c < m; ++c) s -= g[static_cast<std::size_t>(i) + static_cast<std::size_t>(d) * c] * u[c];
            across += s * s;
        }
        return ramp(std::sqrt(along), 0.45 * r, 0.5 * r) * ramp(std::sqrt(across), 0.5 * r, 0.6 * r);
    };
}

std::vector<double> section_functional(const TorusAction& action, const PointField& h, const Frame& frame,
                                       std::span<const double> x, double r, int quadrature) {
    const std::size_t m = frame.rank();
    if (m == 0) throw Error("section_functional: the action has no transverse directions (k = n)");
    if (quadrature % 2 != 0 || quadrature < 18)
        throw Error("section_functional: quadrature needs an even number of at least 18 cells per axis");
    const double step = 2.0 * r / quadrature;
    const double cell = std::pow(step, static_cast<double>(m));
    std::vector<double> f(m, 0.0);
    std::vector<int> idx(m, 0);
    std::vector<double> t(m);
    while (true) {
        double sq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            t[i] = -r + (idx[i] + 0.5) * step;
            sq += t[i] * t[i];
        }
        if (sq <= r * r) {
            const double v = h(act(action, x, frame.apply(t)));
            if (v != 0.0)
                for (std::size_t i = 0; i < m; ++i)
                    if (t[i] < 0.0) f[i] += v * cell;
        }
        std::size_t axis = m;
        while (axis > 0 && idx[axis - 1] == quadrature - 1) idx[--axis] = 0;
        if (axis == 0) break;
        ++idx[axis - 1];
    }
    return f;
}

bool LocalSection::passed() const {
    return !audit.empty() && std::all_of(audit.begin(), audit.end(), [](const AuditRow& r) { return r.pass; });
}

LocalSection build_local_section(const TorusAction& action, std::size_t p, double r, int quadrature,
                                 std::optional<PointField> bump) {
    if (p >= action.space.node_count()) throw Error("build_local_section: p is not a node of the action grid");
    const auto split = stabilizer_split(action);
    const std::size_t m = split.h.size();
    LocalSection out;
    out.geometry = default_section_geometry(action, r, quadrature);
    const SectionGeometry& geo = out.geometry;
    try {
        out.frame = gram_schmidt_frame(split.h, standard_reference(action.n, static_cast<int>(m)));
    } catch (const Error&) {
        out.frame = gram_schmidt_frame(split.h, split.h);
    }
    const auto pc = action.space.coords(p);
    const PointField h = bump ? *bump : section_bump(action, pc, out.frame, r);
    const SectionContext ctx{action, h, out.frame, r, geo.quadrature};
    const double M = action.period();
    const int d = action.d();

    // Support of h misses the orbit sphere of radius r about p.
    const auto dirs = sphere_directions(m);
    for (const auto& dir : dirs) {
        std::vector<double> u(dir);
        for (double& x : u) x *= r;
        const auto y = ctx.flow(pc, u);
        if (h(y) != 0.0)
            throw Error("build_local_section: the bump does not vanish on the orbit sphere of radius r about p (at " +
                        point_text(y) + ")");
    }

    // Margins (1) and (2) on sampled points of V.
    std::vector<std::vector<double>> v_samples{pc};
    for (int i = 0; i < d; ++i)
        for (double sgn : {-1.0, 1.0}) {
            std::vector<double> z(static_cast<std::size_t>(d), 0.0);
            z[static_cast<std::size_t>(i)] = sgn * geo.v_radius * 0.999;
            v_samples.push_back(act(TorusAction::free_flow(action.space), pc, z));
        }
    const auto a_ball = ball_grid(m, geo.a, 9);
    for (const auto& x : v_samples) {
        for (const auto& s : a_ball)
            if (h(ctx.flow(x, s)) != 1.0)
                throw Error("build_local_section: no admissible (a, V) margins; h < 1 on the a-flow of " +
                            point_text(x));
        for (double len : {r - geo.a, r, r + geo.a})
            for (const auto& dir : dirs) {
                std::vector<double> t(dir);
                for (double& v : t) v *= len;
                if (h(ctx.flow(x, t)) != 0.0)
                    throw Error("build_local_section: no admissible (a, V) margins; h > 0 on the shell flow of " +
                                point_text(x));
            }
    }

    // E inside the A window.
    const auto fp = ctx.f(pc);
    std::vector<std::size_t> window;
    for (std::size_t x = 0; x < action.space.node_count(); ++x)
        if (action.space.distance(p, x) <= geo.a_radius) window.push_back(x);
    std::vector<std::vector<double>> fw(window.size());
    detail::parallel_for(window.size(), [&](std::size_t k) { fw[k] = ctx.f(action.space.coords(window[k])); });
    for (std::size_t k = 0; k < window.size(); ++k) {
        double dev = 0.0;
        for (std::size_t i = 0; i < m; ++i) dev = std::max(dev, std::abs(fw[k][i] - fp[i]));
        if (dev <= geo.tol) out.E.push_back(window[k]);
    }

    // (i) injectivity over B_delta(h|_E).
    {
        int per_axis = 3;
        std::vector<std::vector<double>> us;
        while (true) {
            us = ball_grid(m, geo.delta, per_axis);
            if (us.size() * out.E.size() >= 1000) break;
            per_axis += 2;
        }
        struct Sample {
            std::size_t x;
            std::size_t u;
            std::vector<double> image;
        };
        std::vector<Sample> samples;
        for (std::size_t x : out.E)
            for (std::size_t k = 0; k < us.size(); ++k)
                samples.push_back({x, k, ctx.flow(action.space.coords(x), us[k])});
        std::vector<double> best(samples.size(), std::numeric_limits<double>::infinity());
        std::vector<std::size_t> partner(samples.size(), 0);
        detail::parallel_for(samples.size(), [&](std::size_t i) {
            for (std::size_t j = i + 1; j < samples.size(); ++j) {
                const double dist = torus_distance(M, samples[i].image, samples[j].image);
                if (dist < best[i]) {
                    best[i] = dist;
                    partner[i] = j;
                }
            }
        });
        const auto it = std::min_element(best.begin(), best.end());
        AuditRow row{"injectivity", false, samples.size() > 1 ? *it : 0.0, 1e-9, ""};
        row.pass = samples.size() >= 1000 && row.measured > row.tolerance;
        const std::size_t i = static_cast<std::size_t>(it - best.begin());
        row.witness = "samples=" + std::to_string(samples.size());
        if (samples.size() > 1) {
            const auto& a = samples[i];
            const auto& b = samples[partner[i]];
            row.witness += " closest x=" + point_text(action.space.coords(a.x)) + " t=" + point_text(us[a.u]) +
                           " x'=" + point_text(action.space.coords(b.x)) + " t'=" + point_text(us[b.u]);
        }
        out.audit.push_back(std::move(row));
    }

    // (ii) coverage of A' = ball of radius delta'/2 about p.
    {
        const double dprime = 0.9 * geo.delta / std::sqrt(static_cast<double>(m));
        const auto offsets = ball_grid(static_cast<std::size_t>(d), 0.5 * dprime, 5);
        const TorusAction shift = TorusAction::free_flow(action.space);
        std::vector<double> worst(offsets.size(), 0.0);
        std::vector<std::string> why(offsets.size());
        detail::parallel_for(offsets.size(), [&](std::size_t k) {
            const auto y = act(shift, pc, offsets[k]);
            std::vector<double> u(m, 0.0);
            for (std::size_t i = 0; i < m; ++i) {
                auto g = [&](double s) {
                    std::vector<double> e(m, 0.0);
                    e[i] = s;
                    return ctx.fi(ctx.flow(y, e), i) - fp[i];
                };
                double lo = -dprime;
                double hi = dprime;
                if (!(g(lo) < 0.0 && g(hi) > 0.0)) {
                    worst[k] = std::numeric_limits<double>::infinity();
                    why[k] = "no sign change along axis " + std::to_string(i + 1) + " from " + point_text(y);
                    return;
                }
                for (int it = 0; it < 40; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    (g(mid) < 0.0 ? lo : hi) = mid;
                }
                u[i] = 0.5 * (lo + hi);
            }
            const auto x = ctx.flow(y, u);
            const auto fx = ctx.f(x);
            double dev = 0.0;
            for (std::size_t i = 0; i < m; ++i) dev = std::max(dev, std::abs(fx[i] - fp[i]));
            worst[k] = dev;
            if (!(norm(u) < geo.delta) || torus_distance(M, x, pc) > geo.a_radius) {
                worst[k] = std::numeric_limits<double>::infinity();
                why[k] = "preimage outside the flow box for " + point_text(y);
            } else {
                why[k] = "y=" + point_text(y) + " x=" + point_text(x) + " u=" + point_text(u);
            }
        });
        const auto it = std::max_element(worst.begin(), worst.end());
        AuditRow row{"coverage", false, *it, geo.tol, why[static_cast<std::size_t>(it - worst.begin())]};
        row.pass = row.measured <= row.tolerance;
        out.audit.push_back(std::move(row));
    }

    // Strict monotonicity of f_i along u_i at -a/2, 0, a/2.
    {
        double margin = std::numeric_limits<double>::infinity();
        std::string witness;
        for (std::size_t x : out.E) {
            const auto xc = action.space.coords(x);
            for (std::size_t i = 0; i < m; ++i) {
                double vals[3];
                for (int k = 0; k < 3; ++k) {
                    std::vector<double> u(m, 0.0);
                    u[i] = (k - 1) * geo.a / 2.0;
                    vals[k] = ctx.fi(ctx.flow(xc, u), i);
                }
                const double gap = std::min(vals[1] - vals[0], vals[2] - vals[1]);
                if (gap < margin) {
                    margin = gap;
                    witness = "x=" + point_text(xc) + " axis=" + std::to_string(i + 1);
                }
            }
        }
        AuditRow row{"monotonicity", false, out.E.empty() ? 0.0 : margin, geo.tol, witness};
        row.pass = !out.E.empty() && row.measured > row.tolerance;
        out.audit.push_back(std::move(row));
    }

    // f_i depends only on u_i.
    {
        AuditRow row{"independence", true, 0.0, geo.tol, "single transverse direction"};
        if (m >= 2) {
            const auto grid = ball_grid(m, geo.a, 5);
            for (std::size_t x : out.E) {
                const auto xc = action.space.coords(x);
                for (const auto& u : grid) {
                    const auto fu = ctx.f(ctx.flow(xc, u));
                    for (std::size_t i = 0; i < m; ++i) {
                        std::vector<double> ui(m, 0.0);
                        ui[i] = u[i];
                        const double dev = std::abs(fu[i] - ctx.fi(ctx.flow(xc, ui), i));
                        if (dev > row.measured || row.witness == "single transverse direction") {
                            row.measured = std::max(row.measured, dev);
                            row.witness = "x=" + point_text(xc) + " u=" + point_text(u) + " axis=" +
                                          std::to_string(i + 1);
                        }
                    }
                }
            }
            row.pass = row.measured <= row.tolerance;
        }
        out.audit.push_back(std::move(row));
    }
    return out;
}

std::string audit_to_csv(const std::vector<AuditRow>& rows) {
    std::string s = "name,status,measured,tolerance,witness\n";
    for (const auto& r : rows) {
        std::string w = r.witness;
        std::replace(w.begin(), w.end(), ',', ';');
        s += r.name + "," + (r.pass ? "pass" : "fail") + "," + format_double(r.measured) + "," +
             format_double(r.tolerance) + "," + w + "\n";
    }
    return s;
}

}  // namespace lipfilter
