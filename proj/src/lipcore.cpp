#include "lipfilter/lipcore.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "detail.hpp"
#include "lipfilter/error.hpp"

namespace lipfilter {

LipschitzReport lipschitz_constant(const SampledFunction& phi, LipschitzMethod method, std::size_t cap) {
    const GridSpec& g = phi.grid;
    const std::size_t count = g.node_count();
    LipschitzReport rep;
    rep.method = method;
    if (method == LipschitzMethod::Exhaustive) {
        if (count > cap)
            throw Error("lipschitz_constant: " + std::to_string(count) + " nodes exceed the exhaustive cap of " +
                        std::to_string(cap));
        detail::IndexTable table(g);
        for (std::size_t a = 0; a < count; ++a) {
            for (std::size_t b = a + 1; b < count; ++b) {
                const double q = std::abs(phi.values[a] - phi.values[b]) / table.distance(a, b);
                if (q > rep.constant) {
                    rep.constant = q;
                    rep.witness_a = a;
                    rep.witness_b = b;
                }
            }
        }
        return rep;
    }

    std::vector<int> step(static_cast<std::size_t>(g.dim()), 0);
    double best = 0.0;
    for (std::size_t t = 0; t < count; ++t) {
        for (int a = 0; a < g.dim(); ++a) {
            if (g.is_box() && g.axis_index(t, a) == g.points_per_axis() - 1) continue;
            step[a] = 1;
            const std::size_t u = g.translate(t, step);
            step[a] = 0;
            const double q = std::abs(phi.values[t] - phi.values[u]) / g.spacing();
            if (q > best) {
                best = q;
                rep.witness_a = std::min(t, u);
                rep.witness_b = std::max(t, u);
            }
        }
    }
    rep.constant = best * std::sqrt(static_cast<double>(g.dim()));
    return rep;
}

bool is_lipschitz(const SampledFunction& phi, double c, double tol) {
    const GridSpec& g = phi.grid;
    const std::size_t count = g.node_count();
    detail::IndexTable table(g);
    const double c2h2 = c * c * g.spacing() * g.spacing();
    for (std::size_t a = 0; a < count; ++a) {
        const double va = phi.values[a];
        for (std::size_t b = a + 1; b < count; ++b) {
            const double excess = std::abs(va - phi.values[b]) - tol;
            if (excess <= 0.0) continue;
            if (excess * excess > c2h2 * static_cast<double>(table.sq_steps(a, b))) return false;
        }
    }
    return true;
}

double local_modulus(const SampledFunction& phi, std::size_t p, double r) {
    const GridSpec& g = phi.grid;
    if (p >= g.node_count()) throw Error("local_modulus: p is not a node");
    if (!(r > 0.0)) throw Error("local_modulus: radius must be positive");
    if (g.is_box()) {
        for (int a = 0; a < g.dim(); ++a) {
            if (std::abs(g.coord(p, a)) + r > g.size() * (1.0 + 1e-12))
                throw Error("local_modulus: ball leaves the box domain");
        }
    } else if (!(r < g.size() / 2.0)) {
        throw Error("local_modulus: radius must be below half the torus period");
    }
    const int reach = static_cast<int>(std::floor(r / g.spacing() + 1e-9));
    const auto centre = g.multi_index(p);
    const double vp = phi.values[p];
    const double rr = r * (1.0 + 1e-12);
    std::vector<int> off(static_cast<std::size_t>(g.dim()), -reach);
    std::vector<int> idx(centre.size());
    double best = 0.0;
    while (true) {
        long sq = 0;
        for (int a = 0; a < g.dim(); ++a) sq += static_cast<long>(off[a]) * off[a];
        if (sq > 0) {
            const double d = g.spacing() * std::sqrt(static_cast<double>(sq));
            if (d <= rr) {
                for (int a = 0; a < g.dim(); ++a) idx[a] = centre[a] + off[a];
                const double q = std::abs(phi.values[g.flat_index(idx)] - vp) / d;
                best = std::max(best, q);
            }
        }
        int a = g.dim() - 1;
        while (a >= 0 && off[a] == reach) off[a--] = -reach;
        if (a < 0) break;
        ++off[a];
    }
    return best;
}

SampledFunction mcshane_extend(const GridSpec& grid, const NodeData& data, double c) {
    if (data.nodes.empty()) throw Error("mcshane_extend: empty data set");
    if (data.nodes.size() != data.values.size()) throw Error("mcshane_extend: nodes/values size mismatch");
    if (!(c >= 0.0)) throw Error("mcshane_extend: constant must be non-negative");
    for (std::size_t k = 0; k < data.nodes.size(); ++k) {
        if (data.nodes[k] >= grid.node_count()) throw Error("mcshane_extend: data node outside the grid");
        const double v = data.values[k];
        if (!(v >= 0.0 && v <= 1.0)) throw Error("mcshane_extend: data values must lie in [0,1]");
    }
    detail::IndexTable table(grid);
    for (std::size_t i = 0; i < data.nodes.size(); ++i) {
        for (std::size_t j = i + 1; j < data.nodes.size(); ++j) {
            const double d = table.distance(data.nodes[i], data.nodes[j]);
            if (std::abs(data.values[i] - data.values[j]) > c * d + 1e-12)
                throw Error("mcshane_extend: data is not " + format_double(c) + "-Lipschitz on S (nodes " +
                            std::to_string(data.nodes[i]) + ", " + std::to_string(data.nodes[j]) + ")");
        }
    }
    std::vector<double> out(grid.node_count());
    for (std::size_t t = 0; t < out.size(); ++t) {
        double best = 1.0;
        for (std::size_t k = 0; k < data.nodes.size(); ++k) {
            best = std::min(best, data.values[k] + c * table.distance(t, data.nodes[k]));
        }
        out[t] = best;
    }
    // Rounding in phi(u) + c|t - u| can land an ulp below phi(t) on S.
    for (std::size_t k = 0; k < data.nodes.size(); ++k) out[data.nodes[k]] = data.values[k];
    return SampledFunction(grid, std::move(out));
}

double convex_feasibility(double x, double y, double c) {
    if (!(c > 0.0)) throw Error("convex_feasibility: c must be positive");
    if (!(std::abs(y) < c)) throw Error("convex_feasibility: requires |y| < c");
    if (x <= -c) return -(c + x) / (y - x);
    if (x >= c) return (x - c) / (x - y);
    return 0.0;
}

double convex_feasibility_multi(std::span<const FeasibilityPair> pairs) {
    double s = 0.0;
    for (const auto& p : pairs) s = std::max(s, convex_feasibility(p.x, p.y, p.c));
    return s;
}

SampledFunction random_lipschitz(const GridSpec& grid, double c, std::uint64_t seed) {
    if (!(c >= 0.0)) throw Error("random_lipschitz: c must be non-negative");
    std::mt19937_64 rng(seed);
    const std::size_t count = grid.node_count();
    const std::size_t k = std::clamp<std::size_t>(count / 16, 1, 48);
    std::vector<std::size_t> all(count);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::shuffle(all.begin(), all.end(), rng);
    NodeData data;
    data.nodes.assign(all.begin(), all.begin() + static_cast<long>(k));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    detail::IndexTable table(grid);
    for (std::size_t i = 0; i < k; ++i) {
        // Clamp the draw into the interval left open by the earlier values so
        // the data stays c-Lipschitz on S.
        double lo = 0.0, hi = 1.0;
        for (std::size_t j = 0; j < i; ++j) {
            const double d = table.distance(data.nodes[i], data.nodes[j]);
            lo = std::max(lo, data.values[j] - c * d);
            hi = std::min(hi, data.values[j] + c * d);
        }
        data.values.push_back(std::clamp(unit(rng), lo, std::max(lo, hi)));
    }
    return mcshane_extend(grid, data, c);
}

}  // namespace lipfilter
