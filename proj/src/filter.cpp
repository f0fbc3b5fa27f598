#include "lipfilter/filter.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <iostream>

#include <json.hpp>

#include "detail.hpp"
#include "lipfilter/error.hpp"
#include "lipfilter/lipcore.hpp"

namespace lipfilter {

std::vector<double> geometric_chain(double c, double c_prime, std::size_t n) {
    if (n == 0) throw Error("geometric_chain: need at least one level");
    if (n == 1) return {c_prime};
    std::vector<double> chain(n);
    const double ratio = c_prime / c;
    for (std::size_t k = 0; k < n; ++k) {
        chain[k] = c * std::pow(ratio, static_cast<double>(k) / static_cast<double>(n - 1));
    }
    chain.front() = c;
    chain.back() = c_prime;
    return chain;
}

double chain_reach(std::span<const double> chain) {
    double reach = 0.0;
    for (std::size_t k = 1; k < chain.size(); ++k) reach += 1.0 / chain[k];
    return reach;
}

namespace {

double resolve_period(const GridSpec& g, std::optional<double> period) {
    if (!g.is_torus()) throw Error("build_plan: the filter grid must be a torus");
    return period.value_or(g.size());
}

}  // namespace

std::optional<int> coarsest_admissible_stride(double epsilon, double c_prime, const GridSpec& torus_grid,
                                              double period) {
    const long q = std::lround(period / torus_grid.spacing());
    for (long stride = q; stride >= 1; --stride) {
        if (q % stride != 0) continue;
        const auto lat = LatticeSubset::strided(torus_grid, period, static_cast<int>(stride));
        if (lat.density_radius <= epsilon / (2.0 * c_prime)) return static_cast<int>(stride);
    }
    return std::nullopt;
}

FilterPlan build_plan(double epsilon, double c, double c_prime, const GridSpec& torus_grid, int lattice_stride,
                      std::optional<double> period) {
    const double M = resolve_period(torus_grid, period);
    const auto lattice = LatticeSubset::strided(torus_grid, M, lattice_stride);
    if (!(c > 0.0) || !(c < c_prime)) throw Error("build_plan: requires 0 < c < c'");
    return build_plan_with_chain(epsilon, c, c_prime, torus_grid, lattice_stride,
                                 geometric_chain(c, c_prime, lattice.offsets.size()), period);
}

FilterPlan build_plan_with_chain(double epsilon, double c, double c_prime, const GridSpec& torus_grid,
                                 int lattice_stride, std::vector<double> chain, std::optional<double> period) {
    const double M = resolve_period(torus_grid, period);
    if (!(epsilon > 0.0)) throw Error("build_plan: epsilon must be positive");
    if (!(c > 0.0) || !(c < c_prime)) throw Error("build_plan: requires 0 < c < c'");
    if (!(1.0 / M < c))
        throw Error("build_plan: requires 1/M < c (M = " + format_double(M) + ", c = " + format_double(c) + ")");

    FilterPlan plan;
    plan.torus_grid = torus_grid;
    FilterParams& p = plan.params;
    p.epsilon = epsilon;
    p.c = c;
    p.c_prime = c_prime;
    p.period = M;
    p.lattice = LatticeSubset::strided(torus_grid, M, lattice_stride);
    if (p.lattice.density_radius > epsilon / (2.0 * c_prime)) {
        throw Error("build_plan: lattice density radius " + format_double(p.lattice.density_radius) +
                    " exceeds eps/(2c') = " + format_double(epsilon / (2.0 * c_prime)));
    }
    const std::size_t n_cosets = p.lattice.offsets.size();
    if (chain.size() != n_cosets) throw Error("build_plan: chain length must equal the number of cosets");
    if (n_cosets == 1) {
        if (chain[0] != c_prime) throw Error("build_plan: a single-coset chain must be (c')");
    } else {
        if (chain.front() != c || chain.back() != c_prime) throw Error("build_plan: chain must run from c to c'");
        for (std::size_t k = 1; k < chain.size(); ++k)
            if (!(chain[k] > chain[k - 1])) throw Error("build_plan: chain must be strictly increasing");
    }
    p.chain = std::move(chain);
    p.reach = chain_reach(p.chain);
    p.support_radius = p.reach + epsilon / (2.0 * c_prime) + 2.0 * std::sqrt(static_cast<double>(torus_grid.dim())) * M;

    // Gamma nodes, coset by coset.
    const GridSpec& g = torus_grid;
    std::vector<std::vector<std::size_t>> by_coset(n_cosets);
    for (std::size_t t = 0; t < g.node_count(); ++t) {
        if (auto k = p.lattice.coset_of(g, t)) by_coset[*k].push_back(t);
    }
    plan.coset_begin.push_back(0);
    for (const auto& nodes : by_coset) {
        plan.gamma_nodes.insert(plan.gamma_nodes.end(), nodes.begin(), nodes.end());
        plan.coset_begin.push_back(plan.gamma_nodes.size());
    }

    const std::size_t n_gamma = plan.gamma_nodes.size();
    detail::IndexTable table(g);
    plan.node_gamma_distance.resize(g.node_count() * n_gamma);
    std::vector<double> psi(g.node_count());
    for (std::size_t t = 0; t < g.node_count(); ++t) {
        double nearest = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n_gamma; ++j) {
            const double d = table.distance(t, plan.gamma_nodes[j]);
            plan.node_gamma_distance[t * n_gamma + j] = d;
            nearest = std::min(nearest, d);
        }
        psi[t] = c_prime * nearest;
    }
    plan.psi = SampledFunction(g, std::move(psi));

    const int q = p.lattice.steps_per_period();
    std::size_t fd_count = 1;
    for (int a = 0; a < g.dim(); ++a) fd_count *= static_cast<std::size_t>(q);
    std::vector<double> fd_psi;
    fd_psi.reserve(fd_count);
    for (std::size_t k = 0; k < fd_count; ++k) {
        std::vector<int> steps(static_cast<std::size_t>(g.dim()));
        std::size_t rest = k;
        for (int a = g.dim() - 1; a >= 0; --a) {
            steps[a] = static_cast<int>(rest % static_cast<std::size_t>(q));
            rest /= static_cast<std::size_t>(q);
        }
        fd_psi.push_back(plan.psi.values[g.flat_index(steps)]);
        plan.fundamental_steps.push_back(std::move(steps));
    }
    plan.average = detail::canonical_sum(fd_psi) / static_cast<double>(fd_count);
    return plan;
}

std::vector<double> restrict_to_gamma(const SampledFunction& phi, const FilterPlan& plan) {
    if (!(phi.grid == plan.torus_grid)) throw Error("filter: function grid does not match the plan grid");
    std::vector<double> out(plan.gamma_nodes.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = phi.values[plan.gamma_nodes[j]];
    return out;
}

std::vector<double> discrete_filter(std::span<const double> gamma_values, const FilterPlan& plan) {
    const std::size_t n_gamma = plan.gamma_nodes.size();
    if (gamma_values.size() != n_gamma) throw Error("discrete_filter: expected one value per Gamma node");
    for (double v : gamma_values)
        if (!(v >= 0.0 && v <= 1.0)) throw Error("discrete_filter: values must lie in [0,1]");

    const auto& chain = plan.params.chain;
    std::vector<double> out(gamma_values.begin(), gamma_values.end());
    for (std::size_t k = 1; k < plan.coset_count(); ++k) {
        const std::size_t prev_end = plan.coset_begin[k];
        const double c_prev = chain[k - 1];
        const double c_next = chain[k];
        const double horizon = 1.0 / c_next;
        for (std::size_t slot = plan.coset_begin[k]; slot < plan.coset_begin[k + 1]; ++slot) {
            const std::size_t t = plan.gamma_nodes[slot];
            const double* dist = &plan.node_gamma_distance[t * n_gamma];
            double envelope = 1.0;
            for (std::size_t u = 0; u < prev_end; ++u) envelope = std::min(envelope, out[u] + c_prev * dist[u]);
            const double value = gamma_values[slot];
            double s = 0.0;
            for (std::size_t u = 0; u < prev_end; ++u) {
                if (dist[u] > horizon) continue;
                s = std::max(s, convex_feasibility(value - out[u], envelope - out[u], c_next * dist[u]));
            }
            out[slot] = (1.0 - s) * value + s * envelope;
        }
    }
    return out;
}

FilterOutput apply_filter_detailed(const SampledFunction& phi, const FilterPlan& plan) {
    const GridSpec& g = plan.torus_grid;
    if (!(phi.grid == g)) throw Error("apply_filter: function grid does not match the plan grid");
    if (!phi.range_clamped) throw Error("apply_filter: values must lie in [0,1]");

    FilterOutput result;
    // Constants are fixed points; return them exactly.
    if (std::all_of(phi.values.begin(), phi.values.end(), [&](double v) { return v == phi.values.front(); })) {
        result.function = phi;
        return result;
    }

    const std::size_t count = g.node_count();
    const std::size_t n_gamma = plan.gamma_nodes.size();
    const std::size_t n_fd = plan.fundamental_steps.size();
    const double cp = plan.params.c_prime;
    std::vector<double> terms(count * n_fd);

    detail::parallel_for(n_fd, [&](std::size_t ui) {
        const auto& u = plan.fundamental_steps[ui];
        std::vector<double> shifted(n_gamma);
        for (std::size_t j = 0; j < n_gamma; ++j) shifted[j] = phi.values[g.translate(plan.gamma_nodes[j], u)];
        const auto filtered = discrete_filter(shifted, plan);

        std::vector<double> lower(count);
        for (std::size_t tau = 0; tau < count; ++tau) {
            const double* dist = &plan.node_gamma_distance[tau * n_gamma];
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t w = 0; w < n_gamma; ++w) best = std::min(best, filtered[w] + cp * dist[w]);
            lower[tau] = best;
        }
        std::vector<int> minus_u(u.size());
        for (std::size_t a = 0; a < u.size(); ++a) minus_u[a] = -u[a];
        for (std::size_t t = 0; t < count; ++t) terms[t * n_fd + ui] = lower[g.translate(t, minus_u)];
    });

    std::vector<double> out(count);
    std::vector<double> row(n_fd);
    for (std::size_t t = 0; t < count; ++t) {
        std::copy_n(terms.begin() + static_cast<long>(t * n_fd), n_fd, row.begin());
        double v = detail::canonical_sum(row) / static_cast<double>(n_fd) - plan.average;
        const double excursion = std::max(v - 1.0, -v);
        if (excursion > 0.0) {
            result.max_excursion = std::max(result.max_excursion, excursion);
            ++result.clamped_nodes;
            v = std::clamp(v, 0.0, 1.0);
        }
        out[t] = v;
    }
    result.function = SampledFunction(g, std::move(out));
    return result;
}

SampledFunction apply_filter(const SampledFunction& phi, const FilterPlan& plan) {
    auto res = apply_filter_detailed(phi, plan);
    if (res.max_excursion > 1e-9) {
        std::clog << "warning: apply_filter clamped " << res.clamped_nodes << " node(s); max excursion "
                  << res.max_excursion << "\n";
    }
    return std::move(res.function);
}

std::pair<double, double> filter_reach(const FilterPlan& plan) {
    return {plan.params.reach, plan.params.support_radius};
}

std::string plan_to_json(const FilterPlan& plan) {
    const FilterParams& p = plan.params;
    nlohmann::ordered_json j;
    j["epsilon"] = p.epsilon;
    j["c"] = p.c;
    j["c_prime"] = p.c_prime;
    j["M"] = p.period;
    j["dim"] = plan.torus_grid.dim();
    j["grid_period"] = plan.torus_grid.size();
    j["grid_points_per_axis"] = plan.torus_grid.points_per_axis();
    j["spacing"] = plan.torus_grid.spacing();
    j["density_radius"] = p.lattice.density_radius;
    j["chain"] = p.chain;
    j["reach"] = p.reach;
    j["support_radius"] = p.support_radius;
    j["psi_average"] = plan.average;
    auto offsets = nlohmann::ordered_json::array();
    for (const auto& off : p.lattice.offsets) {
        std::vector<double> x;
        for (int k : off) x.push_back(k * p.lattice.spacing);
        offsets.push_back(x);
    }
    j["offsets"] = offsets;
    return j.dump(2);
}

}  // namespace lipfilter
