#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lipfilter/grid.hpp"

namespace lipfilter {

/// Every constant of the Lipschitz filter in one record.
struct FilterParams {
    double epsilon = 0.0;
    double c = 0.0;
    double c_prime = 0.0;
    /// Lattice period M (1/M < c).
    double period = 0.0;
    LatticeSubset lattice;
    /// c = c_1 < ... < c_N = c', N = |Lambda|. A single coset gives the chain (c').
    std::vector<double> chain;
    /// L = sum_{k>=2} 1/c_k.
    double reach = 0.0;
    /// R = L + eps/(2c') + 2 sqrt(n) M.
    double support_radius = 0.0;
};

/**
 * Precomputed state for filtering functions on one torus grid.
 *
 * Gamma nodes are the grid nodes whose index modulo the lattice period is a
 * lattice offset; they are stored coset by coset (cosets in row-major offset
 * order, nodes row-major inside a coset). The quadrature over the
 * fundamental domain [0, M)^n uses the grid nodes inside it, and the same
 * nodes define A.
 */
struct FilterPlan {
    FilterParams params;
    GridSpec torus_grid;
    /// c' * dist(t, Gamma).
    SampledFunction psi;
    /// Fundamental-domain mean of psi.
    double average = 0.0;

    std::vector<std::size_t> gamma_nodes;
    /// coset k occupies gamma_nodes[coset_begin[k] .. coset_begin[k+1]).
    std::vector<std::size_t> coset_begin;
    /// Grid steps of every node of [0, M)^n, row-major.
    std::vector<std::vector<int>> fundamental_steps;
    /// node x gamma distance matrix, row-major.
    std::vector<double> node_gamma_distance;

    std::size_t coset_count() const { return coset_begin.size() - 1; }
    double distance(std::size_t node, std::size_t gamma_slot) const {
        return node_gamma_distance[node * gamma_nodes.size() + gamma_slot];
    }
};

/// c_k = c (c'/c)^((k-1)/(N-1)), k = 1..N; for N = 1 the chain is (c').
std::vector<double> geometric_chain(double c, double c_prime, std::size_t n);

/**
 * Build a plan on `torus_grid` with lattice period `period` (defaults to the
 * grid period) and Lambda = every `lattice_stride`-th node of [0, M)^n.
 * Throws if c >= c', 1/M >= c, or the lattice is coarser than eps/(2c').
 */
FilterPlan build_plan(double epsilon, double c, double c_prime, const GridSpec& torus_grid,
                      int lattice_stride, std::optional<double> period = std::nullopt);

/// Same, with an explicit chain (must be strictly increasing from c to c').
FilterPlan build_plan_with_chain(double epsilon, double c, double c_prime, const GridSpec& torus_grid,
                                 int lattice_stride, std::vector<double> chain,
                                 std::optional<double> period = std::nullopt);

/// The largest stride whose lattice satisfies the density requirement, if any.
std::optional<int> coarsest_admissible_stride(double epsilon, double c_prime, const GridSpec& torus_grid,
                                              double period);

/// Values of phi on the Gamma nodes, in plan order.
std::vector<double> restrict_to_gamma(const SampledFunction& phi, const FilterPlan& plan);

/// The coset-by-coset discrete filter on Gamma (inputs and outputs in plan order).
std::vector<double> discrete_filter(std::span<const double> gamma_values, const FilterPlan& plan);

struct FilterOutput {
    SampledFunction function;
    /// Largest distance of a raw output value from [0,1].
    double max_excursion = 0.0;
    std::size_t clamped_nodes = 0;
};

/// The full equivariant filter F on the plan's torus grid.
FilterOutput apply_filter_detailed(const SampledFunction& phi, const FilterPlan& plan);
/// apply_filter_detailed, warning on std::clog when outputs leave [0,1] by more than 1e-9.
SampledFunction apply_filter(const SampledFunction& phi, const FilterPlan& plan);

/// (L, R) of the plan.
std::pair<double, double> filter_reach(const FilterPlan& plan);
double chain_reach(std::span<const double> chain);

/// JSON description of a plan (all parameters and the offsets list).
std::string plan_to_json(const FilterPlan& plan);

}  // namespace lipfilter
