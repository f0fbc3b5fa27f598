#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lipfilter/grid.hpp"

namespace lipfilter {

enum class LipschitzMethod { Exhaustive, Bound };

struct LipschitzReport {
    double constant = 0.0;
    /// Node pair realizing `constant`; ties go to the lowest row-major pair.
    std::size_t witness_a = 0;
    std::size_t witness_b = 0;
    LipschitzMethod method = LipschitzMethod::Exhaustive;
};

inline constexpr std::size_t kExhaustiveNodeCap = 4096;

/**
 * Discrete Lipschitz constant of a sampled function.
 *
 * Exhaustive: max over all node pairs of |phi(t) - phi(u)| / |t - u|
 * (torus-aware distances); refuses grids above `cap` nodes.
 * Bound: sqrt(n) times the largest adjacent-node quotient. This is an upper
 * estimate of the exhaustive value since any two nodes are joined by a
 * lattice path of l1 length at most sqrt(n) |t - u|.
 */
LipschitzReport lipschitz_constant(const SampledFunction& phi,
                                   LipschitzMethod method = LipschitzMethod::Exhaustive,
                                   std::size_t cap = kExhaustiveNodeCap);

/// Exhaustive pairwise check |phi(t)-phi(u)| <= c|t-u| + tol with no node cap.
bool is_lipschitz(const SampledFunction& phi, double c, double tol);

/// L(phi, p, r): max over nodes t with 0 < |t - p| <= r of |phi(t) - phi(p)| / |t - p|.
double local_modulus(const SampledFunction& phi, std::size_t p, double r);

/// Data prescribed on a node subset S.
struct NodeData {
    std::vector<std::size_t> nodes;
    std::vector<double> values;
};

/// min{1, min_{u in S} (phi(u) + c|t - u|)} at every node.
SampledFunction mcshane_extend(const GridSpec& grid, const NodeData& data, double c);

/// Least s in [0,1] with |(1-s)x + s y| <= c. Requires |y| < c.
double convex_feasibility(double x, double y, double c);

struct FeasibilityPair {
    double x = 0.0;
    double y = 0.0;
    double c = 0.0;
};

/// Max of the per-pair feasibility values (0 for an empty list).
double convex_feasibility_multi(std::span<const FeasibilityPair> pairs);

/// Random c-Lipschitz function with values in [0,1], deterministic per seed.
SampledFunction random_lipschitz(const GridSpec& grid, double c, std::uint64_t seed);

}  // namespace lipfilter
