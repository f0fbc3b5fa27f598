#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lipfilter/grid.hpp"

namespace lipfilter {

/// Grid tolerance for modulus equalities: 2 c h / delta.
double grid_tolerance(double c, double h, double delta);

struct BreakResult {
    SampledFunction function;
    double delta = 0.0;
    double epsilon1 = 0.0;
    double tau_grid = 0.0;
};

/**
 * Perturb a c-Lipschitz function on a box window so that it cannot be
 * invariant under any translation: the boundary layer is untouched, the
 * modulus at the origin becomes c' and stays at most (c+c')/2 elsewhere
 * away from the origin.
 */
BreakResult break_invariance(const SampledFunction& phi, double epsilon, double c, double c_prime);

/// Anchor points, pit radius and slope chain shared by encode and decode.
struct BumpLayout {
    double r = 0.0;
    double delta = 0.0;
    double epsilon1 = 0.0;
    std::vector<std::size_t> anchors;
    std::array<double, 4> chain{};
};

/// c_1 = c, c_2 = (3c+c')/4, c_3 = (c+c')/2, c_4 = c'.
std::array<double, 4> default_chain(double c, double c_prime);

/**
 * Layout with `count` anchors spread on a circle of radius 0.21 r (on a line
 * in one dimension), snapped to nodes. delta is 0.95 times the largest value
 * admitted by the anchor geometry and the headroom; it must cover at least
 * two grid steps.
 */
BumpLayout make_layout(const GridSpec& grid, std::size_t count, const std::array<double, 4>& chain,
                       double epsilon);
/// Layout over explicit anchor nodes.
BumpLayout make_layout(const GridSpec& grid, std::vector<std::size_t> anchors, const std::array<double, 4>& chain,
                       double epsilon);

/// Throws if the layout does not fit the grid.
void validate_layout(const GridSpec& grid, const BumpLayout& layout);

/// Store s_k in the modulus at anchor k as (1-s_k) c_2 + s_k c_3.
SampledFunction multibump_encode(const SampledFunction& phi, std::span<const double> s, const BumpLayout& layout,
                                 double epsilon, bool certify_input = true);
/// clamp((L(phi', p_k, delta) - c_2) / (c_3 - c_2)).
std::vector<double> multibump_decode(const SampledFunction& phi_prime, const BumpLayout& layout);

/// One-line text form, for LFN comments.
std::string layout_to_string(const GridSpec& grid, const BumpLayout& layout);
BumpLayout layout_from_string(const GridSpec& grid, const std::string& text);

struct FamilySpace {
    /// Pairwise distances between members.
    std::vector<std::vector<double>> metric;
    std::vector<std::size_t> centers;
    /// Member indices of each K_k.
    std::vector<std::vector<std::size_t>> cover;
    /// chi[x][k].
    std::vector<std::vector<double>> chi;

    std::size_t size() const { return metric.size(); }
};

/**
 * Greedy cover: members farther than eps/4 from every earlier center become
 * centers; K_k holds the members within eps/4 of center k and
 * chi_k(x) = clamp(1 - d(x, K_k) / (eps/4)). Every U_k = {chi_k > 0} lies in
 * the eps/2-ball about its center.
 */
FamilySpace build_cover(std::vector<std::vector<double>> metric, double epsilon);

/// Sup-distance matrix of a list of functions on one grid.
std::vector<std::vector<double>> sup_metric(std::span<const SampledFunction> functions);

struct DistinguishedFamily {
    FamilySpace space;
    BumpLayout layout;
    std::vector<SampledFunction> functions;
    /// Agreement tolerance tau_grid * delta.
    double eta = 0.0;
};

DistinguishedFamily distinguish_family(std::span<const SampledFunction> family, double epsilon, double c,
                                       double c_prime);

/**
 * Smallest (row-major) grid shift s with |s| <= r/2 such that
 * |g_x(t + s) - g_y(t)| <= eta at every node t with |t| <= r/2.
 */
std::optional<std::vector<int>> shifted_agreement(const SampledFunction& gx, const SampledFunction& gy, double eta);

}  // namespace lipfilter
