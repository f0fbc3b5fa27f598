#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lipfilter/filter.hpp"
#include "lipfilter/grid.hpp"

namespace lipfilter {

/// T^t x = x + B t (mod M) on the torus sampled by `space`.
struct TorusAction {
    int n = 0;
    /// d x n, row-major.
    std::vector<double> B;
    GridSpec space;

    static TorusAction make(const GridSpec& space, int n, std::vector<double> B);
    /// T^t x = x + t on the d-torus (n = d).
    static TorusAction free_flow(const GridSpec& space);
    /// B = 0: every point is fixed.
    static TorusAction trivial(const GridSpec& space, int n);

    int d() const { return space.dim(); }
    double period() const { return space.size(); }
    double b(int row, int col) const { return B[static_cast<std::size_t>(row) * n + col]; }
    /// True iff every entry of B is an integer, so grid steps of t map nodes to nodes.
    bool integral() const;
    bool is_zero() const;
};

/// x + B t reduced into [0, M)^d.
std::vector<double> act(const TorusAction& action, std::span<const double> x, std::span<const double> t);
/// The node reached from `node` by t = h * steps (integral B only).
std::size_t act_node(const TorusAction& action, std::size_t node, std::span<const int> steps);

struct StabilizerSplit {
    /// Orthonormal bases, one vector per entry.
    std::vector<std::vector<double>> g;
    std::vector<std::vector<double>> h;
};

/// g = ker B (singular values <= 1e-10), h its orthogonal complement.
StabilizerSplit stabilizer_split(const TorusAction& action);

/// Orthonormal columns u_1..u_m spanning h.
struct Frame {
    std::vector<std::vector<double>> columns;
    std::size_t rank() const { return columns.size(); }
    /// rho(t) = sum_i t_i u_i.
    std::vector<double> apply(std::span<const double> t) const;
};

/// Gram-Schmidt on the projections of the reference vectors onto span(h_basis).
Frame gram_schmidt_frame(const std::vector<std::vector<double>>& h_basis,
                         const std::vector<std::vector<double>>& reference);
/// Reference frame e_1..e_m of R^n.
std::vector<std::vector<double>> standard_reference(int n, int m);

/// f(x)(t) = generator(T^t x).
struct EquivariantMap {
    TorusAction action;
    SampledFunction generator;

    double evaluate(std::size_t x, std::span<const int> steps) const;
    /// t -> generator(T^t x) on a t-grid of period `period` (a multiple of M) and spacing h.
    SampledFunction orbit_function(std::size_t x, double period) const;
};

/// Membership flags over the nodes of the action's grid.
using NodeSet = std::vector<char>;

bool is_invariant(const TorusAction& action, const NodeSet& set);
NodeSet fixed_nodes(const TorusAction& action);

/// A plan for filtering orbit functions of `action` at (eps, c, c').
struct OrbitPlan {
    FilterPlan plan;
    double t_period = 0.0;
};

/**
 * The t-grid has the spacing of the action grid and the smallest period
 * P = k M with P >= 2/c; the lattice period is P and the stride is the
 * coarsest admissible one.
 */
OrbitPlan make_orbit_plan(const TorusAction& action, double epsilon, double c, double c_prime);
/// As above with the lattice made of one point per period; eps is set to the least admissible value.
OrbitPlan make_coarse_orbit_plan(const TorusAction& action, double c, double c_prime);

/// Generator of x -> F(f(x)): one filter call per orbit, spread along the orbit.
EquivariantMap filter_map(const EquivariantMap& f, const OrbitPlan& plan);

struct Cutoff {
    EquivariantMap beta;
    NodeSet W;
    double support_radius = 0.0;
};

/**
 * beta with beta(x) = 1 for x in A and beta(x)(0) = 0 off V, each beta(x)
 * delta-Lipschitz. W holds the nodes whose flow over B_R stays in V.
 */
Cutoff equivariant_cutoff(const TorusAction& action, const NodeSet& A, const NodeSet& V, double delta);

/// h = (1 - beta) f + beta g.
EquivariantMap equivariant_blend(const EquivariantMap& f, const EquivariantMap& g, const Cutoff& beta,
                                 const NodeSet& V, double epsilon);

/// Extend g (given on the nodes of A) to all of X and filter at (eps, c, c').
EquivariantMap equivariant_extend(const TorusAction& action, const NodeSet& A, const SampledFunction& g, double c,
                                  double c_prime, double epsilon);

struct ExtendAndFilter {
    EquivariantMap h;
    EquivariantMap g_extended;
    Cutoff cutoff;
    NodeSet V;
    double epsilon = 0.0;
    double c1 = 0.0;
    double delta = 0.0;
};

ExtendAndFilter extend_and_filter(const TorusAction& action, const NodeSet& A, const EquivariantMap& f,
                                  const SampledFunction& g, double c, double c_prime, double epsilon1,
                                  double epsilon2);

/// Lip_delta map agreeing with iota0 on Fix; iota0 seeds the generator when Fix is empty.
EquivariantMap base_map(const TorusAction& action, const SampledFunction& iota0, double delta);

/// Largest Lipschitz constant of the orbit functions t -> generator(T^t x), t on the period-M grid.
double orbit_lipschitz(const EquivariantMap& f);

// ---------------------------------------------------------------------------
// Local sections

using PointField = std::function<double(std::span<const double>)>;

struct SectionGeometry {
    double r = 0.0;
    /// Quadrature cells per axis (even).
    int quadrature = 0;
    double a = 0.0;
    double delta = 0.0;
    /// V and A are balls about p.
    double v_radius = 0.0;
    double a_radius = 0.0;
    double tol = 0.0;
};

/// Default margins for radius r: a = r/5, delta = 0.09 r, V radius r/4, A radius 0.07 r.
SectionGeometry default_section_geometry(const TorusAction& action, double r, int quadrature = 0);

/// Radial bump about p along the flow: 1 within 0.45 r, 0 beyond 0.5 r, times a wide window across it.
PointField section_bump(const TorusAction& action, std::span<const double> p, const Frame& frame, double r);

/**
 * f_i(x) = integral over B_r cap {t_i <= 0} of h(T^{rho(t)} x) dt by the
 * midpoint rule with `quadrature` cells per axis.
 */
std::vector<double> section_functional(const TorusAction& action, const PointField& h, const Frame& frame,
                                       std::span<const double> x, double r, int quadrature);

struct AuditRow {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::string witness;
};

struct LocalSection {
    Frame frame;
    SectionGeometry geometry;
    std::vector<std::size_t> E;
    std::vector<AuditRow> audit;
    bool passed() const;
};

/// Build E about node p and audit injectivity, coverage, monotonicity and independence.
LocalSection build_local_section(const TorusAction& action, std::size_t p, double r, int quadrature = 0,
                                 std::optional<PointField> bump = std::nullopt);

std::string audit_to_csv(const std::vector<AuditRow>& rows);

}  // namespace lipfilter
