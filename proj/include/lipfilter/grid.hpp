#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lipfilter {

enum class DomainKind { Box, Torus };

/**
 * Uniform sampling of either a box [-r, r]^n (nodes at -r + i*h, i = 0..m-1,
 * with (m-1)*h = 2r) or a torus R^n / M Z^n (nodes at i*h with m*h = M).
 *
 * Nodes are addressed by a flat row-major index, last axis fastest.
 * All distances are computed from integer index offsets so that they are
 * exactly invariant under grid translations.
 */
class GridSpec {
public:
    GridSpec() = default;

    /// Box window of half-width `radius`; m must be odd (origin is a node) and >= 3.
    static GridSpec box(int dim, double radius, int points_per_axis);
    /// Torus of period `period`; m >= 2.
    static GridSpec torus(int dim, double period, int points_per_axis);

    int dim() const { return dim_; }
    DomainKind kind() const { return kind_; }
    bool is_torus() const { return kind_ == DomainKind::Torus; }
    bool is_box() const { return kind_ == DomainKind::Box; }
    /// Box radius or torus period.
    double size() const { return size_; }
    double spacing() const { return spacing_; }
    int points_per_axis() const { return m_; }
    std::size_t node_count() const { return count_; }

    double coord(std::size_t node, int axis) const;
    std::vector<double> coords(std::size_t node) const;
    std::vector<int> multi_index(std::size_t node) const;
    int axis_index(std::size_t node, int axis) const;

    /// Flat index of a multi-index. Torus indices are wrapped; box indices
    /// out of range throw.
    std::size_t flat_index(std::span<const int> idx) const;

    /// Node `node` translated by `steps` grid steps (wrapped on a torus).
    std::size_t translate(std::size_t node, std::span<const int> steps) const;

    /// Per-axis integer offset b - a, wrapped into the minimal image on a torus.
    int axis_offset(std::size_t a, std::size_t b, int axis) const;

    /// Euclidean node distance; on a torus, the minimum over periodic images.
    double distance(std::size_t a, std::size_t b) const;
    /// Distance from a node to an arbitrary point of the domain (torus-aware).
    double distance_to_point(std::size_t a, std::span<const double> p) const;

    /// Outermost layer of a box grid (the discrete boundary). Always false on a torus.
    bool on_boundary_layer(std::size_t node) const;
    /// Number of grid steps from the node to the discrete boundary (box only).
    int steps_to_boundary(std::size_t node) const;

    /// Nearest node to a point; nullopt if the point lies outside a box.
    std::optional<std::size_t> nearest_node(std::span<const double> point) const;

    bool operator==(const GridSpec& other) const;

private:
    int dim_ = 0;
    DomainKind kind_ = DomainKind::Box;
    double size_ = 0.0;
    double spacing_ = 0.0;
    int m_ = 0;
    std::size_t count_ = 0;
};

/// make_grid from the command-line style description.
GridSpec make_grid(int dim, DomainKind kind, double size, int points_per_axis);

/// Values of a function at the nodes of a grid.
struct SampledFunction {
    GridSpec grid;
    std::vector<double> values;
    /// True iff every value lies in [0, 1].
    bool range_clamped = false;

    SampledFunction() = default;
    SampledFunction(GridSpec g, std::vector<double> v);

    double operator[](std::size_t i) const { return values[i]; }
    std::size_t size() const { return values.size(); }
};

bool all_in_unit_interval(std::span<const double> values);

using Field = std::function<double(std::span<const double>)>;

/// Evaluate `field` at every node. Non-finite values throw, naming the node.
SampledFunction sample_field(const GridSpec& grid, const Field& field);

/// result(t) = phi(t + u) where u is given in grid steps.
SampledFunction torus_shift(const SampledFunction& phi, std::span<const int> steps);
/// Same, with u as a real vector that must be an integer combination of grid steps.
SampledFunction torus_shift_by_vector(const SampledFunction& phi, std::span<const double> u);

/**
 * Gamma = Lambda + M Z^n where Lambda is a finite offset set inside the
 * fundamental domain [0, M)^n. Offsets are stored as integer multiples of the
 * grid spacing of an associated torus grid.
 */
struct LatticeSubset {
    double period = 0.0;
    double spacing = 0.0;
    int dim = 0;
    /// Offsets in row-major order of their coordinates.
    std::vector<std::vector<int>> offsets;
    /// Max over torus nodes of the distance to the nearest Gamma point.
    double density_radius = 0.0;

    /// Sub-lattice of `grid` taking every `stride`-th node in each axis
    /// inside [0, period)^n. The grid period must be a multiple of `period`.
    static LatticeSubset strided(const GridSpec& grid, double period, int stride);

    int steps_per_period() const;
    /// True iff the node's index, reduced modulo the period, is an offset.
    std::optional<std::size_t> coset_of(const GridSpec& grid, std::size_t node) const;
};

/// Max over nodes of `grid` of the distance to Gamma. Bounded by the
/// continuous covering radius, with equality for even strides.
double lattice_density_radius(const GridSpec& grid, const LatticeSubset& lattice);

// -- LFN text format ---------------------------------------------------------

struct LfnFile {
    SampledFunction function;
    /// Comment lines (starting with '#'), without the leading '#'.
    std::vector<std::string> comments;
};

void save_lfn(const SampledFunction& phi, std::ostream& out,
              std::span<const std::string> comments = {});
void save_lfn(const SampledFunction& phi, const std::string& path,
              std::span<const std::string> comments = {});
LfnFile read_lfn(std::istream& in);
LfnFile read_lfn(const std::string& path);
SampledFunction load_lfn(std::istream& in);

/// Shortest round-trip decimal text for a double (17 significant digits).
std::string format_double(double x);

}  // namespace lipfilter
