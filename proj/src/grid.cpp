#include "lipfilter/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "lipfilter/error.hpp"

namespace lipfilter {

namespace {

int wrap_index(long i, int m) {
    long r = i % m;
    if (r < 0) r += m;
    return static_cast<int>(r);
}

int minimal_image(int d, int m) {
    int w = wrap_index(d, m);
    return (w > m / 2) ? w - m : w;
}

bool close_rel(double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

GridSpec GridSpec::box(int dim, double radius, int points_per_axis) {
    if (dim < 1) throw Error("grid: dim must be >= 1");
    if (!(radius > 0.0) || !std::isfinite(radius)) throw Error("grid: box radius must be positive");
    if (points_per_axis < 3) throw Error("grid: box needs at least 3 points per axis");
    if (points_per_axis % 2 == 0)
        throw Error("grid: box grids need an odd number of points per axis so the origin is a node");
    GridSpec g;
    g.dim_ = dim;
    g.kind_ = DomainKind::Box;
    g.size_ = radius;
    g.m_ = points_per_axis;
    g.spacing_ = 2.0 * radius / (points_per_axis - 1);
    g.count_ = 1;
    for (int a = 0; a < dim; ++a) g.count_ *= static_cast<std::size_t>(points_per_axis);
    return g;
}

GridSpec GridSpec::torus(int dim, double period, int points_per_axis) {
    if (dim < 1) throw Error("grid: dim must be >= 1");
    if (!(period > 0.0) || !std::isfinite(period)) throw Error("grid: torus period must be positive");
    if (points_per_axis < 2) throw Error("grid: torus needs at least 2 points per axis");
    GridSpec g;
    g.dim_ = dim;
    g.kind_ = DomainKind::Torus;
    g.size_ = period;
    g.m_ = points_per_axis;
    g.spacing_ = period / points_per_axis;
    g.count_ = 1;
    for (int a = 0; a < dim; ++a) g.count_ *= static_cast<std::size_t>(points_per_axis);
    return g;
}

GridSpec make_grid(int dim, DomainKind kind, double size, int points_per_axis) {
    return kind == DomainKind::Box ? GridSpec::box(dim, size, points_per_axis)
                                   : GridSpec::torus(dim, size, points_per_axis);
}

int GridSpec::axis_index(std::size_t node, int axis) const {
    std::size_t stride = 1;
    for (int a = dim_ - 1; a > axis; --a) stride *= static_cast<std::size_t>(m_);
    return static_cast<int>((node / stride) % static_cast<std::size_t>(m_));
}

double GridSpec::coord(std::size_t node, int axis) const {
    const int i = axis_index(node, axis);
    if (kind_ == DomainKind::Box) {
        // Mirror around the centre so that coordinates are exactly antisymmetric.
        const int c = (m_ - 1) / 2;
        return (i - c) * spacing_;
    }
    return i * spacing_;
}

std::vector<double> GridSpec::coords(std::size_t node) const {
    std::vector<double> out(static_cast<std::size_t>(dim_));
    for (int a = 0; a < dim_; ++a) out[a] = coord(node, a);
    return out;
}

std::vector<int> GridSpec::multi_index(std::size_t node) const {
    std::vector<int> out(static_cast<std::size_t>(dim_));
    for (int a = dim_ - 1; a >= 0; --a) {
        out[a] = static_cast<int>(node % static_cast<std::size_t>(m_));
        node /= static_cast<std::size_t>(m_);
    }
    return out;
}

std::size_t GridSpec::flat_index(std::span<const int> idx) const {
    if (static_cast<int>(idx.size()) != dim_) throw Error("grid: index dimension mismatch");
    std::size_t flat = 0;
    for (int a = 0; a < dim_; ++a) {
        int i = idx[a];
        if (kind_ == DomainKind::Torus) {
            i = wrap_index(i, m_);
        } else if (i < 0 || i >= m_) {
            throw Error("grid: index outside the box");
        }
        flat = flat * static_cast<std::size_t>(m_) + static_cast<std::size_t>(i);
    }
    return flat;
}

std::size_t GridSpec::translate(std::size_t node, std::span<const int> steps) const {
    auto idx = multi_index(node);
    for (int a = 0; a < dim_; ++a) idx[a] += steps[a];
    return flat_index(idx);
}

int GridSpec::axis_offset(std::size_t a, std::size_t b, int axis) const {
    const int d = axis_index(b, axis) - axis_index(a, axis);
    return kind_ == DomainKind::Torus ? minimal_image(d, m_) : d;
}

double GridSpec::distance(std::size_t a, std::size_t b) const {
    long sq = 0;
    for (int ax = 0; ax < dim_; ++ax) {
        const long d = axis_offset(a, b, ax);
        sq += d * d;
    }
    return spacing_ * std::sqrt(static_cast<double>(sq));
}

double GridSpec::distance_to_point(std::size_t a, std::span<const double> p) const {
    double sq = 0.0;
    for (int ax = 0; ax < dim_; ++ax) {
        double d = p[ax] - coord(a, ax);
        if (kind_ == DomainKind::Torus) {
            d = std::remainder(d, size_);
        }
        sq += d * d;
    }
    return std::sqrt(sq);
}

bool GridSpec::on_boundary_layer(std::size_t node) const {
    if (kind_ != DomainKind::Box) return false;
    return steps_to_boundary(node) == 0;
}

int GridSpec::steps_to_boundary(std::size_t node) const {
    int best = m_;
    for (int a = 0; a < dim_; ++a) {
        const int i = axis_index(node, a);
        best = std::min({best, i, m_ - 1 - i});
    }
    return best;
}

std::optional<std::size_t> GridSpec::nearest_node(std::span<const double> point) const {
    std::vector<int> idx(static_cast<std::size_t>(dim_));
    for (int a = 0; a < dim_; ++a) {
        if (kind_ == DomainKind::Box) {
            const long i = std::lround(point[a] / spacing_) + (m_ - 1) / 2;
            if (i < 0 || i >= m_) return std::nullopt;
            idx[a] = static_cast<int>(i);
        } else {
            idx[a] = wrap_index(std::lround(point[a] / spacing_), m_);
        }
    }
    return flat_index(idx);
}

bool GridSpec::operator==(const GridSpec& o) const {
    return dim_ == o.dim_ && kind_ == o.kind_ && m_ == o.m_ && size_ == o.size_ &&
           spacing_ == o.spacing_;
}

bool all_in_unit_interval(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(),
                       [](double v) { return v >= 0.0 && v <= 1.0; });
}

SampledFunction::SampledFunction(GridSpec g, std::vector<double> v)
    : grid(std::move(g)), values(std::move(v)) {
    if (values.size() != grid.node_count()) {
        throw Error("sampled function: expected " + std::to_string(grid.node_count()) +
                    " values, got " + std::to_string(values.size()));
    }
    range_clamped = all_in_unit_interval(values);
}

SampledFunction sample_field(const GridSpec& grid, const Field& field) {
    std::vector<double> values(grid.node_count());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto x = grid.coords(i);
        const double v = field(x);
        if (!std::isfinite(v)) {
            std::ostringstream msg;
            msg << "sample_field: non-finite value at node " << i << " (";
            for (std::size_t a = 0; a < x.size(); ++a) msg << (a ? ", " : "") << x[a];
            msg << ")";
            throw Error(msg.str());
        }
        values[i] = v;
    }
    return SampledFunction(grid, std::move(values));
}

SampledFunction torus_shift(const SampledFunction& phi, std::span<const int> steps) {
    const GridSpec& g = phi.grid;
    if (!g.is_torus()) throw Error("torus_shift: grid is not a torus");
    if (static_cast<int>(steps.size()) != g.dim()) throw Error("torus_shift: shift dimension mismatch");
    std::vector<double> out(phi.values.size());
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = phi.values[g.translate(t, steps)];
    return SampledFunction(g, std::move(out));
}

SampledFunction torus_shift_by_vector(const SampledFunction& phi, std::span<const double> u) {
    const GridSpec& g = phi.grid;
    if (static_cast<int>(u.size()) != g.dim()) throw Error("torus_shift: shift dimension mismatch");
    std::vector<int> steps(u.size());
    for (std::size_t a = 0; a < u.size(); ++a) {
        const double k = u[a] / g.spacing();
        const double r = std::round(k);
        if (std::abs(k - r) > 1e-9) throw Error("torus_shift: shift is not a grid vector");
        steps[a] = static_cast<int>(std::fmod(r, static_cast<double>(g.points_per_axis())));
    }
    return torus_shift(phi, steps);
}

int LatticeSubset::steps_per_period() const {
    return static_cast<int>(std::lround(period / spacing));
}

LatticeSubset LatticeSubset::strided(const GridSpec& grid, double period, int stride) {
    if (!grid.is_torus()) throw Error("lattice: needs a torus grid");
    if (!(period > 0.0)) throw Error("lattice: period must be positive");
    if (stride < 1) throw Error("lattice: stride must be >= 1");
    const double q_real = period / grid.spacing();
    const long q = std::lround(q_real);
    if (q < 1 || !close_rel(q_real, static_cast<double>(q)))
        throw Error("lattice: grid spacing must divide the lattice period");
    const double mult = grid.size() / period;
    if (!close_rel(mult, std::round(mult)) || std::round(mult) < 1)
        throw Error("lattice: torus period must be a multiple of the lattice period");
    if (q % stride != 0) throw Error("lattice: stride must divide the steps per period");

    LatticeSubset lat;
    lat.period = period;
    lat.spacing = grid.spacing();
    lat.dim = grid.dim();
    const int per_axis = static_cast<int>(q / stride);
    std::size_t total = 1;
    for (int a = 0; a < lat.dim; ++a) total *= static_cast<std::size_t>(per_axis);
    lat.offsets.reserve(total);
    for (std::size_t k = 0; k < total; ++k) {
        std::vector<int> off(static_cast<std::size_t>(lat.dim));
        std::size_t rest = k;
        for (int a = lat.dim - 1; a >= 0; --a) {
            off[a] = static_cast<int>(rest % static_cast<std::size_t>(per_axis)) * stride;
            rest /= static_cast<std::size_t>(per_axis);
        }
        lat.offsets.push_back(std::move(off));
    }
    // Covering radius of the rectangular lattice in R^n: half the cell diagonal.
    lat.density_radius = 0.5 * stride * lat.spacing * std::sqrt(static_cast<double>(lat.dim));
    return lat;
}

std::optional<std::size_t> LatticeSubset::coset_of(const GridSpec& grid, std::size_t node) const {
    const int q = steps_per_period();
    const auto idx = grid.multi_index(node);
    for (std::size_t k = 0; k < offsets.size(); ++k) {
        bool match = true;
        for (int a = 0; a < dim && match; ++a) match = wrap_index(idx[a], q) == offsets[k][a];
        if (match) return k;
    }
    return std::nullopt;
}

double lattice_density_radius(const GridSpec& grid, const LatticeSubset& lattice) {
    const int q = lattice.steps_per_period();
    double worst = 0.0;
    for (std::size_t t = 0; t < grid.node_count(); ++t) {
        const auto idx = grid.multi_index(t);
        long best = -1;
        for (const auto& off : lattice.offsets) {
            long sq = 0;
            for (int a = 0; a < lattice.dim; ++a) {
                const long d = minimal_image(idx[a] - off[a], q);
                sq += d * d;
            }
            if (best < 0 || sq < best) best = sq;
        }
        worst = std::max(worst, lattice.spacing * std::sqrt(static_cast<double>(best)));
    }
    return worst;
}

// -- LFN ---------------------------------------------------------------------

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void save_lfn(const SampledFunction& phi, std::ostream& out, std::span<const std::string> comments) {
    const GridSpec& g = phi.grid;
    out << "lfn 1\n";
    out << "dim=" << g.dim() << "\n";
    if (g.is_box())
        out << "kind=box radius=" << format_double(g.size()) << "\n";
    else
        out << "kind=torus period=" << format_double(g.size()) << "\n";
    out << "shape=";
    for (int a = 0; a < g.dim(); ++a) out << (a ? " " : "") << g.points_per_axis();
    out << "\n";
    out << "spacing=" << format_double(g.spacing()) << "\n";
    out << "clamped=" << (phi.range_clamped ? 1 : 0) << "\n";
    for (const auto& c : comments) out << "#" << c << "\n";
    const auto m = static_cast<std::size_t>(g.points_per_axis());
    for (std::size_t i = 0; i < phi.values.size(); ++i) {
        out << format_double(phi.values[i]) << ((i + 1) % m == 0 ? "\n" : " ");
    }
}

void save_lfn(const SampledFunction& phi, const std::string& path, std::span<const std::string> comments) {
    std::ofstream f(path);
    if (!f) throw Error("lfn: cannot open '" + path + "' for writing");
    save_lfn(phi, f, comments);
    if (!f) throw Error("lfn: write failed for '" + path + "'");
}

namespace {

std::string expect_key(const std::string& token, const std::string& key) {
    const std::string prefix = key + "=";
    if (token.rfind(prefix, 0) != 0) throw Error("lfn: expected '" + prefix + "', got '" + token + "'");
    return token.substr(prefix.size());
}

double parse_double(const std::string& s, const char* what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw Error("");
        return v;
    } catch (...) {
        throw Error(std::string("lfn: malformed ") + what + " '" + s + "'");
    }
}

long parse_int(const std::string& s, const char* what) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw Error("");
        return v;
    } catch (...) {
        throw Error(std::string("lfn: malformed ") + what + " '" + s + "'");
    }
}

}  // namespace

LfnFile read_lfn(std::istream& in) {
    LfnFile file;
    std::vector<std::string> header;
    std::string body;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] == '#') {
            file.comments.push_back(line.substr(1));
            continue;
        }
        if (header.size() < 6) {
            header.push_back(line);
        } else {
            body += line;
            body += '\n';
        }
    }
    if (header.size() < 6) throw Error("lfn: truncated header");
    if (header[0] != "lfn 1") throw Error("lfn: bad magic line '" + header[0] + "'");

    const long dim = parse_int(expect_key(header[1], "dim"), "dim");
    if (dim < 1) throw Error("lfn: dim must be >= 1");

    std::istringstream kind_line(header[2]);
    std::string kind_tok, size_tok;
    kind_line >> kind_tok >> size_tok;
    const std::string kind = expect_key(kind_tok, "kind");
    double size = 0.0;
    DomainKind dk;
    if (kind == "box") {
        dk = DomainKind::Box;
        size = parse_double(expect_key(size_tok, "radius"), "radius");
    } else if (kind == "torus") {
        dk = DomainKind::Torus;
        size = parse_double(expect_key(size_tok, "period"), "period");
    } else {
        throw Error("lfn: unknown kind '" + kind + "'");
    }

    std::istringstream shape_line(header[3]);
    std::string shape_tok;
    shape_line >> shape_tok;
    std::vector<long> shape{parse_int(expect_key(shape_tok, "shape"), "shape")};
    std::string extra;
    while (shape_line >> extra) shape.push_back(parse_int(extra, "shape"));
    if (static_cast<long>(shape.size()) != dim) throw Error("lfn: shape has wrong number of axes");
    for (long s : shape)
        if (s != shape[0]) throw Error("lfn: only equal points per axis are supported");

    const double spacing = parse_double(expect_key(header[4], "spacing"), "spacing");
    const long clamped = parse_int(expect_key(header[5], "clamped"), "clamped");
    if (clamped != 0 && clamped != 1) throw Error("lfn: clamped must be 0 or 1");

    GridSpec grid = make_grid(static_cast<int>(dim), dk, size, static_cast<int>(shape[0]));
    if (dk == DomainKind::Torus && !close_rel(spacing * shape[0], size))
        throw Error("lfn: torus spacing times shape does not equal the period");
    if (dk == DomainKind::Box && !close_rel(spacing * (shape[0] - 1), 2.0 * size))
        throw Error("lfn: box spacing does not match the radius");

    std::istringstream values_in(body);
    std::vector<double> values;
    values.reserve(grid.node_count());
    std::string tok;
    while (values_in >> tok) values.push_back(parse_double(tok, "value"));
    if (values.size() != grid.node_count()) {
        throw Error("lfn: shape declares " + std::to_string(grid.node_count()) + " values but file has " +
                    std::to_string(values.size()));
    }
    file.function = SampledFunction(grid, std::move(values));
    if (clamped == 1 && !file.function.range_clamped)
        throw Error("lfn: clamped=1 but values leave [0,1]");
    return file;
}

LfnFile read_lfn(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("lfn: cannot open '" + path + "'");
    return read_lfn(f);
}

SampledFunction load_lfn(std::istream& in) { return read_lfn(in).function; }

}  // namespace lipfilter
