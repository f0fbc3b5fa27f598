#include "lipfilter/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "lipfilter/error.hpp"
#include "lipfilter/lipcore.hpp"

namespace lipfilter {

namespace {

constexpr double kRadiusSlack = 1e-12;

struct Offset {
    std::vector<int> steps;
    long sq = 0;
};

// Integer offsets with h*sqrt(|k|^2) <= radius, row-major.
std::vector<Offset> offsets_within(int dim, double h, double radius) {
    const int reach = static_cast<int>(std::floor(radius / h + 1e-9));
    const double limit = radius * (1.0 + kRadiusSlack);
    std::vector<Offset> out;
    std::vector<int> k(static_cast<std::size_t>(dim), -reach);
    while (true) {
        long sq = 0;
        for (int v : k) sq += static_cast<long>(v) * v;
        if (h * std::sqrt(static_cast<double>(sq)) <= limit) out.push_back({k, sq});
        int a = dim - 1;
        while (a >= 0 && k[a] == reach) k[a--] = -reach;
        if (a < 0) break;
        ++k[a];
    }
    return out;
}

std::size_t shifted(const GridSpec& g, std::size_t node, std::span<const int> steps) {
    return g.translate(node, steps);
}

std::size_t center_node(const GridSpec& g) {
    std::vector<int> idx(static_cast<std::size_t>(g.dim()), (g.points_per_axis() - 1) / 2);
    return g.flat_index(idx);
}

void require_box(const GridSpec& g, const char* op) {
    if (!g.is_box()) throw Error(std::string(op) + ": expects a box grid");
}

// phi_1 = max(0, phi - min(eps1, slope * dist to the boundary layer)).
std::vector<double> headroom(const SampledFunction& phi, double epsilon1, double slope) {
    const GridSpec& g = phi.grid;
    std::vector<double> out(phi.values.size());
    for (std::size_t t = 0; t < out.size(); ++t) {
        const double bump = std::min(epsilon1, slope * g.steps_to_boundary(t) * g.spacing());
        out[t] = std::max(0.0, phi.values[t] - bump);
    }
    return out;
}

/*
 * Replace the values at nodes strictly inside `pit` of `centre` by
 * min{1, min_u base(u) + slope |t - u|}, u ranging over the ring
 * pit <= |u - centre| <= outer. Every node within `outer` of the centre is
 * either a pit node or a ring node, so the modulus at the centre over
 * radius `outer` is attained at the argmin and equals `slope`.
 */
void carve_pit(const GridSpec& g, const std::vector<double>& base, std::vector<double>& out, std::size_t centre,
               double pit, double outer, double slope) {
    const double h = g.spacing();
    const auto ball = offsets_within(g.dim(), h, outer);
    std::vector<const Offset*> inner;
    std::vector<const Offset*> ring;
    for (const auto& o : ball) (h * std::sqrt(static_cast<double>(o.sq)) < pit ? inner : ring).push_back(&o);
    if (ring.empty()) throw Error("perturb: no grid node in the ring around a pit; refine the grid");

    std::vector<std::size_t> ring_nodes;
    for (const auto* o : ring) ring_nodes.push_back(shifted(g, centre, o->steps));
    for (const auto* ti : inner) {
        double env = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < ring.size(); ++j) {
            long sq = 0;
            for (std::size_t a = 0; a < ti->steps.size(); ++a) {
                const long d = ring[j]->steps[a] - ti->steps[a];
                sq += d * d;
            }
            env = std::min(env, base[ring_nodes[j]] + slope * h * std::sqrt(static_cast<double>(sq)));
        }
        out[shifted(g, centre, ti->steps)] = std::min(1.0, env);
    }
}

double norm_of(const GridSpec& g, std::size_t node) {
    double s = 0.0;
    for (int a = 0; a < g.dim(); ++a) s += g.coord(node, a) * g.coord(node, a);
    return std::sqrt(s);
}

}  // namespace

double grid_tolerance(double c, double h, double delta) { return 2.0 * c * h / delta; }

BreakResult break_invariance(const SampledFunction& phi, double epsilon, double c, double c_prime) {
    const GridSpec& g = phi.grid;
    require_box(g, "break_invariance");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error("break_invariance: requires 0 < eps < 1");
    if (!(c > 0.0 && c < c_prime)) throw Error("break_invariance: requires 0 < c < c'");
    if (!phi.range_clamped) throw Error("break_invariance: values must lie in [0,1]");
    if (!is_lipschitz(phi, c, 1e-12)) throw Error("break_invariance: input is not c-Lipschitz");

    const double r = g.size();
    const double slope = (c_prime - c) / 2.0;
    BreakResult res;
    res.epsilon1 = std::min(epsilon / 4.0, slope * r / 2.0);
    res.delta = 0.95 * std::min(r / 4.0, res.epsilon1 / c_prime);
    if (g.spacing() > res.delta / 4.0)
        throw Error("break_invariance: grid too coarse (h = " + format_double(g.spacing()) + " > delta/4 = " +
                    format_double(res.delta / 4.0) + ")");
    res.tau_grid = grid_tolerance(c_prime, g.spacing(), res.delta);

    const auto base = headroom(phi, res.epsilon1, slope);
    auto out = base;
    carve_pit(g, base, out, center_node(g), res.delta / 2.0, res.delta, c_prime);
    res.function = SampledFunction(g, std::move(out));
    return res;
}

std::array<double, 4> default_chain(double c, double c_prime) {
    return {c, (3.0 * c + c_prime) / 4.0, (c + c_prime) / 2.0, c_prime};
}

BumpLayout make_layout(const GridSpec& grid, std::size_t count, const std::array<double, 4>& chain,
                       double epsilon) {
    require_box(grid, "make_layout");
    if (count == 0) throw Error("make_layout: need at least one anchor");
    const double r = grid.size();
    std::vector<std::size_t> anchors;
    std::vector<double> point(static_cast<std::size_t>(grid.dim()), 0.0);
    for (std::size_t k = 0; k < count; ++k) {
        if (grid.dim() == 1) {
            const std::size_t half = (count + 1) / 2;
            const double mag = 0.225 * r * static_cast<double>(k / 2 + 1) / static_cast<double>(half);
            point[0] = (k % 2 == 0) ? mag : -mag;
        } else {
            const double theta = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
            point[0] = 0.21 * r * std::cos(theta);
            point[1] = 0.21 * r * std::sin(theta);
        }
        anchors.push_back(*grid.nearest_node(point));
    }
    return make_layout(grid, std::move(anchors), chain, epsilon);
}

BumpLayout make_layout(const GridSpec& grid, std::vector<std::size_t> anchors, const std::array<double, 4>& chain,
                       double epsilon) {
    require_box(grid, "make_layout");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error("make_layout: requires 0 < eps < 1");
    BumpLayout layout;
    layout.r = grid.size();
    layout.chain = chain;
    layout.anchors = std::move(anchors);
    layout.epsilon1 = std::min(epsilon / 3.0, (chain[1] - chain[0]) * layout.r / 2.0);

    double bound = std::min(layout.r / 4.0, layout.epsilon1 / chain[3]);
    for (std::size_t k = 0; k < layout.anchors.size(); ++k) {
        bound = std::min(bound, norm_of(grid, layout.anchors[k]) / 3.0);
        for (std::size_t l = k + 1; l < layout.anchors.size(); ++l)
            bound = std::min(bound, grid.distance(layout.anchors[k], layout.anchors[l]) / 3.0);
    }
    layout.delta = 0.95 * bound;
    validate_layout(grid, layout);
    return layout;
}

void validate_layout(const GridSpec& grid, const BumpLayout& layout) {
    require_box(grid, "layout");
    const auto& ch = layout.chain;
    if (!(0.0 < ch[0] && ch[0] < ch[1] && ch[1] < ch[2] && ch[2] < ch[3]))
        throw Error("layout: chain must satisfy 0 < c1 < c2 < c3 < c4");
    if (std::abs(layout.r - grid.size()) > 1e-12 * grid.size()) throw Error("layout: radius does not match grid");
    if (layout.anchors.empty()) throw Error("layout: no anchors");
    for (std::size_t k = 0; k < layout.anchors.size(); ++k) {
        const std::size_t p = layout.anchors[k];
        if (p >= grid.node_count()) throw Error("layout: anchor is not a node");
        const double norm = norm_of(grid, p);
        if (norm == 0.0 || norm > layout.r / 4.0 * (1.0 + 1e-12))
            throw Error("layout: anchors must lie in B_{r/4} minus the origin");
        if (!(layout.delta < norm / 3.0)) throw Error("layout: delta must be below |p_k|/3");
        for (std::size_t l = k + 1; l < layout.anchors.size(); ++l) {
            if (layout.anchors[l] == p) throw Error("layout: anchors must be distinct");
            if (!(layout.delta < grid.distance(p, layout.anchors[l]) / 3.0))
                throw Error("layout: delta must be below |p_k - p_l|/3");
        }
    }
    if (!(layout.delta > 0.0 && layout.delta < layout.r / 4.0)) throw Error("layout: delta must lie in (0, r/4)");
    if (!(ch[3] * layout.delta < layout.epsilon1)) throw Error("layout: requires c4 delta < eps1");
    if (layout.delta < 2.0 * grid.spacing())
        throw Error("layout: grid too coarse (delta = " + format_double(layout.delta) + " < 2h = " +
                    format_double(2.0 * grid.spacing()) + ")");
}

SampledFunction multibump_encode(const SampledFunction& phi, std::span<const double> s, const BumpLayout& layout,
                                 double epsilon, bool certify_input) {
    const GridSpec& g = phi.grid;
    validate_layout(g, layout);
    if (s.size() != layout.anchors.size()) throw Error("multibump_encode: one parameter per anchor expected");
    for (double v : s)
        if (!(v >= 0.0 && v <= 1.0)) throw Error("multibump_encode: parameters must lie in [0,1]");
    if (!(layout.epsilon1 <= epsilon / 3.0 * (1.0 + 1e-12)))
        throw Error("multibump_encode: layout headroom exceeds eps/3");
    if (!phi.range_clamped) throw Error("multibump_encode: values must lie in [0,1]");
    const auto& ch = layout.chain;
    if (certify_input && !is_lipschitz(phi, ch[0], 1e-12))
        throw Error("multibump_encode: input is not c1-Lipschitz");

    const auto base = headroom(phi, layout.epsilon1, ch[1] - ch[0]);
    auto out = base;
    const double d = layout.delta;
    carve_pit(g, base, out, center_node(g), d / 4.0, d / 2.0, ch[3]);
    for (std::size_t k = 0; k < layout.anchors.size(); ++k)
        carve_pit(g, base, out, layout.anchors[k], d / 2.0, d, (1.0 - s[k]) * ch[1] + s[k] * ch[2]);
    return SampledFunction(g, std::move(out));
}

std::vector<double> multibump_decode(const SampledFunction& phi_prime, const BumpLayout& layout) {
    validate_layout(phi_prime.grid, layout);
    const auto& ch = layout.chain;
    std::vector<double> s;
    for (std::size_t p : layout.anchors) {
        const double L = local_modulus(phi_prime, p, layout.delta);
        s.push_back(std::clamp((L - ch[1]) / (ch[2] - ch[1]), 0.0, 1.0));
    }
    return s;
}

std::string layout_to_string(const GridSpec& grid, const BumpLayout& layout) {
    std::ostringstream os;
    os << "r=" << format_double(layout.r) << " delta=" << format_double(layout.delta)
       << " eps1=" << format_double(layout.epsilon1) << " chain=";
    for (std::size_t i = 0; i < 4; ++i) os << (i ? "," : "") << format_double(layout.chain[i]);
    os << " anchors=";
    for (std::size_t k = 0; k < layout.anchors.size(); ++k) {
        if (k) os << ";";
        for (int a = 0; a < grid.dim(); ++a) os << (a ? ":" : "") << format_double(grid.coord(layout.anchors[k], a));
    }
    return os.str();
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    return out;
}

double parse_number(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw Error("layout: bad number '" + s + "'");
    }
    if (used != s.size()) throw Error("layout: bad number '" + s + "'");
    return v;
}

}  // namespace

BumpLayout layout_from_string(const GridSpec& grid, const std::string& text) {
    BumpLayout layout;
    bool seen[5] = {false, false, false, false, false};
    std::istringstream in(text);
    std::string field;
    while (in >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw Error("layout: expected key=value, got '" + field + "'");
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "r") {
            layout.r = parse_number(value);
            seen[0] = true;
        } else if (key == "delta") {
            layout.delta = parse_number(value);
            seen[1] = true;
        } else if (key == "eps1") {
            layout.epsilon1 = parse_number(value);
            seen[2] = true;
        } else if (key == "chain") {
            const auto parts = split(value, ',');
            if (parts.size() != 4) throw Error("layout: chain needs four values");
            for (std::size_t i = 0; i < 4; ++i) layout.chain[i] = parse_number(parts[i]);
            seen[3] = true;
        } else if (key == "anchors") {
            for (const auto& a : split(value, ';')) {
                const auto xs = split(a, ':');
                if (static_cast<int>(xs.size()) != grid.dim()) throw Error("layout: anchor dimension mismatch");
                std::vector<double> p;
                for (const auto& x : xs) p.push_back(parse_number(x));
                const auto node = grid.nearest_node(p);
                if (!node) throw Error("layout: anchor outside the grid");
                layout.anchors.push_back(*node);
            }
            seen[4] = true;
        } else {
            throw Error("layout: unknown key '" + key + "'");
        }
    }
    for (bool b : seen)
        if (!b) throw Error("layout: missing field (need r, delta, eps1, chain, anchors)");
    validate_layout(grid, layout);
    return layout;
}

std::vector<std::vector<double>> sup_metric(std::span<const SampledFunction> functions) {
    const std::size_t n = functions.size();
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!(functions[i].grid == functions[j].grid)) throw Error("sup_metric: functions live on different grids");
            double m = 0.0;
            for (std::size_t t = 0; t < functions[i].values.size(); ++t)
                m = std::max(m, std::abs(functions[i].values[t] - functions[j].values[t]));
            d[i][j] = d[j][i] = m;
        }
    }
    return d;
}

FamilySpace build_cover(std::vector<std::vector<double>> metric, double epsilon) {
    if (!(epsilon > 0.0)) throw Error("build_cover: eps must be positive");
    const std::size_t n = metric.size();
    for (const auto& row : metric)
        if (row.size() != n) throw Error("build_cover: metric must be square");

    FamilySpace fs;
    fs.metric = std::move(metric);
    const double q = epsilon / 4.0;
    for (std::size_t x = 0; x < n; ++x) {
        const bool covered = std::any_of(fs.centers.begin(), fs.centers.end(),
                                         [&](std::size_t c) { return fs.metric[c][x] < q; });
        if (!covered) fs.centers.push_back(x);
    }
    for (std::size_t c : fs.centers) {
        std::vector<std::size_t> members;
        for (std::size_t x = 0; x < n; ++x)
            if (x == c || fs.metric[c][x] < q) members.push_back(x);
        fs.cover.push_back(std::move(members));
    }
    fs.chi.assign(n, std::vector<double>(fs.centers.size(), 0.0));
    for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t k = 0; k < fs.cover.size(); ++k) {
            double d = std::numeric_limits<double>::infinity();
            for (std::size_t y : fs.cover[k]) d = std::min(d, x == y ? 0.0 : fs.metric[x][y]);
            fs.chi[x][k] = std::clamp(1.0 - d / q, 0.0, 1.0);
        }
    }
    return fs;
}

DistinguishedFamily distinguish_family(std::span<const SampledFunction> family, double epsilon, double c,
                                       double c_prime) {
    if (family.empty()) throw Error("distinguish_family: empty family");
    const GridSpec& g = family.front().grid;
    require_box(g, "distinguish_family");
    for (const auto& f : family) {
        if (!(f.grid == g)) throw Error("distinguish_family: members live on different grids");
        if (!f.range_clamped || !is_lipschitz(f, c, 1e-12))
            throw Error("distinguish_family: every member must be c-Lipschitz with values in [0,1]");
    }
    DistinguishedFamily out;
    out.space = build_cover(sup_metric(family), epsilon);
    try {
        out.layout = make_layout(g, out.space.cover.size(), default_chain(c, c_prime), epsilon);
    } catch (const Error& e) {
        throw Error("distinguish_family: cover of " + std::to_string(out.space.cover.size()) +
                    " sets does not fit the grid (" + e.what() + ")");
    }
    out.eta = grid_tolerance(out.layout.chain[3], g.spacing(), out.layout.delta) * out.layout.delta;
    for (std::size_t x = 0; x < family.size(); ++x)
        out.functions.push_back(multibump_encode(family[x], out.space.chi[x], out.layout, epsilon, false));
    return out;
}

std::optional<std::vector<int>> shifted_agreement(const SampledFunction& gx, const SampledFunction& gy, double eta) {
    const GridSpec& g = gx.grid;
    require_box(g, "shifted_agreement");
    if (!(gy.grid == g)) throw Error("shifted_agreement: functions live on different grids");
    const double half = g.size() / 2.0;
    const auto window = offsets_within(g.dim(), g.spacing(), half);
    const std::size_t centre = center_node(g);

    // Box nodes in range: flat index is linear in the multi-index.
    auto flat_offset = [&](const std::vector<int>& k) {
        long off = 0;
        for (int v : k) off = off * g.points_per_axis() + v;
        return off;
    };
    std::vector<long> window_flat;
    for (const auto& o : window) window_flat.push_back(static_cast<long>(centre) + flat_offset(o.steps));

    for (const auto& s : window) {
        const long ds = flat_offset(s.steps);
        bool ok = true;
        for (long t : window_flat) {
            if (std::abs(gx.values[static_cast<std::size_t>(t + ds)] - gy.values[static_cast<std::size_t>(t)]) > eta) {
                ok = false;
                break;
            }
        }
        if (ok) return s.steps;
    }
    return std::nullopt;
}

}  // namespace lipfilter
