#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "lipfilter/dynamics.hpp"
#include "lipfilter/error.hpp"
#include "lipfilter/filter.hpp"
#include "lipfilter/grid.hpp"
#include "lipfilter/lipcore.hpp"
#include "lipfilter/perturb.hpp"
#include "lipfilter/verify.hpp"

namespace py = pybind11;
using namespace lipfilter;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<double> from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    return {a.data(), a.data() + a.size()};
}

}  // namespace

PYBIND11_MODULE(_lipfilter, m) {
    m.doc() = "Lipschitz filters on sampled grids";

    py::register_exception<Error>(m, "LipfilterError", PyExc_ValueError);

    py::class_<GridSpec>(m, "GridSpec")
        .def_static("box", &GridSpec::box, py::arg("dim"), py::arg("radius"), py::arg("points_per_axis"))
        .def_static("torus", &GridSpec::torus, py::arg("dim"), py::arg("period"), py::arg("points_per_axis"))
        .def_property_readonly("dim", &GridSpec::dim)
        .def_property_readonly("is_torus", &GridSpec::is_torus)
        .def_property_readonly("size", &GridSpec::size)
        .def_property_readonly("spacing", &GridSpec::spacing)
        .def_property_readonly("points_per_axis", &GridSpec::points_per_axis)
        .def_property_readonly("node_count", &GridSpec::node_count)
        .def("coords", &GridSpec::coords)
        .def("distance", &GridSpec::distance)
        .def("__eq__", &GridSpec::operator==)
        .def("__repr__", [](const GridSpec& g) {
            std::ostringstream os;
            os << "GridSpec(" << (g.is_torus() ? "torus" : "box") << ", dim=" << g.dim() << ", size=" << g.size()
               << ", points=" << g.points_per_axis() << ")";
            return os.str();
        });

    py::class_<SampledFunction>(m, "SampledFunction")
        .def(py::init([](const GridSpec& g, const py::array_t<double, py::array::c_style | py::array::forcecast>& v) {
                 return SampledFunction(g, from_array(v));
             }),
             py::arg("grid"), py::arg("values"))
        .def_readonly("grid", &SampledFunction::grid)
        .def_property_readonly("values", [](const SampledFunction& f) { return to_array(f.values); })
        .def("__len__", &SampledFunction::size);

    m.def("random_lipschitz", &random_lipschitz, py::arg("grid"), py::arg("c"), py::arg("seed"));
    m.def(
        "mcshane_extend",
        [](const GridSpec& g, std::vector<std::size_t> nodes, std::vector<double> values, double c) {
            return mcshane_extend(g, NodeData{std::move(nodes), std::move(values)}, c);
        },
        py::arg("grid"), py::arg("nodes"), py::arg("values"), py::arg("c"));
    m.def(
        "lipschitz_constant", [](const SampledFunction& f) { return lipschitz_constant(f).constant; },
        py::arg("phi"));
    m.def("is_lipschitz", &is_lipschitz, py::arg("phi"), py::arg("c"), py::arg("tol") = 1e-12);
    m.def("local_modulus", &local_modulus, py::arg("phi"), py::arg("node"), py::arg("r"));
    m.def("convex_feasibility", &convex_feasibility, py::arg("x"), py::arg("y"), py::arg("c"));
    m.def(
        "torus_shift", [](const SampledFunction& f, std::vector<int> steps) { return torus_shift(f, steps); },
        py::arg("phi"), py::arg("steps"));

    py::class_<FilterPlan>(m, "FilterPlan")
        .def_property_readonly("epsilon", [](const FilterPlan& p) { return p.params.epsilon; })
        .def_property_readonly("c", [](const FilterPlan& p) { return p.params.c; })
        .def_property_readonly("c_prime", [](const FilterPlan& p) { return p.params.c_prime; })
        .def_property_readonly("reach", [](const FilterPlan& p) { return p.params.reach; })
        .def_property_readonly("support_radius", [](const FilterPlan& p) { return p.params.support_radius; })
        .def_property_readonly("coset_count", &FilterPlan::coset_count)
        .def("to_json", &plan_to_json);
    m.def(
        "make_plan",
        [](const GridSpec& g, double epsilon, double c, double c_prime, double lattice_period) {
            const auto stride = coarsest_admissible_stride(epsilon, c_prime, g, lattice_period);
            if (!stride) throw Error("no admissible lattice for this grid and epsilon");
            return build_plan(epsilon, c, c_prime, g, *stride, lattice_period);
        },
        py::arg("grid"), py::arg("epsilon"), py::arg("c"), py::arg("c_prime"), py::arg("lattice_period") = 4.0);
    m.def("apply_filter", &apply_filter, py::arg("phi"), py::arg("plan"));

    m.def(
        "break_invariance",
        [](const SampledFunction& phi, double eps, double c, double cp) {
            const auto r = break_invariance(phi, eps, c, cp);
            return py::make_tuple(r.function, r.delta, r.tau_grid);
        },
        py::arg("phi"), py::arg("epsilon"), py::arg("c"), py::arg("c_prime"),
        "Returns (psi, delta, tau_grid).");

    py::class_<BumpLayout>(m, "BumpLayout")
        .def_readonly("r", &BumpLayout::r)
        .def_readonly("delta", &BumpLayout::delta)
        .def_readonly("epsilon1", &BumpLayout::epsilon1)
        .def_readonly("anchors", &BumpLayout::anchors)
        .def_readonly("chain", &BumpLayout::chain);
    m.def(
        "make_layout",
        [](const GridSpec& g, std::size_t count, double epsilon, double c, double cp) {
            return make_layout(g, count, default_chain(c, cp), epsilon);
        },
        py::arg("grid"), py::arg("count"), py::arg("epsilon"), py::arg("c"), py::arg("c_prime"));
    m.def(
        "multibump_encode",
        [](const SampledFunction& phi, std::vector<double> s, const BumpLayout& layout, double eps) {
            return multibump_encode(phi, s, layout, eps);
        },
        py::arg("phi"), py::arg("s"), py::arg("layout"), py::arg("epsilon"));
    m.def("multibump_decode", &multibump_decode, py::arg("phi_prime"), py::arg("layout"));

    m.def(
        "section_audit",
        [](const GridSpec& g, std::vector<double> B, int n, std::size_t p, double r) {
            const auto action = B.empty() ? TorusAction::free_flow(g) : TorusAction::make(g, n ? n : g.dim(), std::move(B));
            const auto sec = build_local_section(action, p, r);
            py::list rows;
            for (const auto& row : sec.audit)
                rows.append(py::dict(py::arg("name") = row.name, py::arg("pass") = row.pass,
                                     py::arg("measured") = row.measured, py::arg("tolerance") = row.tolerance,
                                     py::arg("witness") = row.witness));
            return rows;
        },
        py::arg("grid"), py::arg("B") = std::vector<double>{}, py::arg("n") = 0, py::arg("p") = 0,
        py::arg("r") = 1.0, "Audit rows of the local section about node p (free flow when B is empty).");

    m.def(
        "save_lfn",
        [](const SampledFunction& f) {
            std::ostringstream os;
            save_lfn(f, os);
            return os.str();
        },
        py::arg("phi"));
    m.def(
        "load_lfn",
        [](const std::string& text) {
            std::istringstream is(text);
            return load_lfn(is);
        },
        py::arg("text"));

    m.def("property_ids", &property_ids);
    m.def(
        "run_verify",
        [](std::uint64_t seed, double eps, double c, double cp, std::vector<std::string> only) {
            VerifyOptions o;
            o.seed = seed;
            o.epsilon = eps;
            o.c = c;
            o.c_prime = cp;
            o.only = std::move(only);
            std::vector<ReportRow> rows;
            {
                py::gil_scoped_release release;
                rows = run_verify(o);
            }
            py::list out;
            for (const auto& r : rows)
                out.append(py::dict(py::arg("id") = r.id, py::arg("anchor") = r.anchor, py::arg("pass") = r.pass,
                                    py::arg("measured") = r.measured, py::arg("tolerance") = r.tolerance,
                                    py::arg("seed") = r.seed, py::arg("witness") = r.witness));
            return out;
        },
        py::arg("seed") = 7, py::arg("epsilon") = 0.5, py::arg("c") = 0.5, py::arg("c_prime") = 1.0,
        py::arg("only") = std::vector<std::string>{});
}
