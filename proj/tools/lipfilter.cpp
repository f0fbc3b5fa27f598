// lipfilter command-line tool.
//
// Exit codes: 0 success, 1 failed check or runtime error, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lipfilter/dynamics.hpp"
#include "lipfilter/error.hpp"
#include "lipfilter/filter.hpp"
#include "lipfilter/grid.hpp"
#include "lipfilter/lipcore.hpp"
#include "lipfilter/perturb.hpp"
#include "lipfilter/verify.hpp"

namespace lf = lipfilter;

namespace {

constexpr const char* kLayoutTag = "layout: ";

struct Constants {
    double eps = 0.5;
    double c = 0.5;
    double cprime = 1.0;
};

/// torus:DIM:PERIOD:POINTS or box:DIM:RADIUS:POINTS
lf::GridSpec parse_grid(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream in(text);
    for (std::string item; std::getline(in, item, ':');) parts.push_back(item);
    if (parts.size() != 4) throw lf::Error("--grid expects kind:dim:size:points, got '" + text + "'");
    const int dim = std::stoi(parts[1]);
    const double size = std::stod(parts[2]);
    const int points = std::stoi(parts[3]);
    if (parts[0] == "torus") return lf::GridSpec::torus(dim, size, points);
    if (parts[0] == "box") return lf::GridSpec::box(dim, size, points);
    throw lf::Error("--grid kind must be torus or box, got '" + parts[0] + "'");
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream in(text);
    for (std::string item; std::getline(in, item, ',');) out.push_back(std::stod(item));
    return out;
}

void write_lfn(const lf::SampledFunction& phi, const std::string& out, const std::vector<std::string>& comments = {}) {
    if (out.empty() || out == "-")
        lf::save_lfn(phi, std::cout, comments);
    else
        lf::save_lfn(phi, out, comments);
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + lf::format_double(v[i]);
    return s;
}

void add_constants(CLI::App* cmd, Constants& k) {
    cmd->add_option("--eps", k.eps, "approximation bound epsilon")->capture_default_str();
    cmd->add_option("--c", k.c, "input Lipschitz constant c")->capture_default_str();
    cmd->add_option("--cprime", k.cprime, "output Lipschitz constant c'")->capture_default_str();
}

lf::FilterPlan filter_plan(const lf::GridSpec& g, const Constants& k, double lattice_period) {
    const auto stride = lf::coarsest_admissible_stride(k.eps, k.cprime, g, lattice_period);
    if (!stride) throw lf::Error("no admissible lattice on this grid for eps = " + lf::format_double(k.eps));
    return lf::build_plan(k.eps, k.c, k.cprime, g, *stride, lattice_period);
}

int run(int argc, char** argv) {
    CLI::App app{"Lipschitz filters, multi-bump perturbations and torus-action sections on sampled grids"};
    app.require_subcommand(1);

    std::uint64_t seed = 7;
    std::string grid_text = "torus:1:16:64";
    std::string out;
    std::string input;
    Constants k;

    // gen
    auto* gen = app.add_subcommand("gen", "random c-Lipschitz function on a grid");
    gen->add_option("--grid", grid_text, "torus:DIM:PERIOD:POINTS or box:DIM:RADIUS:POINTS")->capture_default_str();
    gen->add_option("--c", k.c, "Lipschitz constant")->capture_default_str();
    gen->add_option("--seed", seed, "random seed")->capture_default_str();
    gen->add_option("--out", out, "output LFN file (stdout if omitted)");

    // extend
    int keep = 16;
    auto* extend = app.add_subcommand("extend", "McShane extension from a random node subset");
    extend->add_option("input", input, "input LFN file")->required();
    extend->add_option("--c", k.c, "extension constant")->capture_default_str();
    extend->add_option("--keep", keep, "size of the node subset S")->capture_default_str();
    extend->add_option("--seed", seed, "seed for choosing S")->capture_default_str();
    extend->add_option("--out", out, "output LFN file");

    // filter
    double lattice_period = 4.0;
    auto* filter = app.add_subcommand("filter", "apply the Lipschitz filter F");
    filter->add_option("input", input, "input LFN file (torus grid)")->required();
    add_constants(filter, k);
    filter->add_option("--lattice-period", lattice_period, "period M of the lattice")->capture_default_str();
    filter->add_option("--out", out, "output LFN file");

    // encode / decode
    std::string s_text = "0,0.5,1";
    auto* encode = app.add_subcommand("encode", "store s in [0,1]^N as local Lipschitz moduli");
    encode->add_option("input", input, "input LFN file (box grid)")->required();
    encode->add_option("--s", s_text, "comma-separated values in [0,1]")->capture_default_str();
    add_constants(encode, k);
    encode->add_option("--out", out, "output LFN file; the layout is stored as a comment");
    auto* decode = app.add_subcommand("decode", "recover s from an encoded LFN file");
    decode->add_option("input", input, "encoded LFN file")->required();

    // perturb
    auto* perturb = app.add_subcommand("perturb", "break translation invariance near the origin");
    perturb->add_option("input", input, "input LFN file (box grid)")->required();
    add_constants(perturb, k);
    perturb->add_option("--out", out, "output LFN file");

    // section
    std::string b_text;
    double radius = 1.0;
    std::size_t p_node = 0;
    int quadrature = 0;
    auto* section = app.add_subcommand("section", "build and audit a local section of a torus action");
    section->add_option("--grid", grid_text, "torus:DIM:PERIOD:POINTS")->capture_default_str();
    section->add_option("--B", b_text, "action matrix, d x n row-major, comma-separated (default: free flow)");
    section->add_option("--n", "acting dimension n (default: d)");
    section->add_option("--r", radius, "section radius")->capture_default_str();
    section->add_option("--p", p_node, "base node index")->capture_default_str();
    section->add_option("--quadrature", quadrature, "cells per axis (0: default)")->capture_default_str();
    section->add_option("--out", out, "audit CSV (stdout if omitted)");

    // verify
    std::vector<std::string> only;
    std::string out_dir = ".";
    auto* verify = app.add_subcommand("verify", "run the property suite and write report.csv");
    verify->add_option("--seed", seed, "base seed")->capture_default_str();
    add_constants(verify, k);
    verify->add_option("--only", only, "restrict to these property ids (repeatable)");
    verify->add_option("--out", out_dir, "directory for report.csv")->capture_default_str();
    verify->add_flag_callback("--list", [] {
        for (const auto& id : lf::property_ids()) std::cout << id << "\n";
        throw CLI::Success();
    }, "print the property ids and exit");

    // verify-one
    std::string check;
    auto* verify_one = app.add_subcommand("verify-one", "certify a single property of an LFN file");
    verify_one->add_option("check", check, "check name (lipschitz)")->required()->check(CLI::IsMember({"lipschitz"}));
    verify_one->add_option("input", input, "LFN file")->required();
    verify_one->add_option("--cprime", k.cprime, "bound on the Lipschitz constant")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (*gen) {
        write_lfn(lf::random_lipschitz(parse_grid(grid_text), k.c, seed), out);
        return 0;
    }
    if (*extend) {
        const auto phi = lf::read_lfn(input).function;
        std::vector<std::size_t> nodes(phi.grid.node_count());
        for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = i;
        std::mt19937_64 rng(seed);
        std::shuffle(nodes.begin(), nodes.end(), rng);
        nodes.resize(std::min<std::size_t>(nodes.size(), static_cast<std::size_t>(std::max(keep, 1))));
        std::sort(nodes.begin(), nodes.end());
        lf::NodeData data;
        for (std::size_t n : nodes) {
            data.nodes.push_back(n);
            data.values.push_back(phi[n]);
        }
        write_lfn(lf::mcshane_extend(phi.grid, data, k.c), out);
        return 0;
    }
    if (*filter) {
        const auto phi = lf::read_lfn(input).function;
        write_lfn(lf::apply_filter(phi, filter_plan(phi.grid, k, lattice_period)), out);
        return 0;
    }
    if (*encode) {
        const auto phi = lf::read_lfn(input).function;
        const auto s = parse_list(s_text);
        const auto layout = lf::make_layout(phi.grid, s.size(), lf::default_chain(k.c, k.cprime), k.eps);
        const auto enc = lf::multibump_encode(phi, s, layout, k.eps);
        write_lfn(enc, out, {kLayoutTag + lf::layout_to_string(phi.grid, layout)});
        return 0;
    }
    if (*decode) {
        const auto file = lf::read_lfn(input);
        for (const auto& line : file.comments) {
            const auto at = line.find(kLayoutTag);
            if (at == std::string::npos) continue;
            const auto layout = lf::layout_from_string(file.function.grid, line.substr(at + std::string(kLayoutTag).size()));
            std::cout << join(lf::multibump_decode(file.function, layout)) << "\n";
            return 0;
        }
        throw lf::Error("decode: no '" + std::string(kLayoutTag) + "' comment in " + input);
    }
    if (*perturb) {
        const auto phi = lf::read_lfn(input).function;
        const auto res = lf::break_invariance(phi, k.eps, k.c, k.cprime);
        write_lfn(res.function, out,
                  {"delta=" + lf::format_double(res.delta) + " tau=" + lf::format_double(res.tau_grid)});
        return 0;
    }
    if (*section) {
        const auto grid = parse_grid(grid_text);
        lf::TorusAction action = lf::TorusAction::free_flow(grid);
        if (!b_text.empty()) {
            const auto opt_n = section->get_option("--n");
            const int n = opt_n->count() ? opt_n->as<int>() : grid.dim();
            action = lf::TorusAction::make(grid, n, parse_list(b_text));
        }
        const auto sec = lf::build_local_section(action, p_node, radius, quadrature);
        const auto csv = lf::audit_to_csv(sec.audit);
        if (out.empty() || out == "-") {
            std::cout << csv;
        } else {
            std::ofstream f(out);
            f << csv;
            if (!f) throw lf::Error("cannot write " + out);
        }
        return sec.passed() ? 0 : 1;
    }
    if (*verify) {
        lf::VerifyOptions opt;
        opt.seed = seed;
        opt.epsilon = k.eps;
        opt.c = k.c;
        opt.c_prime = k.cprime;
        opt.only = only;
        const auto rows = lf::run_verify(opt);
        std::filesystem::create_directories(out_dir);
        const auto path = std::filesystem::path(out_dir) / "report.csv";
        std::ofstream f(path, std::ios::binary);
        f << lf::report_to_csv(rows);
        if (!f) throw lf::Error("cannot write " + path.string());
        int failed = 0;
        for (const auto& r : rows) {
            if (r.pass) continue;
            ++failed;
            std::cerr << "FAIL " << r.id << " measured=" << lf::format_double(r.measured)
                      << " tolerance=" << lf::format_double(r.tolerance) << " " << r.witness << "\n";
        }
        std::cout << rows.size() - failed << "/" << rows.size() << " properties pass; report " << path.string()
                  << "\n";
        return failed ? 1 : 0;
    }
    if (*verify_one) {
        const auto phi = lf::read_lfn(input).function;
        const auto rep = lf::lipschitz_constant(phi);
        // Above the exhaustive cap the constant is an upper estimate; fall back to the pairwise check.
        const bool exhaustive = rep.method == lf::LipschitzMethod::Exhaustive;
        const bool ok = rep.constant <= k.cprime + 1e-9 || (!exhaustive && lf::is_lipschitz(phi, k.cprime, 1e-9));
        std::cout << "lipschitz " << lf::format_double(rep.constant) << (exhaustive ? "" : " (estimate)")
                  << " bound " << lf::format_double(k.cprime) << (ok ? " pass" : " fail") << "\n";
        return ok ? 0 : 1;
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "lipfilter: " << e.what() << "\n";
        return 1;
    }
}
