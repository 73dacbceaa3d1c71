#include "cbm/bisim.hpp"
#include "cbm/config.hpp"
#include "cbm/eval.hpp"
#include "cbm/mdp.hpp"
#include "cbm/run.hpp"
#include "cbm/sinkhorn.hpp"
#include "cbm/transport.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace cbm;

namespace {

using Array3 = py::array_t<double, py::array::c_style | py::array::forcecast>;

FiniteMdp mdp_from_arrays(const Array3& transitions, const Eigen::MatrixXd& rewards, double discount) {
    if (transitions.ndim() != 3) throw std::invalid_argument("transitions must have shape (S, A, S)");
    const auto n = static_cast<std::size_t>(transitions.shape(0));
    const auto m = static_cast<std::size_t>(transitions.shape(1));
    if (static_cast<std::size_t>(transitions.shape(2)) != n)
        throw std::invalid_argument("transitions must have shape (S, A, S)");
    if (static_cast<std::size_t>(rewards.rows()) != n || static_cast<std::size_t>(rewards.cols()) != m)
        throw std::invalid_argument("rewards must have shape (S, A)");
    FiniteMdp mdp(n, m, discount);
    auto p = transitions.unchecked<3>();
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t a = 0; a < m; ++a) {
            mdp.reward(s, a) = rewards(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
            auto row = mdp.transition(s, a);
            for (std::size_t t = 0; t < n; ++t) row[t] = p(s, a, t);
        }
    mdp.validate();
    return mdp;
}

py::tuple mdp_to_arrays(const FiniteMdp& mdp) {
    const auto n = static_cast<py::ssize_t>(mdp.n_states());
    const auto m = static_cast<py::ssize_t>(mdp.n_actions());
    py::array_t<double> p({n, m, n});
    Eigen::MatrixXd r(n, m);
    auto pv = p.mutable_unchecked<3>();
    for (py::ssize_t s = 0; s < n; ++s)
        for (py::ssize_t a = 0; a < m; ++a) {
            r(s, a) = mdp.reward(static_cast<std::size_t>(s), static_cast<std::size_t>(a));
            auto row = mdp.transition(static_cast<std::size_t>(s), static_cast<std::size_t>(a));
            for (py::ssize_t t = 0; t < n; ++t) pv(s, a, t) = row[static_cast<std::size_t>(t)];
        }
    return py::make_tuple(p, r);
}

SinkhornOptions sinkhorn_options(double epsilon, std::optional<std::size_t> iterations, double tolerance) {
    SinkhornOptions o;
    o.epsilon = epsilon;
    o.iterations = iterations;
    o.tolerance = tolerance;
    return o;
}

}  // namespace

PYBIND11_MODULE(_cbm, m) {
    m.doc() = "Bisimulation metrics, Sinkhorn codes and prototype clustering";

    py::class_<FiniteMdp>(m, "FiniteMdp")
        .def_property_readonly("n_states", &FiniteMdp::n_states)
        .def_property_readonly("n_actions", &FiniteMdp::n_actions)
        .def_property("discount", &FiniteMdp::discount, &FiniteMdp::set_discount)
        .def("arrays", &mdp_to_arrays, "(transitions[S, A, S], rewards[S, A])")
        .def("__repr__", [](const FiniteMdp& mdp) {
            std::ostringstream s;
            write_mdp(s, mdp);
            return s.str();
        });
    m.def("mdp_from_arrays", &mdp_from_arrays, py::arg("transitions"), py::arg("rewards"), py::arg("discount"));
    m.def("random_mdp", &random_mdp, py::arg("seed"), py::arg("n_states"), py::arg("n_actions"),
          py::arg("discount") = 0.9);
    m.def("load_mdp", &load_mdp, py::arg("path"));
    m.def("save_mdp", &save_mdp, py::arg("path"), py::arg("mdp"));
    m.def(
        "optimal_values",
        [](const FiniteMdp& mdp, double tol) { return value_iteration(mdp, tol).values; }, py::arg("mdp"),
        py::arg("tol") = 1e-12);

    py::class_<BisimMetric>(m, "BisimMetric")
        .def_readonly("dist", &BisimMetric::dist)
        .def_readonly("c", &BisimMetric::c)
        .def_readonly("iterations", &BisimMetric::iterations);
    m.def(
        "bisim_metric",
        [](const FiniteMdp& mdp, double c, double tol) { return bisim_fixed_point(mdp, c, {tol}); },
        py::arg("mdp"), py::arg("c"), py::arg("tol") = 1e-9);

    py::class_<ValueBoundReport>(m, "ValueBoundReport")
        .def_readonly("epsilon", &ValueBoundReport::epsilon)
        .def_readonly("pair_checks", &ValueBoundReport::pair_checks)
        .def_readonly("triple_checks", &ValueBoundReport::triple_checks)
        .def_readonly("min_pair_slack", &ValueBoundReport::min_pair_slack)
        .def_readonly("values", &ValueBoundReport::values)
        .def_property_readonly("violations", [](const ValueBoundReport& r) { return r.violations.size(); })
        .def_property_readonly("ok", &ValueBoundReport::ok);
    m.def("verify_value_bounds", &verify_value_bounds, py::arg("mdp"), py::arg("metric"), py::arg("epsilon"),
          py::arg("tol") = 1e-8, py::arg("value_tol") = 1e-11);
    m.def("median_pairwise_distance", &median_pairwise_distance, py::arg("dist"));

    m.def(
        "optimal_transport",
        [](const std::vector<double>& source, const std::vector<double>& target, const Eigen::MatrixXd& cost) {
            TransportPlan p = optimal_transport(source, target, cost);
            return py::make_tuple(p.cost, p.plan);
        },
        py::arg("source"), py::arg("target"), py::arg("cost"), "Returns (cost, plan).");

    m.def(
        "sinkhorn_codes",
        [](const Eigen::MatrixXd& logits, double epsilon, std::optional<std::size_t> iterations, double tolerance) {
            return codes_from_logits(logits, sinkhorn_options(epsilon, iterations, tolerance)).q;
        },
        py::arg("logits"), py::arg("epsilon") = 0.05, py::arg("iterations") = std::optional<std::size_t>(3),
        py::arg("tolerance") = 1e-10, "iterations=None runs to convergence.");
    m.def(
        "sinkhorn_codes_from_distances",
        [](const Eigen::MatrixXd& distances, double epsilon, std::optional<std::size_t> iterations, double tolerance) {
            return codes_from_distances(distances, sinkhorn_options(epsilon, iterations, tolerance)).q;
        },
        py::arg("distances"), py::arg("epsilon") = 0.05, py::arg("iterations") = std::optional<std::size_t>(3),
        py::arg("tolerance") = 1e-10);

    py::class_<ChReport>(m, "ChReport")
        .def_readonly("ch", &ChReport::ch)
        .def_readonly("between", &ChReport::between)
        .def_readonly("within", &ChReport::within)
        .def_readonly("n_points", &ChReport::n_points)
        .def_readonly("n_clusters", &ChReport::n_clusters)
        .def_readonly("sizes", &ChReport::sizes);
    py::register_exception<DegenerateClustering>(m, "DegenerateClustering", PyExc_ValueError);
    m.def("ch_index", &ch_index, py::arg("points"), py::arg("assignment"), py::arg("cluster_count") = 0,
          "points has one column per sample.");
    m.def("nearest_prototype_assign", &nearest_prototype_assign, py::arg("latents"), py::arg("prototypes"));

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    m.def(
        "resolve_config", [](const std::string& text) { return run_config_text(parse_run_config_text(text)); },
        py::arg("text") = "", "Validates an INI config and returns it with every key filled in.");

    m.def(
        "train",
        [](const std::string& config, std::uint64_t seed, const std::filesystem::path& out, bool overwrite) {
            TrainOutcome o;
            {
                py::gil_scoped_release release;
                o = cmd_train({config, seed, out, overwrite});
            }
            py::list evals;
            for (const auto& e : o.evals) evals.append(py::make_tuple(e.step, e.ch.ch, e.ch.n_clusters));
            return evals;
        },
        py::arg("config"), py::arg("seed"), py::arg("out"), py::arg("overwrite") = false,
        "Runs a training job into `out`; returns [(step, ch, n_clusters)].");
    m.def(
        "evaluate",
        [](const std::filesystem::path& checkpoint, const std::filesystem::path& buffer, std::size_t samples,
           std::uint64_t seed, const std::filesystem::path& out, bool overwrite) {
            EvalResult r = cmd_eval({checkpoint, buffer, samples, seed, out, overwrite});
            return r.ch;
        },
        py::arg("checkpoint"), py::arg("buffer"), py::arg("samples") = 2048, py::arg("seed") = 0, py::arg("out"),
        py::arg("overwrite") = false);
    m.def(
        "verify",
        [](std::size_t n_mdps, std::uint64_t seed, const std::filesystem::path& out, bool overwrite) {
            VerifyControls v;
            v.n_mdps = n_mdps;
            VerifySummary s = cmd_verify(v, seed, out, overwrite);
            return py::dict(py::arg("instances") = s.instances, py::arg("pair_checks") = s.pair_checks,
                            py::arg("triple_checks") = s.triple_checks, py::arg("violations") = s.violations);
        },
        py::arg("n_mdps") = 100, py::arg("seed") = 0, py::arg("out"), py::arg("overwrite") = false);
}
