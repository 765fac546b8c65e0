#include "cemf/ansatz.hpp"
#include "cemf/configspace.hpp"
#include "cemf/ensembles.hpp"
#include "cemf/flow.hpp"
#include "cemf/harness.hpp"
#include "cemf/relaxation.hpp"
#include "cemf/spectral.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

namespace py = pybind11;
using namespace cemf;

namespace {

EnsembleSpec spec_from_json(const std::string& text) { return nlohmann::json::parse(text).get<EnsembleSpec>(); }

GeneratorPart part_from_string(const std::string& s) {
    if (s == "full") return GeneratorPart::full;
    if (s == "move") return GeneratorPart::move_only;
    if (s == "exchange") return GeneratorPart::exchange_only;
    throw Error("part must be full, move or exchange");
}

} // namespace

PYBIND11_MODULE(_cemf, m) {
    m.doc() = "Colored eigenvector moment flow laboratory (native core)";
    py::register_exception<Error>(m, "CemfError", PyExc_ValueError);

    m.def("sample_goe", [](int N, std::uint64_t seed) { return sample_goe(N, seed).matrix(); }, py::arg("N"),
          py::arg("seed") = 0);
    m.def("sample_ensemble", [](const std::string& spec) { return sample(spec_from_json(spec)).matrix(); },
          py::arg("spec_json"), "Sample from an EnsembleSpec given as JSON text.");
    m.def(
        "eigh",
        [](const Matrix& H) {
            const auto dec = eig_sym(SymmetricMatrix::from_upper(H));
            return py::make_tuple(dec.eigenvalues, dec.frame);
        },
        py::arg("H"));

    py::class_<FreeConvolutionProfile>(m, "FreeConvolutionProfile")
        .def(py::init([](const Vector& eigenvalues, double t) {
                 SpectralDecomposition dec;
                 dec.eigenvalues = eigenvalues;
                 dec.frame = Matrix::Identity(eigenvalues.size(), eigenvalues.size());
                 return std::make_unique<FreeConvolutionProfile>(dec, t);
             }),
             py::arg("eigenvalues"), py::arg("t"))
        .def(
            "m",
            [](const FreeConvolutionProfile& p, double E, double eta) {
                const FixedPoint fp = p.m(HalfPlanePoint{E, eta});
                return py::make_tuple(fp.m, fp.residual);
            },
            py::arg("E"), py::arg("eta"))
        .def("classical_locations", &FreeConvolutionProfile::classical_locations)
        .def("cumulative", &FreeConvolutionProfile::cumulative, py::arg("E"));

    py::class_<ConfigurationSpace>(m, "ConfigurationSpace")
        .def(py::init<int, int>(), py::arg("N"), py::arg("n"))
        .def_property_readonly("sites", &ConfigurationSpace::sites)
        .def_property_readonly("particles", &ConfigurationSpace::particles)
        .def("__len__", &ConfigurationSpace::size)
        .def("config", &ConfigurationSpace::config, py::arg("index"))
        .def("index", &ConfigurationSpace::index, py::arg("x"))
        .def_property_readonly("pi", [](const ConfigurationSpace& s) { return Vector(s.pi()); });

    m.def(
        "assemble_generator",
        [](const ConfigurationSpace& space, const Matrix& c, const std::string& part) {
            return assemble_generator(space, c, part_from_string(part)).dense();
        },
        py::arg("space"), py::arg("coefficients"), py::arg("part") = "full");
    m.def(
        "kernel_projection", [](const ConfigurationSpace& space) { return kernel_projection(space).dense(); },
        py::arg("space"));
    m.def(
        "poincare_constant",
        [](const ConfigurationSpace& space, const Configuration& y, int ell, double upsilon) {
            return poincare_constant(space, y, ell, CoefficientSchedule::inverse_square(space.sites(), upsilon))
                .constant;
        },
        py::arg("space"), py::arg("y"), py::arg("ell"), py::arg("upsilon") = 1.0,
        "Sharp local Poincare constant for c_ij = upsilon / |i-j|^2.");
    m.def("gaussian_wick_moment", &gaussian_wick_moment, py::arg("x"), py::arg("vectors"), py::arg("N"));
    m.def(
        "ansatz_identity",
        [](const Configuration& x, const Configuration& y, const std::vector<Vector>& V, int N) {
            return ansatz_F(x, y, V, N, identity_covariance());
        },
        py::arg("x"), py::arg("y"), py::arg("vectors"), py::arg("N"));

    m.def(
        "run_experiment_json",
        [](const std::string& config) {
            const auto cfg = nlohmann::json::parse(config).get<ExperimentConfig>();
            ExperimentReport report;
            {
                py::gil_scoped_release release;
                report = run_experiment(cfg);
            }
            return report_summary(report).dump();
        },
        py::arg("config_json"), "Run one experiment; returns the JSON summary as text.");
    m.def(
        "default_config_json",
        [](const std::string& kind) { return nlohmann::json(default_config(experiment_kind_from_string(kind))).dump(); },
        py::arg("kind"));
}
