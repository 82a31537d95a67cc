#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "npmix/em.hpp"
#include "npmix/errors.hpp"
#include "npmix/glasso.hpp"
#include "npmix/io.hpp"
#include "npmix/kernels.hpp"
#include "npmix/metrics.hpp"
#include "npmix/selection.hpp"
#include "npmix/simgen.hpp"

namespace py = pybind11;
using namespace npmix;

namespace {

Dataset make_dataset(const Matrix& x, const Vector& z) {
    Dataset d{x, z};
    d.validate();
    return d;
}

GridSpec make_grid(const std::optional<std::vector<double>>& points, const Dataset& d, Index count) {
    if (points) {
        GridSpec g{*points};
        g.validate(1);
        return g;
    }
    return GridSpec::uniform(d.z_min(), d.z_max(), count);
}

EMConfig make_config(const Dataset& d, Index K, double lambda, double h, const std::string& family,
                     const std::optional<std::vector<double>>& grid, Index grid_count, int restarts,
                     std::uint64_t seed, int max_iters, double rel_tol, int threads) {
    EMConfig c;
    c.K = K;
    c.lambda = lambda;
    c.kernel = {parse_kernel_family(family), h};
    c.grid = make_grid(grid, d, grid_count);
    c.restarts = restarts;
    c.seed = seed;
    c.max_iters = max_iters;
    c.rel_tol = rel_tol;
    c.threads = threads;
    return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Kernel-weighted mixtures of Gaussian graphical models";

    auto base = py::register_exception<Error>(m, "NpmixError");
    py::register_exception<InvalidInput>(m, "InvalidInput", base.ptr());
    py::register_exception<EmptyGrid>(m, "EmptyGrid", base.ptr());
    py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base.ptr());
    py::register_exception<NotPositiveDefinite>(m, "NotPositiveDefinite", base.ptr());
    py::register_exception<DegenerateScatter>(m, "DegenerateScatter", base.ptr());
    py::register_exception<AllWeightsZero>(m, "AllWeightsZero", base.ptr());
    py::register_exception<AllInitializationsFailed>(m, "AllInitializationsFailed", base.ptr());

    py::class_<GlassoSolution>(m, "GlassoSolution")
        .def_readonly("theta", &GlassoSolution::theta)
        .def_readonly("w", &GlassoSolution::w)
        .def_readonly("iterations", &GlassoSolution::iterations)
        .def_readonly("kkt_residual", &GlassoSolution::kkt_residual)
        .def_readonly("certified", &GlassoSolution::certified);

    m.def("glasso", [](const Matrix& scatter, double lambda) { return glasso_solve({scatter, lambda}); },
          py::arg("scatter"), py::arg("lam"));
    m.def("kkt_residual", [](const Matrix& scatter, double lambda, const Matrix& theta) {
        return kkt_residual({scatter, lambda}, theta);
    }, py::arg("scatter"), py::arg("lam"), py::arg("theta"));

    py::class_<KernelConstants>(m, "KernelConstants")
        .def_readonly("k0", &KernelConstants::k0)
        .def_readonly("int_k2", &KernelConstants::int_k2)
        .def_readonly("tau_k", &KernelConstants::tau_k)
        .def_readonly("df_unit", &KernelConstants::df_unit);
    m.def("kernel_constants", [](const std::string& family, double h, double support_length) {
        return kernel_constants({parse_kernel_family(family), h}, support_length);
    }, py::arg("family"), py::arg("h"), py::arg("support_length"));

    py::class_<MixtureParams>(m, "MixtureParams")
        .def_property_readonly("grid", [](const MixtureParams& p) { return p.grid.points; })
        .def_readonly("pi", &MixtureParams::pi)
        .def_readonly("mu", &MixtureParams::mu)
        .def_readonly("theta", &MixtureParams::theta)
        .def_property_readonly("K", &MixtureParams::components)
        .def_property_readonly("p", &MixtureParams::dim);

    py::class_<FitResult>(m, "FitResult")
        .def_readonly("params", &FitResult::params)
        .def_property_readonly("gamma", [](const FitResult& f) { return f.gamma.gamma; })
        .def_readonly("objective_trace", &FitResult::objective_trace)
        .def_readonly("converged", &FitResult::converged)
        .def_readonly("iterations", &FitResult::iterations)
        .def_readonly("mean_objective", &FitResult::mean_objective);

    m.def("fit", [](const Matrix& x, const Vector& z, Index K, double lambda, double h, const std::string& family,
                    const std::optional<std::vector<double>>& grid, Index grid_count, int restarts,
                    std::uint64_t seed, int max_iters, double rel_tol, int threads) {
        const Dataset d = make_dataset(x, z);
        const EMConfig c = make_config(d, K, lambda, h, family, grid, grid_count, restarts, seed, max_iters, rel_tol,
                                       threads);
        py::gil_scoped_release release;
        return fit(d, c);
    }, py::arg("x"), py::arg("z"), py::arg("K"), py::arg("lam"), py::arg("h"), py::arg("family") = "epanechnikov",
       py::arg("grid") = std::nullopt, py::arg("grid_count") = 11, py::arg("restarts") = 5, py::arg("seed") = 0,
       py::arg("max_iters") = 200, py::arg("rel_tol") = 1e-5, py::arg("threads") = 1);

    m.def("semiparametric_fit", [](const Matrix& x, const Vector& z, Index K, double lambda, double h,
                                   const std::string& family, const std::optional<std::vector<double>>& grid,
                                   Index grid_count, int restarts, std::uint64_t seed) {
        const Dataset d = make_dataset(x, z);
        const EMConfig c = make_config(d, K, lambda, h, family, grid, grid_count, restarts, seed, 200, 1e-5, 1);
        py::gil_scoped_release release;
        return semiparametric_fit(d, c);
    }, py::arg("x"), py::arg("z"), py::arg("K"), py::arg("lam"), py::arg("h"), py::arg("family") = "epanechnikov",
       py::arg("grid") = std::nullopt, py::arg("grid_count") = 11, py::arg("restarts") = 5, py::arg("seed") = 0);

    m.def("finite_mixture_fit", [](const Matrix& x, Index K, double lambda, int restarts, std::uint64_t seed) {
        const Dataset d = make_dataset(x, Vector::Zero(x.rows()));
        py::gil_scoped_release release;
        return finite_mixture_fit(d, K, lambda, restarts, seed);
    }, py::arg("x"), py::arg("K"), py::arg("lam"), py::arg("restarts") = 5, py::arg("seed") = 0);

    m.def("time_varying_fit", [](const Matrix& x, const Vector& z, double lambda, double h, const std::string& family,
                                 const std::optional<std::vector<double>>& grid, Index grid_count) {
        const Dataset d = make_dataset(x, z);
        const TimeVaryingFit tv = time_varying_fit(d, lambda, {parse_kernel_family(family), h},
                                                   make_grid(grid, d, grid_count));
        std::vector<Matrix> thetas;
        for (const auto& s : tv.solutions) thetas.push_back(s.theta);
        py::dict out;
        out["grid"] = tv.grid.points;
        out["mu"] = tv.mu;
        out["theta"] = thetas;
        return out;
    }, py::arg("x"), py::arg("z"), py::arg("lam"), py::arg("h"), py::arg("family") = "epanechnikov",
       py::arg("grid") = std::nullopt, py::arg("grid_count") = 11);

    m.def("select", [](const Matrix& x, const Vector& z, const std::vector<Index>& K_values,
                       const std::vector<double>& lambda_values, const std::vector<double>& h_values, int cv_folds,
                       const std::string& family, const std::optional<std::vector<double>>& grid, Index grid_count,
                       int restarts, std::uint64_t seed, int threads) {
        const Dataset d = make_dataset(x, z);
        SelectionGrid sg{K_values, lambda_values, h_values, cv_folds};
        EMConfig base = make_config(d, 1, 0.0, 1.0, family, grid, grid_count, restarts, seed, 200, 1e-5, threads);
        SelectionResult r;
        {
            py::gil_scoped_release release;
            r = select(d, sg, base);
        }
        py::list records;
        for (const auto& b : r.records) {
            py::dict e;
            e["K"] = b.K;
            e["lam"] = b.lambda;
            e["h"] = b.h;
            e["loglik"] = b.loglik;
            e["df"] = b.df;
            e["bic"] = b.bic;
            e["ok"] = b.ok;
            records.append(e);
        }
        py::dict out;
        out["K"] = r.K;
        out["lam"] = r.lambda;
        out["h"] = r.h;
        out["records"] = records;
        return out;
    }, py::arg("x"), py::arg("z"), py::arg("K_values"), py::arg("lambda_values"), py::arg("h_values"),
       py::arg("cv_folds") = 5, py::arg("family") = "epanechnikov", py::arg("grid") = std::nullopt,
       py::arg("grid_count") = 11, py::arg("restarts") = 5, py::arg("seed") = 0, py::arg("threads") = 1);

    m.def("presets", &preset_names);
    m.def("truth", [](const std::string& preset) { return build_scenario(scenario_preset(preset)).truth; },
          py::arg("preset"));
    m.def("sample", [](const std::string& preset, std::uint64_t seed) {
        const Sample s = sample(build_scenario(scenario_preset(preset)), seed);
        return py::make_tuple(s.data.x, s.data.z, s.labels);
    }, py::arg("preset"), py::arg("seed"));

    m.def("report", [](const MixtureParams& est, const std::string& preset) {
        const EvalReport r = report(est, build_scenario(scenario_preset(preset)).truth);
        py::dict out;
        out["asl"] = r.asl;
        out["afl"] = r.afl;
        out["akl"] = r.akl;
        out["rase_pi"] = r.rase_pi;
        out["atpr"] = r.atpr;
        out["afpr"] = r.afpr;
        out["alignment"] = r.alignment;
        return out;
    }, py::arg("params"), py::arg("preset"));
    m.def("adjacent_identity_rate", &adjacent_identity_rate, py::arg("params"));
}
