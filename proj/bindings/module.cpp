#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "onlinefdr/estimators.hpp"
#include "onlinefdr/procedures.hpp"
#include "onlinefdr/simulate.hpp"
#include "onlinefdr/verifier.hpp"

namespace py = pybind11;
using namespace onlinefdr;

namespace {

ProcedureDefinition make_definition(const std::string& procedure, double level, double pi,
                                    double lambda, std::optional<std::uint64_t> n_batch,
                                    std::optional<std::vector<std::uint64_t>> spec_times,
                                    std::uint64_t stream_length,
                                    std::optional<std::uint64_t> max_rejections,
                                    std::optional<std::uint64_t> max_stage) {
    ProcedureDefinition def;
    def.kind = procedure_from_name(procedure);
    def.config.level = level;
    def.config.spend_fraction = pi;
    def.config.lambda = lambda;
    if (max_rejections || max_stage) {
        StoppingRule rule;
        if (max_rejections) rule.max_rejections = *max_rejections;
        if (max_stage) rule.max_stage = *max_stage;
        def.config.stopping = rule;
    }
    if (def.kind == ProcedureKind::planned_lord || def.kind == ProcedureKind::planned_saffron) {
        if (spec_times) {
            def.schedule = ScheduleSpec::from_spec_times(*spec_times);
        } else {
            def.schedule = batch_schedule(stream_length, n_batch.value_or(1));
        }
    }
    def.config.validate();
    return def;
}

} // namespace

PYBIND11_MODULE(_onlinefdr, m) {
    m.doc() = "Online FDR control: simplified LORD/SAFFRON, alpha-investing, "
              "planning-ahead variants, and verification utilities";

    py::class_<StreamMetrics>(m, "StreamMetrics")
        .def_readonly("t", &StreamMetrics::t)
        .def_readonly("fdp_hat_0", &StreamMetrics::fdp_hat_0)
        .def_readonly("fdp_hat_lambda", &StreamMetrics::fdp_hat_lambda)
        .def_readonly("fdp", &StreamMetrics::fdp)
        .def_readonly("rejections", &StreamMetrics::rejections)
        .def_readonly("true_discoveries", &StreamMetrics::true_discoveries)
        .def_readonly("power", &StreamMetrics::power);

    m.def("normal_cdf", &normal_cdf, py::arg("z"));

    m.def(
        "batch_schedule",
        [](std::uint64_t t_max, std::uint64_t n_batch) {
            return batch_schedule(t_max, n_batch).spec_time;
        },
        py::arg("t_max"), py::arg("n_batch"),
        "Specification times s_i for the previous-batch schedule");

    m.def(
        "run_procedure",
        [](const std::vector<double>& p_values, const std::string& procedure, double level,
           double pi, double lambda, std::optional<std::uint64_t> n_batch,
           std::optional<std::vector<std::uint64_t>> spec_times,
           std::optional<std::uint64_t> max_rejections, std::optional<std::uint64_t> max_stage,
           std::optional<std::vector<bool>> is_null) {
            const auto def = make_definition(procedure, level, pi, lambda, n_batch,
                                             std::move(spec_times), p_values.size(),
                                             max_rejections, max_stage);
            const ProcedureState state =
                run_stream(def, p_values, is_null ? &*is_null : nullptr);

            std::vector<double> alpha;
            std::vector<bool> rejected;
            for (const auto& rec : state.records) {
                alpha.push_back(rec.alpha);
                rejected.push_back(rec.rejected);
            }
            py::dict out;
            out["alpha"] = alpha;
            out["rejected"] = rejected;
            out["rejections"] = state.rejection_count;
            out["fdp_hat_0"] = fdp_hat_0(state, state.size());
            if (family_of(def.kind) == Family::saffron_family) {
                out["fdp_hat_lambda"] = fdp_hat_lambda(state, state.size());
            }
            out["constraints_ok"] = audit_constraints(state, family_of(def.kind));
            return out;
        },
        py::arg("p_values"), py::arg("procedure") = "lord", py::arg("level") = 0.05,
        py::arg("pi") = 0.1, py::arg("lambda_") = 0.5, py::arg("n_batch") = std::nullopt,
        py::arg("spec_times") = std::nullopt, py::arg("max_rejections") = std::nullopt,
        py::arg("max_stage") = std::nullopt, py::arg("is_null") = std::nullopt,
        "Run a full p-value stream through a procedure and return its decisions");

    m.def(
        "check_condition_1",
        [](const std::string& procedure, std::uint64_t trials, std::uint64_t length,
           std::uint64_t seed, std::optional<std::uint64_t> n_batch,
           std::optional<std::uint64_t> max_rejections, std::optional<std::uint64_t> max_stage) {
            const auto def = make_definition(procedure, 0.05, 0.1, 0.5, n_batch, std::nullopt,
                                             length, max_rejections, max_stage);
            const Condition1Report report = check_condition_1(def, trials, length, seed);
            py::dict out;
            out["trials"] = report.trials;
            out["violations"] = report.violations;
            return out;
        },
        py::arg("procedure"), py::arg("trials") = 200, py::arg("length") = 50,
        py::arg("seed") = 1, py::arg("n_batch") = std::nullopt,
        py::arg("max_rejections") = std::nullopt, py::arg("max_stage") = std::nullopt,
        "Rejection-monotonicity perturbation audit; returns trial and violation counts");

    m.def(
        "simulate_cell",
        [](std::uint64_t t_max, double pi1, double rho, std::uint64_t n_batch, double mu_alt,
           std::uint64_t iterations, std::uint64_t seed, double level,
           const std::string& procedure) {
            ScenarioConfig sc;
            sc.t_max = t_max;
            sc.pi1 = pi1;
            sc.rho = rho;
            sc.n_batch = n_batch;
            sc.mu_alt = mu_alt;
            sc.iterations = iterations;
            sc.master_seed = seed;
            sc.level = level;

            NamedProcedure proc;
            proc.name = procedure;
            proc.kind = procedure == "saffron" ? ProcedureKind::planned_saffron
                                               : ProcedureKind::planned_lord;
            const auto cells = run_grid(std::span(&sc, 1), std::span(&proc, 1));
            py::dict out;
            out["fdr"] = cells[0].fdr;
            out["mcse"] = cells[0].mcse;
            out["mfdr"] = cells[0].mfdr;
            out["power"] = cells[0].power;
            return out;
        },
        py::arg("t_max") = 500, py::arg("pi1") = 0.1, py::arg("rho") = 0.3,
        py::arg("n_batch") = 10, py::arg("mu_alt") = 3.0, py::arg("iterations") = 200,
        py::arg("seed") = 20260823, py::arg("level") = 0.05, py::arg("procedure") = "lord",
        "Run one Monte Carlo cell and return fdr, mcse, mfdr and mean power");
}
