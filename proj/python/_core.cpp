#include "spgs/adjusted_sp.hpp"
#include "spgs/cli.hpp"
#include "spgs/comparators.hpp"
#include "spgs/error.hpp"
#include "spgs/gs_design.hpp"
#include "spgs/stratified_cox.hpp"
#include "spgs/survival_data.hpp"
#include "spgs/trial_sim.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace spgs;

namespace {

py::dict fit_to_dict(const StratifiedCoxFit& fit) {
  py::dict d;
  d["beta"] = fit.beta;
  d["information"] = fit.information;
  d["converged"] = fit.converged;
  d["iterations"] = fit.iterations;
  d["log_likelihood"] = fit.log_likelihood;
  d["warnings"] = fit.warnings;
  py::list base;
  for (const auto& s : fit.baseline_cum_hazard)
    base.append(py::make_tuple(s.times(), s.values()));
  d["baseline_cum_hazard"] = base;
  return d;
}

std::vector<std::string> with_program(std::vector<std::string> args) {
  args.insert(args.begin(), "spgs");
  return args;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Group sequential comparison of covariate-adjusted survival probabilities";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<DegenerateDataError>(m, "DegenerateDataError", base.ptr());
  py::register_exception<SeparationError>(m, "SeparationError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());

  py::enum_<Arm>(m, "Arm").value("control", Arm::control).value("treatment", Arm::treatment);
  py::enum_<Sides>(m, "Sides")
      .value("two_sided", Sides::two_sided)
      .value("upper", Sides::upper)
      .value("lower", Sides::lower);
  py::enum_<Decision>(m, "Decision")
      .value("pending", Decision::pending)
      .value("continue_trial", Decision::continue_trial)
      .value("reject", Decision::reject)
      .value("accept", Decision::accept);

  py::class_<SubjectRecord>(m, "SubjectRecord")
      .def(py::init([](std::string id, Arm arm, double entry, double time, bool event,
                       std::vector<double> z) {
             return SubjectRecord{std::move(id), arm, entry, time, event, std::move(z)};
           }),
           py::arg("id"), py::arg("arm"), py::arg("entry"), py::arg("time"), py::arg("event"),
           py::arg("covariates") = std::vector<double>{})
      .def_readonly("id", &SubjectRecord::id)
      .def_readonly("arm", &SubjectRecord::arm)
      .def_readonly("entry", &SubjectRecord::entry)
      .def_readonly("time", &SubjectRecord::time_on_study)
      .def_readonly("event", &SubjectRecord::event)
      .def_readonly("covariates", &SubjectRecord::covariates);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<std::vector<SubjectRecord>>())
      .def("__len__", &Dataset::size)
      .def("__getitem__",
           [](const Dataset& d, std::size_t i) {
             if (i >= d.size()) throw py::index_error();
             return d[i];
           })
      .def_property_readonly("num_covariates", &Dataset::num_covariates)
      .def("to_csv", [](const Dataset& d) { return to_csv(d); });

  m.def("read_csv", [](const std::filesystem::path& p) { return read_csv(p); });
  m.def("parse_csv", [](const std::string& text) { return parse_csv(text); });

  py::class_<Snapshot>(m, "Snapshot")
      .def_property_readonly("calendar_time", &Snapshot::calendar_time)
      .def("enrolled", &Snapshot::enrolled)
      .def("events", &Snapshot::events)
      .def("__len__", &Snapshot::size);
  m.def("snapshot", &snapshot, py::arg("data"), py::arg("u"));

  m.def("fit_mple", [](const Snapshot& s) { return fit_to_dict(fit_mple(s)); });
  m.def("partial_score", &partial_score);
  m.def("observed_information", &observed_information);
  m.def("log_partial_likelihood", &log_partial_likelihood);

  m.def(
      "compare_sp",
      [](const Snapshot& s, double t0) {
        const auto r = compare_sp(s, t0);
        py::dict d;
        d["t0"] = r.t0;
        d["u"] = r.u;
        d["s_hat"] = r.s_hat;
        d["diff"] = r.diff;
        d["sigma2"] = r.sigma2;
        d["info_level"] = r.info_level;
        d["z"] = r.z;
        d["n"] = r.n;
        d["fit"] = fit_to_dict(r.fit);
        d["warnings"] = r.warnings;
        return d;
      },
      py::arg("snapshot"), py::arg("t0"));

  m.def(
      "km_compare",
      [](const Snapshot& s, double t0) {
        const auto r = km_compare(s, t0);
        py::dict d;
        d["s_hat"] = std::array<double, 2>{r.s_hat[0], r.s_hat[1]};
        d["var"] = std::array<double, 2>{r.var[0], r.var[1]};
        d["diff"] = r.diff;
        d["z"] = r.z;
        d["info_level"] = r.info_level;
        d["zero_variance"] = r.zero_variance;
        d["warnings"] = r.warnings;
        return d;
      },
      py::arg("snapshot"), py::arg("t0"));

  m.def("cox_wald", [](const Snapshot& s) {
    const auto r = cox_wald(s);
    py::dict d;
    d["beta_treatment"] = r.beta_treatment;
    d["se"] = r.se;
    d["z"] = r.z;
    d["info_level"] = r.info_level;
    return d;
  });

  m.def("normal_cdf", &normal_cdf);
  m.def("normal_quantile", &normal_quantile);

  py::class_<SpendingFunction>(m, "SpendingFunction")
      .def_static("parse", &SpendingFunction::parse, py::arg("spec"), py::arg("alpha"),
                  py::arg("sides") = Sides::two_sided)
      .def("__call__", &SpendingFunction::operator())
      .def("describe", &SpendingFunction::describe);

  py::class_<GSDesign>(m, "GSDesign")
      .def_readonly("info_fractions", &GSDesign::info_fractions)
      .def_readonly("critical_values", &GSDesign::critical_values)
      .def_readonly("alpha_spent", &GSDesign::alpha_spent)
      .def_readwrite("total_information", &GSDesign::total_information)
      .def_property_readonly("stages", &GSDesign::stages)
      .def("serialize", [](const GSDesign& d) { return serialize_design(d); })
      .def_static("parse", &parse_design);

  m.def(
      "boundaries",
      [](const std::string& spending, double alpha, const std::vector<double>& fractions,
         Sides sides, int grid_points) {
        IntegrationOptions opts;
        opts.grid_points = grid_points;
        return boundaries(SpendingFunction::parse(spending, alpha, sides), fractions, opts);
      },
      py::arg("spending"), py::arg("alpha"), py::arg("info_fractions"),
      py::arg("sides") = Sides::two_sided, py::arg("grid_points") = 4001);

  m.def("crossing_probabilities", [](const GSDesign& d, double drift) {
    const auto p = crossing_probabilities(d, drift);
    py::dict out;
    out["upper"] = p.upper;
    out["lower"] = p.lower;
    out["total"] = p.total;
    return out;
  });

  py::class_<Monitor>(m, "Monitor")
      .def(py::init<GSDesign>())
      .def("add_stage", &Monitor::add_stage, py::arg("info_level"), py::arg("z"),
           py::arg("calendar_time") = std::numeric_limits<double>::quiet_NaN())
      .def("add_stage_fraction", &Monitor::add_stage_fraction, py::arg("info_fraction"),
           py::arg("z"), py::arg("calendar_time") = std::numeric_limits<double>::quiet_NaN(),
           py::arg("info_level") = std::numeric_limits<double>::quiet_NaN())
      .def_property_readonly("finished", &Monitor::finished)
      .def_property_readonly("rejected_at", &Monitor::rejected_at)
      .def_property_readonly("alpha_spent", &Monitor::alpha_spent)
      .def_property_readonly("boundaries",
                             [](const Monitor& mon) {
                               std::vector<double> c;
                               for (const auto& s : mon.stages()) c.push_back(s.boundary);
                               return c;
                             })
      .def("serialize", &Monitor::serialize)
      .def_static("parse", &Monitor::parse);

  py::class_<Scenario>(m, "Scenario")
      .def_static("parse", &Scenario::parse)
      .def("serialize", &Scenario::serialize)
      .def_readwrite("n0", &Scenario::n0)
      .def_readwrite("n1", &Scenario::n1)
      .def_readwrite("tau", &Scenario::tau)
      .def_readwrite("beta_w", &Scenario::beta_w);
  m.def("generate_trial", &generate_trial, py::arg("scenario"), py::arg("seed"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(with_program(args), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line interface in process: (exit code, stdout, stderr).");
  m.def("sha256_hex", &cli::sha256_hex);
}
