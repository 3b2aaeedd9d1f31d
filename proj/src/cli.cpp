#include "spgs/cli.hpp"

#include "spgs/adjusted_sp.hpp"
#include "spgs/comparators.hpp"
#include "spgs/error.hpp"
#include "spgs/gs_design.hpp"
#include "spgs/kv_file.hpp"
#include "spgs/survival_data.hpp"
#include "spgs/trial_sim.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#ifndef SPGS_VERSION
#define SPGS_VERSION "0.0.0"
#endif

namespace spgs::cli {

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw Error("sha256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i)
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

std::string fixed(double x, int digits = 6) {
  if (std::isnan(x)) return "-";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

// ---------------------------------------------------------------------------

struct DesignArgs {
  double alpha = 0.05;
  std::string sides = "2";
  std::string spending = "power:3";
  std::string fractions = "1";
  int grid_points = 4001;
  double total_info = 0.0;
  std::string out;
};

int cmd_design(const DesignArgs& a, bool alpha_given, std::ostream& out, std::ostream& err) {
  if (!alpha_given) err << "notice: --alpha not given; using 0.05\n";
  const auto fractions = parse_double_list(a.fractions, "--info-fractions");
  IntegrationOptions integ;
  integ.grid_points = a.grid_points;
  const auto sf = SpendingFunction::parse(a.spending, a.alpha, parse_sides(a.sides));
  GSDesign d = boundaries(sf, fractions, integ);
  if (a.total_info > 0.0) d.total_information = a.total_info;

  out << "Group sequential design: " << d.stages() << " stage(s), alpha " << format_number(a.alpha)
      << ", " << to_string(d.sides()) << ", spending " << sf.describe() << "\n";
  out << "stage  info_fraction  critical_value  cum_alpha   stage_alpha\n";
  double prev = 0.0;
  for (int k = 0; k < d.stages(); ++k) {
    char line[160];
    std::snprintf(line, sizeof line, "%5d  %13.6f  %14s  %9.7f  %11.7f\n", k + 1,
                  d.info_fractions[k], fixed(d.critical_values[k]).c_str(), d.alpha_spent[k],
                  d.alpha_spent[k] - prev);
    out << line;
    prev = d.alpha_spent[k];
  }
  const std::string text = serialize_design(d);
  if (!a.out.empty()) {
    write_file(a.out, text);
    out << "design written to " << a.out << "\n";
  } else {
    out << "\n" << text;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string data;
  std::string design;
  std::string state;
  std::string method = "adjusted";
  double t0 = 0.0;
  double u = 0.0;
  double total_info = 0.0;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  const Method method = parse_method(a.method);
  const std::string design_text = read_file(a.design);
  GSDesign design = parse_design(design_text);
  if (a.total_info > 0.0) design.total_information = a.total_info;

  Monitor monitor(design);
  const bool resume = !a.state.empty() && std::filesystem::exists(a.state);
  if (resume) {
    monitor = Monitor::parse(read_file(a.state));
    if (serialize_design(monitor.design()) != serialize_design(design))
      throw ValidationError("state file was created with a different design");
  }
  if (monitor.finished())
    throw ValidationError("monitoring already concluded at stage " +
                          std::to_string(monitor.stages().size()) + " (" +
                          to_string(monitor.stages().back().decision) +
                          "); no further analyses allowed");
  if (!monitor.stages().empty() && !(a.u > monitor.stages().back().calendar_time))
    throw ValidationError("calendar time " + format_number(a.u) +
                          " does not follow the previous analysis at " +
                          format_number(monitor.stages().back().calendar_time));
  if (!(a.t0 > 0.0) || a.t0 > a.u) throw ValidationError("need 0 < t0 <= u");

  const std::string data_text = read_file(a.data);
  const Dataset data = parse_csv(data_text);
  const Snapshot snap = snapshot(data, a.u);
  const StageStatistic stat = analyze_stage(snap, a.t0, method);

  if (design.total_information) {
    monitor.add_stage(stat.info_level, stat.z, a.u);
  } else {
    const auto k = monitor.stages().size();
    if (k >= design.info_fractions.size()) throw ValidationError("all planned stages are complete");
    err << "notice: no total information target; using the planned information fraction\n";
    monitor.add_stage_fraction(design.info_fractions[k], stat.z, a.u, stat.info_level);
  }
  if (!a.state.empty()) write_file(a.state, monitor.serialize());

  out << "Analysis report (" << to_string(method) << ", t0 = " << format_number(a.t0) << ")\n";
  out << "stage  calendar_time   info_level  info_fraction  boundary   statistic  decision\n";
  for (std::size_t k = 0; k < monitor.stages().size(); ++k) {
    const auto& s = monitor.stages()[k];
    char line[200];
    std::snprintf(line, sizeof line, "%5zu  %13s  %11s  %13.6f  %8s  %10s  %s\n", k + 1,
                  fixed(s.calendar_time, 4).c_str(), fixed(s.info_level, 3).c_str(),
                  s.info_fraction, fixed(s.boundary, 4).c_str(), fixed(s.z, 4).c_str(),
                  to_string(s.decision).c_str());
    out << line;
  }
  out << "provenance:\n";
  out << "  data_sha256 = " << sha256_hex(data_text) << "\n";
  out << "  design_sha256 = " << sha256_hex(design_text) << "\n";
  out << "  options = method=" << to_string(method) << " t0=" << format_number(a.t0)
      << " u=" << format_number(a.u);
  if (design.total_information) out << " total_info=" << format_number(*design.total_information);
  out << "\n  version = spgs " << SPGS_VERSION << "\n";

  const Decision d = monitor.stages().back().decision;
  out << "decision: " << to_string(d) << "\n";
  return d == Decision::reject ? kExitReject : kExitOk;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  int replicates = 2000;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out;
  std::string plot_data;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream&) {
  const std::string text = read_file(a.scenario);
  Scenario s = Scenario::parse(text);
  RunOptions run;
  run.workers = a.workers;

  const auto cal = calibrate_analysis_times(s, s.info_fractions, s.calibration_replicates,
                                            a.seed ^ 0x5eedca1ULL, run);
  const SimulationDesign design = make_simulation_design(s, cal);
  std::optional<EffectCalibration> effect;
  if (s.target_power) {
    EffectOptions eo;
    eo.replicates = a.replicates;
    eo.seed = a.seed ^ 0xeffec7ULL;
    eo.run = run;
    effect = calibrate_effect(s, design, *s.target_power, eo);
    s.beta_w = effect->beta_delta;
  }
  const auto oc = run_oc(s, design, s.methods, a.replicates, a.seed, run);

  std::ostringstream csv;
  csv << "# spgs " << SPGS_VERSION << " simulate\n";
  csv << "# scenario_sha256 = " << sha256_hex(text) << "\n";
  csv << "# replicates = " << a.replicates << ", seed = " << a.seed << "\n";
  csv << "# beta_w = " << format_number(s.beta_w_value()) << "\n";
  csv << "# analysis_times = " << format_numbers(design.analysis_times) << "\n";
  csv << "# total_information = adjusted:" << format_number(design.total_information[0])
      << ",km:" << format_number(design.total_information[1])
      << ",cox:" << format_number(design.total_information[2]) << "\n";
  if (effect) csv << "# calibrated_power = " << format_number(effect->power) << "\n";
  csv << oc_to_csv(oc, design);

  if (a.out.empty())
    out << csv.str();
  else
    write_file(a.out, csv.str());

  if (!a.plot_data.empty()) {
    std::ostringstream plot;
    plot << "method,stage,calendar_time,cum_rejection,lower95,upper95,nominal_alpha\n";
    for (const auto& m : oc.methods)
      for (std::size_t k = 0; k < m.cum_rejection.size(); ++k)
        plot << to_string(m.method) << ',' << (k + 1) << ','
             << format_number(oc.analysis_times[k]) << ',' << format_number(m.cum_rejection[k])
             << ',' << format_number(std::max(0.0, m.cum_rejection[k] - 1.96 * m.se[k])) << ','
             << format_number(std::min(1.0, m.cum_rejection[k] + 1.96 * m.se[k])) << ','
             << format_number(design.design.alpha_spent[k]) << '\n';
    write_file(a.plot_data, plot.str());
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Group sequential comparison of covariate-adjusted survival probabilities", "spgs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("spgs ") + SPGS_VERSION);

  DesignArgs design_args;
  auto* design = app.add_subcommand("design", "Compute error-spending critical values");
  auto* alpha_opt = design->add_option("--alpha", design_args.alpha, "Total type I error");
  design->add_option("--sides", design_args.sides, "1 (upper), 2, upper, lower")
      ->capture_default_str();
  design->add_option("--spending", design_args.spending, "power:RHO | obf | pocock | custom:...")
      ->capture_default_str();
  design->add_option("--info-fractions", design_args.fractions, "Comma-separated, increasing")
      ->capture_default_str();
  design->add_option("--grid-points", design_args.grid_points, "Integration grid per stage")
      ->capture_default_str();
  design->add_option("--total-info", design_args.total_info, "Total information target");
  design->add_option("--out", design_args.out, "Write the design file here");

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "Analyze one interim stage of a trial dataset");
  analyze->add_option("data", analyze_args.data, "CSV: id,arm,entry,time,event,z1..zp")
      ->required();
  analyze->add_option("--design", analyze_args.design, "Design file")->required();
  analyze->add_option("--t0", analyze_args.t0, "Fixed survival time compared")->required();
  analyze->add_option("--u", analyze_args.u, "Calendar analysis time")->required();
  analyze->add_option("--method", analyze_args.method, "adjusted | km | cox")
      ->check(CLI::IsMember({"adjusted", "km", "cox"}))
      ->capture_default_str();
  analyze->add_option("--state", analyze_args.state, "Monitoring state file (created/resumed)");
  analyze->add_option("--total-info", analyze_args.total_info,
                      "Total information target (overrides the design file)");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo operating characteristics");
  simulate->add_option("scenario", sim_args.scenario, "Scenario file")->required();
  simulate->add_option("--replicates", sim_args.replicates, "Simulated trials")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  simulate->add_option("--seed", sim_args.seed, "Master seed")->capture_default_str();
  simulate->add_option("--workers", sim_args.workers, "Worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  simulate->add_option("--out", sim_args.out, "Output CSV (default stdout)");
  simulate->add_option("--plot-data", sim_args.plot_data, "Also write plot-ready CSV here");

  std::vector<std::string> owned = args.empty() ? std::vector<std::string>{"spgs"} : args;
  std::vector<char*> argv;
  for (auto& s : owned) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*design) return cmd_design(design_args, alpha_opt->count() > 0, out, err);
    if (*analyze) return cmd_analyze(analyze_args, out, err);
    if (*simulate) return cmd_simulate(sim_args, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace spgs::cli
