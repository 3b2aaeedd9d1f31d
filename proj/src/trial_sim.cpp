#include "spgs/trial_sim.hpp"

#include "parallel.hpp"
#include "spgs/adjusted_sp.hpp"
#include "spgs/comparators.hpp"
#include "spgs/error.hpp"
#include "spgs/kv_file.hpp"
#include "spgs/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

namespace spgs {

namespace {

constexpr std::uint64_t kTrialStreams = 0x7472'6961'6cULL;        // replicate trials
constexpr std::uint64_t kCalibrationStreams = 0x6361'6c69'62ULL;  // information curves
constexpr double kFailureLimit = 0.005;

}  // namespace

double RandomStream::normal() { return normal_quantile(uniform()); }

double RandomStream::exponential(double rate) { return -std::log(uniform()) / rate; }

std::string to_string(CovariateScheme s) {
  switch (s) {
    case CovariateScheme::none: return "none";
    case CovariateScheme::normal1: return "normal1";
    case CovariateScheme::bernoulli2: return "bernoulli2";
  }
  return "none";
}

std::string to_string(Method m) {
  switch (m) {
    case Method::adjusted: return "adjusted";
    case Method::km: return "km";
    case Method::cox: return "cox";
  }
  return "adjusted";
}

Method parse_method(const std::string& text) {
  if (text == "adjusted") return Method::adjusted;
  if (text == "km") return Method::km;
  if (text == "cox") return Method::cox;
  throw ValidationError("unknown method '" + text + "' (expected adjusted, km or cox)");
}

// ---------------------------------------------------------------------------
// Scenario

int Scenario::num_covariates() const {
  switch (covariates) {
    case CovariateScheme::none: return 0;
    case CovariateScheme::normal1: return 1;
    case CovariateScheme::bernoulli2: return 2;
  }
  return 0;
}

double Scenario::gamma0_value() const {
  return gamma0 ? *gamma0 : std::numbers::ln2 / std::pow(tau, alpha0);
}

double Scenario::beta_w_value() const { return beta_w ? *beta_w : null_beta_w(*this); }

SpendingFunction Scenario::spending_function() const {
  return SpendingFunction::parse(spending, alpha, sides);
}

void Scenario::validate() const {
  auto fail = [](const std::string& why) { throw ValidationError("scenario: " + why); };
  if (n0 < 1 || n1 < 1) fail("n0 and n1 must be >= 1");
  if (!(tau > 0.0) || !std::isfinite(tau)) fail("tau must be positive");
  if (!(alpha0 > 0.0)) fail("alpha0 must be positive");
  if (!(alpha0 + alpha1 > 0.0)) fail("alpha0 + alpha1 must be positive");
  if (gamma0 && !(*gamma0 > 0.0)) fail("gamma0 must be positive");
  if (beta_w && !std::isfinite(*beta_w)) fail("beta_w must be finite");
  if (!std::isfinite(phi)) fail("phi must be finite");
  if (!(accrual >= 0.0) || !std::isfinite(accrual)) fail("accrual must be >= 0");
  if (!(censor_rate >= 0.0) || !std::isfinite(censor_rate)) fail("censor_rate must be >= 0");
  if (info_fractions.empty() || info_fractions.back() != 1.0)
    fail("info_fractions must end at 1");
  for (std::size_t k = 0; k < info_fractions.size(); ++k)
    if (!(info_fractions[k] > (k ? info_fractions[k - 1] : 0.0)))
      fail("info_fractions must be positive and increasing");
  if (methods.empty()) fail("at least one method is required");
  if (target_power && !(*target_power > alpha && *target_power < 1.0))
    fail("target_power must lie in (alpha, 1)");
  if (calibration_replicates < 1) fail("calibration_replicates must be >= 1");
  if (calibration_grid < 2) fail("calibration_grid must be >= 2");
  if (monitor_grid_points < 5) fail("monitor_grid_points must be >= 5");
  (void)spending_function();
}

namespace {

// Numbers may be written as log(x) for convenience (phi = log(1.5)).
double scenario_number(const KeyValueFile& kv, const std::string& key) {
  const std::string& v = kv.require(key);
  const std::string where = "line " + std::to_string(kv.line_of(key)) + ": " + key;
  if (v.size() > 5 && v.rfind("log(", 0) == 0 && v.back() == ')')
    return std::log(parse_double(v.substr(4, v.size() - 5), where));
  return parse_double(v, where);
}

}  // namespace

Scenario Scenario::parse(const std::string& text) {
  const auto kv = KeyValueFile::parse(text);
  static const std::set<std::string> known = {
      "n0", "n1", "tau", "alpha0", "alpha1", "gamma0", "beta_w", "covariates", "phi",
      "accrual", "censor_rate", "alpha", "sides", "spending", "info_fractions", "methods",
      "target_power", "calibration_replicates", "calibration_grid", "monitor_grid_points"};
  for (const auto& key : kv.keys())
    if (!known.count(key))
      throw ValidationError("line " + std::to_string(kv.line_of(key)) + ": unknown key '" +
                            key + "'");
  Scenario s;
  auto with_line = [&](const std::string& key, auto&& fn) {
    if (!kv.has(key)) return;
    try {
      fn();
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      if (msg.rfind("line ", 0) == 0) throw;
      throw ValidationError("line " + std::to_string(kv.line_of(key)) + ": " + msg);
    }
  };
  with_line("n0", [&] { s.n0 = kv.integer("n0"); });
  with_line("n1", [&] { s.n1 = kv.integer("n1"); });
  with_line("tau", [&] { s.tau = scenario_number(kv, "tau"); });
  with_line("alpha0", [&] { s.alpha0 = scenario_number(kv, "alpha0"); });
  with_line("alpha1", [&] { s.alpha1 = scenario_number(kv, "alpha1"); });
  with_line("gamma0", [&] {
    if (kv.require("gamma0") != "auto") s.gamma0 = scenario_number(kv, "gamma0");
  });
  with_line("beta_w", [&] {
    if (kv.require("beta_w") != "null") s.beta_w = scenario_number(kv, "beta_w");
  });
  with_line("covariates", [&] {
    const auto& v = kv.require("covariates");
    if (v == "none") s.covariates = CovariateScheme::none;
    else if (v == "normal1") s.covariates = CovariateScheme::normal1;
    else if (v == "bernoulli2") s.covariates = CovariateScheme::bernoulli2;
    else throw ValidationError("covariates must be none, normal1 or bernoulli2");
  });
  with_line("phi", [&] { s.phi = scenario_number(kv, "phi"); });
  with_line("accrual", [&] { s.accrual = scenario_number(kv, "accrual"); });
  with_line("censor_rate", [&] { s.censor_rate = scenario_number(kv, "censor_rate"); });
  with_line("alpha", [&] { s.alpha = scenario_number(kv, "alpha"); });
  with_line("sides", [&] { s.sides = parse_sides(kv.require("sides")); });
  with_line("spending", [&] { s.spending = kv.require("spending"); });
  with_line("info_fractions", [&] { s.info_fractions = kv.numbers("info_fractions"); });
  with_line("methods", [&] {
    s.methods.clear();
    std::stringstream ss(kv.require("methods"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item.erase(0, item.find_first_not_of(' '));
      item.erase(item.find_last_not_of(' ') + 1);
      s.methods.push_back(parse_method(item));
    }
  });
  with_line("target_power", [&] { s.target_power = scenario_number(kv, "target_power"); });
  with_line("calibration_replicates",
            [&] { s.calibration_replicates = kv.integer("calibration_replicates"); });
  with_line("calibration_grid", [&] { s.calibration_grid = kv.integer("calibration_grid"); });
  with_line("monitor_grid_points",
            [&] { s.monitor_grid_points = kv.integer("monitor_grid_points"); });
  s.validate();
  return s;
}

Scenario Scenario::read(const std::filesystem::path& path) {
  std::ifstream probe(path);
  if (!probe) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << probe.rdbuf();
  return parse(buf.str());
}

std::string Scenario::serialize() const {
  std::ostringstream out;
  out << "n0 = " << n0 << "\n";
  out << "n1 = " << n1 << "\n";
  out << "tau = " << format_number(tau) << "\n";
  out << "alpha0 = " << format_number(alpha0) << "\n";
  out << "alpha1 = " << format_number(alpha1) << "\n";
  out << "gamma0 = " << (gamma0 ? format_number(*gamma0) : std::string("auto")) << "\n";
  out << "beta_w = " << (beta_w ? format_number(*beta_w) : std::string("null")) << "\n";
  out << "covariates = " << to_string(covariates) << "\n";
  out << "phi = " << format_number(phi) << "\n";
  out << "accrual = " << format_number(accrual) << "\n";
  out << "censor_rate = " << format_number(censor_rate) << "\n";
  out << "alpha = " << format_number(alpha) << "\n";
  out << "sides = " << to_string(sides) << "\n";
  out << "spending = " << spending << "\n";
  out << "info_fractions = " << format_numbers(info_fractions) << "\n";
  out << "methods = ";
  for (std::size_t i = 0; i < methods.size(); ++i) out << (i ? "," : "") << to_string(methods[i]);
  out << "\n";
  if (target_power) out << "target_power = " << format_number(*target_power) << "\n";
  out << "calibration_replicates = " << calibration_replicates << "\n";
  out << "calibration_grid = " << calibration_grid << "\n";
  out << "monitor_grid_points = " << monitor_grid_points << "\n";
  return out.str();
}

double null_beta_w(const Scenario& s) { return 0.0 - s.alpha1 * std::log(s.tau); }

double weibull_survival(const Scenario& s, Arm arm, double linear_predictor, double t) {
  const int w = arm_index(arm);
  const double shape = s.alpha0 + s.alpha1 * w;
  const double rate = s.gamma0_value() * std::exp(s.beta_w_value() * w + linear_predictor);
  return std::exp(-rate * std::pow(t, shape));
}

// ---------------------------------------------------------------------------
// Data generation

Dataset generate_trial(const Scenario& s, std::uint64_t seed) {
  RandomStream rng(seed);
  const int p = s.num_covariates();
  const double coef = p > 0 ? s.phi / std::sqrt(static_cast<double>(p)) : 0.0;
  const double gamma0 = s.gamma0_value();
  const double beta_w = s.beta_w_value();
  std::vector<SubjectRecord> records;
  records.reserve(static_cast<std::size_t>(s.n0 + s.n1));
  for (int j = 0; j < s.n0 + s.n1; ++j) {
    SubjectRecord r;
    const int w = j < s.n0 ? 0 : 1;
    r.id = std::to_string(j + 1);
    r.arm = Arm(w);
    r.entry = s.accrual * rng.uniform();
    switch (s.covariates) {
      case CovariateScheme::none: break;
      case CovariateScheme::normal1: r.covariates.push_back(rng.normal()); break;
      case CovariateScheme::bernoulli2:
        for (double q : {0.3, 0.5}) {
          const double b = rng.bernoulli(q) ? 1.0 : 0.0;
          r.covariates.push_back((b - q) / std::sqrt(q * (1.0 - q)));
        }
        break;
    }
    double eta = 0.0;
    for (double z : r.covariates) eta += coef * z;
    const double shape = s.alpha0 + s.alpha1 * w;
    const double rate = gamma0 * std::exp(beta_w * w + eta);
    const double event_time = std::pow(-std::log(rng.uniform()) / rate, 1.0 / shape);
    const double censor_time = s.censor_rate > 0.0 ? rng.exponential(s.censor_rate)
                                                   : std::numeric_limits<double>::infinity();
    r.time_on_study = std::min(event_time, censor_time);
    r.event = event_time <= censor_time;
    records.push_back(std::move(r));
  }
  return Dataset(std::move(records));
}

StageStatistic analyze_stage(const Snapshot& snap, double t0, Method method) {
  switch (method) {
    case Method::adjusted: {
      const auto r = compare_sp(snap, t0);
      return {r.z, r.info_level};
    }
    case Method::km: {
      const auto r = km_compare(snap, t0);
      if (r.zero_variance) throw DegenerateDataError("Kaplan-Meier variance is zero");
      return {r.z, r.info_level};
    }
    case Method::cox: {
      const auto r = cox_wald(snap);
      return {r.z, r.info_level};
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Calibration

namespace {

// Pool-adjacent-violators fit of a nondecreasing sequence (equal weights).
std::vector<double> isotonic_increasing(const std::vector<double>& y) {
  std::vector<double> level;
  std::vector<int> count;
  for (double v : y) {
    level.push_back(v);
    count.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const double merged = (level[level.size() - 2] * count[count.size() - 2] +
                             level.back() * count.back()) /
                            (count[count.size() - 2] + count.back());
      const int c = count[count.size() - 2] + count.back();
      level.pop_back();
      count.pop_back();
      level.back() = merged;
      count.back() = c;
    }
  }
  std::vector<double> out;
  for (std::size_t b = 0; b < level.size(); ++b) out.insert(out.end(), count[b], level[b]);
  return out;
}

}  // namespace

InformationCalibration calibrate_analysis_times(const Scenario& s,
                                                const std::vector<double>& target_fractions,
                                                int replicates, std::uint64_t seed,
                                                const RunOptions& run) {
  s.validate();
  if (replicates < 1) throw DomainError("replicates must be >= 1");
  if (target_fractions.empty() || target_fractions.back() != 1.0)
    throw DomainError("target information fractions must end at 1");
  for (std::size_t k = 0; k < target_fractions.size(); ++k)
    if (!(target_fractions[k] > (k ? target_fractions[k - 1] : 0.0)))
      throw DomainError("target information fractions must increase");

  InformationCalibration cal;
  const int g = s.calibration_grid;
  const double lo = s.tau;
  const double hi = s.study_length();
  for (int i = 0; i < g; ++i) cal.grid.push_back(i + 1 == g ? hi : lo + (hi - lo) * i / (g - 1));

  std::vector<bool> wanted(3, false);
  wanted[0] = true;
  for (Method m : s.methods) wanted[static_cast<int>(m)] = true;

  // per replicate: [method][grid] information, NaN on failure
  std::vector<std::array<std::vector<double>, 3>> info(static_cast<std::size_t>(replicates));
  detail::parallel_for(replicates, run.workers, [&](int r) {
    const Dataset data = generate_trial(s, derive_seed(seed, kCalibrationStreams, r));
    auto& slot = info[static_cast<std::size_t>(r)];
    for (int m = 0; m < 3; ++m)
      slot[m].assign(static_cast<std::size_t>(g), std::numeric_limits<double>::quiet_NaN());
    for (int i = 0; i < g; ++i) {
      const Snapshot snap = snapshot(data, cal.grid[i]);
      for (int m = 0; m < 3; ++m) {
        if (!wanted[m]) continue;
        try {
          slot[m][i] = analyze_stage(snap, s.tau, Method(m)).info_level;
        } catch (const Error&) {
        }
      }
    }
  });

  for (int m = 0; m < 3; ++m) {
    if (!wanted[m]) continue;
    std::vector<double> mean(static_cast<std::size_t>(g), 0.0);
    for (int i = 0; i < g; ++i) {
      double sum = 0.0;
      int used = 0;
      for (const auto& slot : info) {
        const double v = slot[m][i];
        if (std::isnan(v)) {
          ++cal.failures[m];
        } else {
          sum += v;
          ++used;
        }
      }
      if (used == 0)
        throw DegenerateDataError("no replicate produced " + to_string(Method(m)) +
                                  " information at calendar time " + format_number(cal.grid[i]));
      mean[i] = sum / used;
    }
    auto iso = isotonic_increasing(mean);
    if (iso != mean) cal.smoothed = true;
    cal.mean_info[m] = std::move(iso);
    cal.total_information[m] = cal.mean_info[m].back();
  }

  const auto& curve = cal.mean_info[0];
  const double total = curve.back();
  for (double target : target_fractions) {
    if (target >= 1.0) {
      cal.analysis_times.push_back(hi);
      continue;
    }
    double u = cal.grid.front();
    for (int i = 0; i < g; ++i) {
      const double f = curve[i] / total;
      if (f >= target) {
        if (i == 0) {
          u = cal.grid[0];
        } else {
          const double f0 = curve[i - 1] / total;
          u = cal.grid[i - 1] + (cal.grid[i] - cal.grid[i - 1]) * (target - f0) / (f - f0);
        }
        break;
      }
    }
    cal.analysis_times.push_back(u);
  }
  for (std::size_t k = 1; k < cal.analysis_times.size(); ++k)
    if (!(cal.analysis_times[k] > cal.analysis_times[k - 1]))
      throw DegenerateDataError("information curve too flat to separate the analysis times");
  return cal;
}

SimulationDesign make_simulation_design(const Scenario& s, const InformationCalibration& cal) {
  SimulationDesign d;
  d.analysis_times = cal.analysis_times;
  d.total_information = cal.total_information;
  IntegrationOptions integ;
  integ.grid_points = s.monitor_grid_points;
  d.design = boundaries(s.spending_function(), s.info_fractions, integ);
  return d;
}

// ---------------------------------------------------------------------------
// Operating characteristics

const MethodOC& OperatingCharacteristics::get(Method m) const {
  for (const auto& oc : methods)
    if (oc.method == m) return oc;
  throw std::out_of_range("method not simulated: " + to_string(m));
}

namespace {

struct ReplicateOutcome {
  std::array<int, 3> rejected_at{};  // 1-based stage, 0 = never
  std::array<bool, 3> failed{};
  std::array<std::vector<double>, 3> fractions;
};

}  // namespace

OperatingCharacteristics run_oc(const Scenario& s, const SimulationDesign& design,
                                const std::vector<Method>& methods, int replicates,
                                std::uint64_t seed, const RunOptions& run) {
  s.validate();
  const int k_max = design.design.stages();
  if (static_cast<int>(design.analysis_times.size()) != k_max)
    throw DomainError("analysis schedule and design disagree on the number of stages");
  if (replicates < 1) throw DomainError("replicates must be >= 1");

  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(replicates));
  detail::parallel_for(replicates, run.workers, [&](int r) {
    const Dataset data = generate_trial(s, derive_seed(seed, kTrialStreams, r));
    auto& out = outcomes[static_cast<std::size_t>(r)];
    std::vector<Snapshot> snaps;
    snaps.reserve(static_cast<std::size_t>(k_max));
    for (double u : design.analysis_times) snaps.push_back(snapshot(data, u));
    for (Method m : methods) {
      const int mi = static_cast<int>(m);
      GSDesign g = design.design;
      g.total_information = design.total_information[mi];
      Monitor monitor(std::move(g));
      try {
        for (int k = 0; k < k_max && !monitor.finished(); ++k) {
          const auto stat = analyze_stage(snaps[k], s.tau, m);
          monitor.add_stage(stat.info_level, stat.z, design.analysis_times[k]);
          out.fractions[mi].push_back(monitor.stages().back().info_fraction);
        }
        out.rejected_at[mi] = monitor.rejected_at();
      } catch (const Error&) {
        out.failed[mi] = true;
      }
    }
  });

  OperatingCharacteristics oc;
  oc.replicates = replicates;
  oc.seed = seed;
  oc.analysis_times = design.analysis_times;
  for (Method m : methods) {
    const int mi = static_cast<int>(m);
    MethodOC moc;
    moc.method = m;
    std::vector<int> rejections(static_cast<std::size_t>(k_max), 0);
    std::vector<double> frac_sum(static_cast<std::size_t>(k_max), 0.0);
    std::vector<int> frac_n(static_cast<std::size_t>(k_max), 0);
    for (const auto& o : outcomes) {
      if (o.failed[mi]) {
        ++moc.failures;
        continue;
      }
      ++moc.used;
      if (o.rejected_at[mi] > 0) ++rejections[o.rejected_at[mi] - 1];
      for (std::size_t k = 0; k < o.fractions[mi].size(); ++k) {
        frac_sum[k] += o.fractions[mi][k];
        ++frac_n[k];
      }
    }
    if (moc.failures >= kFailureLimit * replicates)
      throw Error(to_string(m) + " analysis failed on " + std::to_string(moc.failures) + " of " +
                  std::to_string(replicates) + " replicates");
    int cum = 0;
    for (int k = 0; k < k_max; ++k) {
      cum += rejections[k];
      const double p = static_cast<double>(cum) / moc.used;
      moc.cum_rejection.push_back(p);
      moc.se.push_back(std::sqrt(p * (1.0 - p) / moc.used));
      moc.mean_info_fraction.push_back(frac_n[k] ? frac_sum[k] / frac_n[k]
                                                 : std::numeric_limits<double>::quiet_NaN());
    }
    oc.methods.push_back(std::move(moc));
  }
  return oc;
}

EffectCalibration calibrate_effect(const Scenario& s, const SimulationDesign& design,
                                   double target_power, const EffectOptions& options) {
  if (!(target_power > 0.0 && target_power < 1.0))
    throw DomainError("target power must lie in (0, 1)");
  EffectCalibration out;
  const double null_value = null_beta_w(s);
  auto power_at = [&](double beta) {
    Scenario probe = s;
    probe.beta_w = beta;
    const auto oc = run_oc(probe, design, {Method::adjusted}, options.replicates, options.seed,
                           options.run);
    const double p = oc.get(Method::adjusted).cum_rejection.back();
    out.probes.emplace_back(beta, p);
    return p;
  };
  auto done = [&](double beta, double p) {
    out.beta_delta = beta;
    out.power = p;
    return std::abs(p - target_power) <= options.tolerance;
  };

  double hi = null_value;
  double p_hi = power_at(hi);
  if (done(hi, p_hi)) return out;
  if (p_hi > target_power)
    throw DomainError("target power is below the rejection rate at the null");

  double span = 0.25;
  double lo = null_value - span;
  double p_lo = power_at(lo);
  while (p_lo < target_power) {
    if (done(lo, p_lo)) return out;
    if (p_lo < p_hi - 3.0 * std::sqrt(0.25 / options.replicates))
      throw DomainError("power is not increasing with the treatment effect");
    hi = lo;
    p_hi = p_lo;
    span *= 2.0;
    lo = null_value - span;
    if (span > 16.0 || static_cast<int>(out.probes.size()) >= options.max_probes) {
      std::string msg = "could not bracket the target power; probes:";
      for (auto [b, p] : out.probes) msg += " (" + format_number(b) + ", " + format_number(p) + ")";
      throw DomainError(msg);
    }
    p_lo = power_at(lo);
  }
  if (done(lo, p_lo)) return out;

  while (static_cast<int>(out.probes.size()) < options.max_probes) {
    const double mid = 0.5 * (lo + hi);
    const double p = power_at(mid);
    if (done(mid, p)) return out;
    if (p < target_power)
      hi = mid;
    else
      lo = mid;
  }
  std::string msg = "power calibration did not reach tolerance; probes:";
  for (auto [b, p] : out.probes) msg += " (" + format_number(b) + ", " + format_number(p) + ")";
  throw ConvergenceError(msg, static_cast<int>(out.probes.size()),
                         std::abs(out.power - target_power));
}

std::string oc_to_csv(const OperatingCharacteristics& oc, const SimulationDesign& design) {
  std::ostringstream out;
  out << "stage,method,cum_rejection,se,calendar_time,nominal_alpha,mean_info_fraction,"
         "replicates_used,failures\n";
  for (const auto& m : oc.methods) {
    for (std::size_t k = 0; k < m.cum_rejection.size(); ++k) {
      out << (k + 1) << ',' << to_string(m.method) << ',' << format_number(m.cum_rejection[k])
          << ',' << format_number(m.se[k]) << ',' << format_number(oc.analysis_times[k]) << ','
          << format_number(design.design.alpha_spent[k]) << ','
          << format_number(m.mean_info_fraction[k]) << ',' << m.used << ',' << m.failures
          << '\n';
    }
  }
  return out.str();
}

}  // namespace spgs
