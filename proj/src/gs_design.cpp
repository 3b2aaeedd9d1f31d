#include "spgs/gs_design.hpp"

#include "spgs/error.hpp"
#include "spgs/kv_file.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace spgs {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_upper_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }
double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw DomainError("normal_quantile: probability outside [0, 1]");
  }
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

std::string to_string(Sides s) {
  switch (s) {
    case Sides::two_sided: return "two_sided";
    case Sides::upper: return "one_sided_upper";
    case Sides::lower: return "one_sided_lower";
  }
  return "two_sided";
}

Sides parse_sides(const std::string& text) {
  if (text == "2" || text == "two_sided" || text == "two-sided") return Sides::two_sided;
  if (text == "1" || text == "upper" || text == "one_sided_upper") return Sides::upper;
  if (text == "lower" || text == "one_sided_lower") return Sides::lower;
  throw ValidationError("unknown sidedness '" + text + "'");
}

// ---------------------------------------------------------------------------
// Spending functions

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("total alpha must lie in (0, 1)");
}

}  // namespace

SpendingFunction SpendingFunction::power(double rho, double alpha, Sides sides) {
  check_alpha(alpha);
  if (!(rho > 0.0) || !std::isfinite(rho)) throw DomainError("power spending needs rho > 0");
  return SpendingFunction(Family::power, rho, alpha, sides);
}

SpendingFunction SpendingFunction::obf_like(double alpha, Sides sides) {
  check_alpha(alpha);
  return SpendingFunction(Family::obf_like, 0.0, alpha, sides);
}

SpendingFunction SpendingFunction::pocock_like(double alpha, Sides sides) {
  check_alpha(alpha);
  return SpendingFunction(Family::pocock_like, 0.0, alpha, sides);
}

SpendingFunction SpendingFunction::custom(std::vector<std::pair<double, double>> points,
                                          double alpha, Sides sides) {
  check_alpha(alpha);
  SpendingFunction sf(Family::custom, 0.0, alpha, sides);
  double last_t = 0.0;
  double last_a = 0.0;
  for (const auto& [t, a] : points) {
    if (!(t > last_t) || t >= 1.0)
      throw DomainError("custom spending: fractions must increase strictly within (0, 1)");
    if (a < last_a || a > alpha)
      throw DomainError("custom spending: cumulative alpha must be nondecreasing and <= alpha");
    last_t = t;
    last_a = a;
  }
  sf.table_ = std::move(points);
  return sf;
}

SpendingFunction SpendingFunction::parse(const std::string& spec, double alpha, Sides sides) {
  const auto colon = spec.find(':');
  const std::string family = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (family == "power") {
    if (arg.empty()) throw ValidationError("power spending needs a rho, e.g. power:3");
    return power(parse_double(arg, "spending rho"), alpha, sides);
  }
  if (family == "obf" || family == "obf_like") return obf_like(alpha, sides);
  if (family == "pocock" || family == "pocock_like") return pocock_like(alpha, sides);
  if (family == "custom") {
    std::vector<std::pair<double, double>> pts;
    std::size_t start = 0;
    while (start < arg.size()) {
      auto end = arg.find(';', start);
      const std::string item = arg.substr(start, end == std::string::npos ? end : end - start);
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ValidationError("custom spending item needs IF=alpha");
      pts.emplace_back(parse_double(item.substr(0, eq), "custom spending fraction"),
                       parse_double(item.substr(eq + 1), "custom spending alpha"));
      if (end == std::string::npos) break;
      start = end + 1;
    }
    return custom(std::move(pts), alpha, sides);
  }
  throw ValidationError("unknown spending function '" + spec + "'");
}

double SpendingFunction::operator()(double t) const {
  if (!(t >= 0.0)) throw DomainError("information fraction must be >= 0");
  if (t == 0.0) return 0.0;
  if (t >= 1.0) return alpha_;
  switch (family_) {
    case Family::power:
      return alpha_ * std::pow(t, rho_);
    case Family::obf_like:
      return std::min(alpha_, 2.0 * normal_upper_tail(normal_quantile(1.0 - alpha_ / 2.0) /
                                                      std::sqrt(t)));
    case Family::pocock_like:
      return alpha_ * std::log1p((std::numbers::e - 1.0) * t);
    case Family::custom: {
      double t0 = 0.0, a0 = 0.0;
      for (const auto& [t1, a1] : table_) {
        if (t <= t1) return a0 + (a1 - a0) * (t - t0) / (t1 - t0);
        t0 = t1;
        a0 = a1;
      }
      return a0 + (alpha_ - a0) * (t - t0) / (1.0 - t0);
    }
  }
  return alpha_;
}

std::string SpendingFunction::describe() const {
  switch (family_) {
    case Family::power: return "power:" + format_number(rho_);
    case Family::obf_like: return "obf";
    case Family::pocock_like: return "pocock";
    case Family::custom: {
      std::string out = "custom:";
      for (std::size_t i = 0; i < table_.size(); ++i) {
        if (i) out += ';';
        out += format_number(table_[i].first) + "=" + format_number(table_[i].second);
      }
      return out;
    }
  }
  return "";
}

// ---------------------------------------------------------------------------
// Recursive integration

ContinuationDensity::ContinuationDensity(Sides sides, double drift, IntegrationOptions options)
    : sides_(sides), drift_(drift), options_(options) {
  if (options_.grid_points < 5) options_.grid_points = 5;
  if (options_.grid_points % 2 == 0) ++options_.grid_points;
}

namespace {

bool checks_upper(Sides s) { return s != Sides::lower; }
bool checks_lower(Sides s) { return s != Sides::upper; }

}  // namespace

ContinuationDensity::Crossing ContinuationDensity::crossing(double t, double c) const {
  if (!(t > t_)) throw DomainError("information fractions must increase");
  Crossing out;
  if (std::isinf(c)) return out;
  const double delta = t - t_;
  const double sd = std::sqrt(delta);
  const double upper_b = c * std::sqrt(t);
  const double lower_b = -upper_b;
  const double shift = drift_ * delta;
  if (stages_ == 0) {
    if (checks_upper(sides_)) out.upper = normal_upper_tail((upper_b - shift) / sd);
    if (checks_lower(sides_)) out.lower = normal_cdf((lower_b - shift) / sd);
    return out;
  }
  const bool up = checks_upper(sides_);
  const bool lo = checks_lower(sides_);
  for (std::size_t j = 0; j < grid_.size(); ++j) {
    const double w = weighted_[j];
    if (w == 0.0) continue;
    const double m = grid_[j] + shift;
    if (up) out.upper += w * normal_upper_tail((upper_b - m) / sd);
    if (lo) out.lower += w * normal_cdf((lower_b - m) / sd);
  }
  return out;
}

void ContinuationDensity::advance(double t, double c) {
  if (!(t > t_)) throw DomainError("information fractions must increase");
  const double delta = t - t_;
  const double sd = std::sqrt(delta);
  const double mean = drift_ * t;
  const double spread = options_.sd_span * std::sqrt(t);
  double lo = mean - spread;
  double hi = mean + spread;
  if (!std::isinf(c)) {
    const double b = c * std::sqrt(t);
    if (checks_upper(sides_)) hi = std::min(hi, b);
    if (checks_lower(sides_)) lo = std::max(lo, -b);
  }

  std::vector<double> grid;
  std::vector<double> weighted;
  if (hi > lo) {
    const int n = options_.grid_points;
    const double h = (hi - lo) / (n - 1);
    grid.resize(n);
    weighted.assign(n, 0.0);
    for (int i = 0; i < n; ++i) grid[i] = lo + h * i;
    grid[n - 1] = hi;
    const double shift = drift_ * delta;
    const double inv_sd = 1.0 / sd;
    const double norm = inv_sd * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (int i = 0; i < n; ++i) {
      double density = 0.0;
      if (stages_ == 0) {
        const double x = (grid[i] - shift) * inv_sd;
        density = norm * std::exp(-0.5 * x * x);
      } else {
        const double target = grid[i] - shift;
        for (std::size_t j = 0; j < grid_.size(); ++j) {
          const double x = (target - grid_[j]) * inv_sd;
          if (x * x < 1400.0) density += weighted_[j] * std::exp(-0.5 * x * x);
        }
        density *= norm;
      }
      const double simpson = (i == 0 || i == n - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      weighted[i] = density * simpson * h / 3.0;
    }
  }
  grid_ = std::move(grid);
  weighted_ = std::move(weighted);
  t_ = t;
  ++stages_;
}

double ContinuationDensity::mass() const {
  if (stages_ == 0) return 1.0;
  double m = 0.0;
  for (double w : weighted_) m += w;
  return m;
}

double solve_boundary(const ContinuationDensity& density, double t, double increment) {
  if (!(increment > 0.0)) return std::numeric_limits<double>::infinity();
  auto crossing = [&](double c) { return density.crossing(t, c).total(); };
  if (crossing(0.0) <= increment) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  while (crossing(hi) > increment) {
    lo = hi;
    hi *= 2.0;
    if (hi > 64.0) return std::numeric_limits<double>::infinity();
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (crossing(mid) > increment)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Designs

namespace {

void check_fractions(const std::vector<double>& fr) {
  if (fr.empty()) throw DomainError("at least one analysis is required");
  double last = 0.0;
  for (double t : fr) {
    if (!(t > last)) throw DomainError("information fractions must be positive and increasing");
    last = t;
  }
  if (last > 1.0) throw DomainError("design information fractions must not exceed 1");
}

}  // namespace

GSDesign boundaries(const SpendingFunction& sf, const std::vector<double>& info_fractions,
                    IntegrationOptions options) {
  check_fractions(info_fractions);
  GSDesign d;
  d.spending = sf;
  d.info_fractions = info_fractions;
  d.integration = options;
  ContinuationDensity density(sf.sides(), 0.0, options);
  double spent = 0.0;
  const int k_max = static_cast<int>(info_fractions.size());
  for (int k = 0; k < k_max; ++k) {
    const double t = info_fractions[k];
    const double cum = k + 1 == k_max ? sf.total_alpha() : sf(t);
    const double c = solve_boundary(density, t, cum - spent);
    d.critical_values.push_back(c);
    d.alpha_spent.push_back(cum);
    spent = cum;
    if (k + 1 < k_max) density.advance(t, c);
  }
  return d;
}

StageProbabilities crossing_probabilities(const GSDesign& design, double drift) {
  StageProbabilities out;
  ContinuationDensity density(design.sides(), drift, design.integration);
  for (int k = 0; k < design.stages(); ++k) {
    const auto cr = density.crossing(design.info_fractions[k], design.critical_values[k]);
    out.upper.push_back(cr.upper);
    out.lower.push_back(cr.lower);
    out.total.push_back(cr.total());
    if (k + 1 < design.stages())
      density.advance(design.info_fractions[k], design.critical_values[k]);
  }
  return out;
}

double drift_for_power(const GSDesign& design, double power) {
  if (!(power > design.total_alpha() && power < 1.0))
    throw DomainError("target power must lie in (alpha, 1)");
  const double sign = design.sides() == Sides::lower ? -1.0 : 1.0;
  auto total = [&](double theta) {
    const auto pr = crossing_probabilities(design, sign * theta);
    double s = 0.0;
    for (double p : pr.total) s += p;
    return s;
  };
  double lo = 0.0;
  double hi = 1.0;
  while (total(hi) < power) {
    lo = hi;
    hi *= 2.0;
    if (hi > 100.0) throw DomainError("power target unreachable");
  }
  for (int it = 0; it < 100 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (total(mid) < power ? lo : hi) = mid;
  }
  return sign * 0.5 * (lo + hi);
}

std::string serialize_design(const GSDesign& d) {
  std::ostringstream out;
  out << "# group sequential design\n";
  out << "format = spgs-design/1\n";
  out << "stages = " << d.stages() << "\n";
  out << "alpha = " << format_number(d.total_alpha()) << "\n";
  out << "sides = " << to_string(d.sides()) << "\n";
  out << "spending = " << d.spending.describe() << "\n";
  out << "info_fractions = " << format_numbers(d.info_fractions) << "\n";
  out << "critical_values = " << format_numbers(d.critical_values) << "\n";
  out << "alpha_spent = " << format_numbers(d.alpha_spent) << "\n";
  out << "grid_points = " << d.integration.grid_points << "\n";
  out << "sd_span = " << format_number(d.integration.sd_span) << "\n";
  if (d.total_information) out << "total_information = " << format_number(*d.total_information) << "\n";
  return out.str();
}

namespace {

GSDesign design_from_kv(const KeyValueFile& kv) {
  if (kv.require("format") != "spgs-design/1")
    throw ValidationError("unsupported design format '" + kv.require("format") + "'");
  GSDesign d;
  const double alpha = kv.number("alpha");
  const Sides sides = parse_sides(kv.require("sides"));
  d.spending = SpendingFunction::parse(kv.require("spending"), alpha, sides);
  d.info_fractions = kv.numbers("info_fractions");
  d.critical_values = kv.numbers("critical_values");
  d.alpha_spent = kv.numbers("alpha_spent");
  d.integration.grid_points = kv.integer_or("grid_points", 4001);
  d.integration.sd_span = kv.number_or("sd_span", 8.0);
  if (kv.has("total_information")) d.total_information = kv.number("total_information");
  const auto k = static_cast<std::size_t>(kv.integer("stages"));
  if (d.info_fractions.size() != k || d.critical_values.size() != k || d.alpha_spent.size() != k)
    throw ValidationError("design lists disagree with 'stages'");
  check_fractions(d.info_fractions);
  return d;
}

}  // namespace

GSDesign parse_design(const std::string& text) { return design_from_kv(KeyValueFile::parse(text)); }

// ---------------------------------------------------------------------------
// Monitoring

std::string to_string(Decision d) {
  switch (d) {
    case Decision::pending: return "pending";
    case Decision::continue_trial: return "continue";
    case Decision::reject: return "reject";
    case Decision::accept: return "accept";
  }
  return "pending";
}

Decision parse_decision(const std::string& text) {
  if (text == "continue") return Decision::continue_trial;
  if (text == "reject") return Decision::reject;
  if (text == "accept") return Decision::accept;
  if (text == "pending") return Decision::pending;
  throw ValidationError("unknown decision '" + text + "'");
}

Monitor::Monitor(GSDesign design)
    : design_(std::move(design)), density_(design_.sides(), 0.0, design_.integration) {}

bool Monitor::finished() const {
  return !stages_.empty() && (stages_.back().decision == Decision::reject ||
                              stages_.back().decision == Decision::accept);
}

int Monitor::rejected_at() const {
  for (std::size_t k = 0; k < stages_.size(); ++k)
    if (stages_[k].decision == Decision::reject) return static_cast<int>(k) + 1;
  return 0;
}

Decision Monitor::add_stage(double info_level, double z, double calendar_time) {
  if (!design_.total_information)
    throw ValidationError("monitoring by information level needs a total information target");
  if (!(info_level > 0.0) || !std::isfinite(info_level))
    throw DomainError("information level must be positive");
  if (!stages_.empty() && !std::isnan(stages_.back().info_level) &&
      !(info_level > stages_.back().info_level))
    throw DomainError("information must increase between analyses");
  return add_stage_fraction(info_level / *design_.total_information, z, calendar_time, info_level);
}

Decision Monitor::add_stage_fraction(double info_fraction, double z, double calendar_time,
                                     double info_level) {
  if (finished()) throw DomainError("monitoring already concluded; no further analyses allowed");
  if (!std::isnan(calendar_time) && !stages_.empty() &&
      !std::isnan(stages_.back().calendar_time) && !(calendar_time > stages_.back().calendar_time))
    throw DomainError("calendar time must increase between analyses");
  if (!(info_fraction > 0.0)) throw DomainError("information fraction must be positive");
  const double t = std::min(info_fraction, 1.0);
  if (!stages_.empty() && !(t > stages_.back().info_fraction))
    throw DomainError("information must increase between analyses");

  if (pending_advance_) {
    density_.advance(stages_.back().info_fraction, stages_.back().boundary);
    pending_advance_ = false;
  }
  const bool final_stage =
      static_cast<int>(stages_.size()) + 1 >= design_.stages() || t >= 1.0;
  const double cum = final_stage ? design_.total_alpha() : design_.spending(t);
  const double c = solve_boundary(density_, t, cum - spent_);

  bool crossed = false;
  switch (design_.sides()) {
    case Sides::two_sided: crossed = std::abs(z) >= c; break;
    case Sides::upper: crossed = z >= c; break;
    case Sides::lower: crossed = z <= -c; break;
  }
  MonitoredStage st;
  st.calendar_time = calendar_time;
  st.info_level = info_level;
  st.info_fraction = t;
  st.boundary = c;
  st.z = z;
  st.alpha_spent = cum;
  st.decision = crossed ? Decision::reject
                        : (final_stage ? Decision::accept : Decision::continue_trial);
  stages_.push_back(st);
  spent_ = cum;
  pending_advance_ = true;
  return st.decision;
}

std::string Monitor::serialize() const {
  std::ostringstream out;
  out << serialize_design(design_);
  out << "# monitoring state: calendar_time,info_level,info_fraction,boundary,z,alpha_spent,decision\n";
  out << "monitor_format = spgs-monitor/1\n";
  out << "completed_stages = " << stages_.size() << "\n";
  for (std::size_t k = 0; k < stages_.size(); ++k) {
    const auto& s = stages_[k];
    out << "stage." << (k + 1) << " = "
        << format_numbers({s.calendar_time, s.info_level, s.info_fraction, s.boundary, s.z,
                           s.alpha_spent})
        << "," << to_string(s.decision) << "\n";
  }
  return out.str();
}

Monitor Monitor::parse(const std::string& text) {
  const auto kv = KeyValueFile::parse(text);
  Monitor m(design_from_kv(kv));
  if (kv.require("monitor_format") != "spgs-monitor/1")
    throw ValidationError("unsupported monitoring state format");
  const int n = kv.integer("completed_stages");
  for (int k = 1; k <= n; ++k) {
    const std::string key = "stage." + std::to_string(k);
    const std::string& line = kv.require(key);
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw ValidationError(key + ": malformed stage record");
    const auto nums = parse_double_list(line.substr(0, comma), key);
    if (nums.size() != 6) throw ValidationError(key + ": expected 7 fields");
    const Decision stored = parse_decision(line.substr(comma + 1));
    const Decision replayed = m.add_stage_fraction(nums[2], nums[4], nums[0], nums[1]);
    if (replayed != stored || m.stages_.back().boundary != nums[3])
      throw ValidationError(key + ": stored decision or boundary does not match the design");
  }
  return m;
}

}  // namespace spgs
