#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace spgs {

double normal_cdf(double x);
double normal_upper_tail(double x);
double normal_pdf(double x);
double normal_quantile(double p);

enum class Sides { two_sided, upper, lower };

std::string to_string(Sides s);
/// Accepts "2", "two_sided", "1", "upper", "one_sided_upper", "lower", "one_sided_lower".
Sides parse_sides(const std::string& text);

/// Cumulative alpha as a function of the information fraction.
class SpendingFunction {
 public:
  enum class Family { power, obf_like, pocock_like, custom };

  /// alpha * min(1, IF^rho).
  static SpendingFunction power(double rho, double alpha, Sides sides = Sides::two_sided);
  /// Lan-DeMets O'Brien-Fleming type: 2 - 2 Phi(z_{1-alpha/2} / sqrt(IF)).
  static SpendingFunction obf_like(double alpha, Sides sides = Sides::two_sided);
  /// Lan-DeMets Pocock type: alpha * log(1 + (e - 1) IF).
  static SpendingFunction pocock_like(double alpha, Sides sides = Sides::two_sided);
  /// Piecewise-linear through (0, 0), the given points, and (1, alpha).
  static SpendingFunction custom(std::vector<std::pair<double, double>> points, double alpha,
                                 Sides sides = Sides::two_sided);

  /// "power:3", "obf", "pocock", "custom:0.5=0.01;0.75=0.02".
  static SpendingFunction parse(const std::string& spec, double alpha, Sides sides);

  double operator()(double info_fraction) const;

  Family family() const { return family_; }
  double rho() const { return rho_; }
  double total_alpha() const { return alpha_; }
  Sides sides() const { return sides_; }
  std::string describe() const;

 private:
  SpendingFunction(Family f, double rho, double alpha, Sides sides)
      : family_(f), rho_(rho), alpha_(alpha), sides_(sides) {}
  Family family_;
  double rho_ = 0.0;
  double alpha_ = 0.05;
  Sides sides_ = Sides::two_sided;
  std::vector<std::pair<double, double>> table_;
};

struct IntegrationOptions {
  int grid_points = 4001;  // Simpson grid per stage, forced odd
  double sd_span = 8.0;
};

/// Propagates the continuation sub-density of the score process
/// B(t) = Z(t) sqrt(t), a Brownian motion with drift `drift` per unit
/// information fraction, through successive analyses.
class ContinuationDensity {
 public:
  ContinuationDensity(Sides sides, double drift, IntegrationOptions options = {});

  /// Probability of first crossing at the next analysis (information fraction
  /// `t`, boundary `c` on the Z scale), split by direction.
  struct Crossing {
    double upper = 0.0;
    double lower = 0.0;
    double total() const { return upper + lower; }
  };
  Crossing crossing(double t, double c) const;

  /// Records the next analysis: the density becomes that of B(t) restricted
  /// to paths that have not crossed at any analysis so far.
  void advance(double t, double c);

  /// Probability mass still in the continuation region.
  double mass() const;
  double last_fraction() const { return t_; }
  int stages() const { return stages_; }

 private:
  Sides sides_;
  double drift_;
  IntegrationOptions options_;
  double t_ = 0.0;
  int stages_ = 0;
  std::vector<double> grid_;
  std::vector<double> weighted_;  // Simpson weight * density
};

/// Solves the boundary c with crossing(t, c).total() == increment by bisection.
/// Returns +inf for a non-positive increment.
double solve_boundary(const ContinuationDensity& density, double t, double increment);

struct GSDesign {
  SpendingFunction spending = SpendingFunction::power(3.0, 0.05);
  std::vector<double> info_fractions;
  std::vector<double> critical_values;  // Z scale; symmetric +/- for two-sided
  std::vector<double> alpha_spent;      // cumulative
  IntegrationOptions integration;
  std::optional<double> total_information;

  int stages() const { return static_cast<int>(info_fractions.size()); }
  Sides sides() const { return spending.sides(); }
  double total_alpha() const { return spending.total_alpha(); }
};

/// Error-spending critical values at the given increasing information
/// fractions. The last analysis spends whatever alpha remains.
GSDesign boundaries(const SpendingFunction& sf, const std::vector<double>& info_fractions,
                    IntegrationOptions options = {});

struct StageProbabilities {
  std::vector<double> upper;
  std::vector<double> lower;
  std::vector<double> total;
};

/// First-crossing probability at each stage when E[Z_k] = drift * sqrt(IF_k).
StageProbabilities crossing_probabilities(const GSDesign& design, double drift);

/// Drift giving total crossing probability `power` (bisection).
double drift_for_power(const GSDesign& design, double power);

std::string serialize_design(const GSDesign& design);
GSDesign parse_design(const std::string& text);

enum class Decision { pending, continue_trial, reject, accept };
std::string to_string(Decision d);
Decision parse_decision(const std::string& text);

struct MonitoredStage {
  double calendar_time = std::numeric_limits<double>::quiet_NaN();
  double info_level = std::numeric_limits<double>::quiet_NaN();
  double info_fraction = 0.0;
  double boundary = 0.0;
  double z = 0.0;
  double alpha_spent = 0.0;  // cumulative
  Decision decision = Decision::pending;
};

/// Sequential error-spending monitor. Information fractions come from
/// observed information over the design's total information target; the
/// boundary of each new stage is re-solved from the alpha actually spent.
class Monitor {
 public:
  explicit Monitor(GSDesign design);

  /// IF = info_level / total information target. Requires a target.
  Decision add_stage(double info_level, double z,
                     double calendar_time = std::numeric_limits<double>::quiet_NaN());
  /// Observed information fraction supplied directly.
  Decision add_stage_fraction(double info_fraction, double z,
                              double calendar_time = std::numeric_limits<double>::quiet_NaN(),
                              double info_level = std::numeric_limits<double>::quiet_NaN());

  const GSDesign& design() const { return design_; }
  const std::vector<MonitoredStage>& stages() const { return stages_; }
  bool finished() const;
  double alpha_spent() const { return spent_; }
  /// 1-based index of the rejecting stage, or 0.
  int rejected_at() const;

  std::string serialize() const;
  static Monitor parse(const std::string& text);

 private:
  GSDesign design_;
  ContinuationDensity density_;
  std::vector<MonitoredStage> stages_;
  double spent_ = 0.0;
  bool pending_advance_ = false;
};

}  // namespace spgs
