#pragma once

#include "spgs/gs_design.hpp"
#include "spgs/survival_data.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spgs {

enum class CovariateScheme { none, normal1, bernoulli2 };
enum class Method { adjusted = 0, km = 1, cox = 2 };

std::string to_string(CovariateScheme s);
std::string to_string(Method m);
Method parse_method(const std::string& text);

/// Weibull trial with treatment-dependent shape:
/// S(t | Z_W, Z) = exp(-gamma t^alpha), alpha = alpha0 + alpha1 Z_W,
/// gamma = gamma0 exp(beta_W Z_W + beta'Z), beta_j = phi / sqrt(p).
struct Scenario {
  int n0 = 400;
  int n1 = 400;
  double tau = 1.0;  // fixed comparison time t0
  double alpha0 = 2.0;
  double alpha1 = 0.0;
  std::optional<double> gamma0;  // default: control survival at tau (Z = 0) equals 1/2
  std::optional<double> beta_w;  // default: the null value
  CovariateScheme covariates = CovariateScheme::none;
  double phi = 0.0;
  double accrual = 2.0;
  double censor_rate = 0.0;

  // Sequential design.
  double alpha = 0.05;
  Sides sides = Sides::two_sided;
  std::string spending = "power:3";
  std::vector<double> info_fractions{0.5, 0.75, 1.0};
  std::vector<Method> methods{Method::adjusted, Method::km, Method::cox};
  std::optional<double> target_power;

  // Numerical settings.
  int calibration_replicates = 1000;
  int calibration_grid = 21;
  int monitor_grid_points = 401;

  int num_covariates() const;
  double study_length() const { return tau + accrual; }
  double gamma0_value() const;
  double beta_w_value() const;
  SpendingFunction spending_function() const;
  void validate() const;

  static Scenario parse(const std::string& text);
  static Scenario read(const std::filesystem::path& path);
  std::string serialize() const;
};

/// beta_W that equalizes the two arms' survival at tau: -alpha1 * log(tau).
double null_beta_w(const Scenario& s);

/// Data-generating conditional survival at covariate linear predictor beta'Z.
double weibull_survival(const Scenario& s, Arm arm, double linear_predictor, double t);

/// Raw trial: arm-sorted records with entry, min(T, C), event flag, covariates.
Dataset generate_trial(const Scenario& s, std::uint64_t seed);

/// One analysis of a snapshot by a method: (z, information level).
struct StageStatistic {
  double z = 0.0;
  double info_level = 0.0;
};
StageStatistic analyze_stage(const Snapshot& snap, double t0, Method method);

struct RunOptions {
  int workers = 1;
};

struct InformationCalibration {
  std::vector<double> grid;                        // calendar times in [tau, L]
  std::array<std::vector<double>, 3> mean_info;    // per method, isotonic
  std::array<int, 3> failures{};                   // replicate-grid failures
  std::vector<double> analysis_times;
  std::array<double, 3> total_information{};       // mean information at L
  bool smoothed = false;                           // isotonic regression changed a curve
};

/// Monte Carlo information curves u -> E[info(u)] and the calendar times at
/// which the expected information fraction of the adjusted method meets the
/// targets (the last target must be 1, reached at L = tau + accrual).
InformationCalibration calibrate_analysis_times(const Scenario& s,
                                                const std::vector<double>& target_fractions,
                                                int replicates, std::uint64_t seed,
                                                const RunOptions& run = {});

/// Everything a simulated trial needs to be monitored.
struct SimulationDesign {
  std::vector<double> analysis_times;
  GSDesign design;
  std::array<double, 3> total_information{};
};

SimulationDesign make_simulation_design(const Scenario& s, const InformationCalibration& cal);

struct MethodOC {
  Method method = Method::adjusted;
  std::vector<double> cum_rejection;
  std::vector<double> se;
  std::vector<double> mean_info_fraction;
  int failures = 0;
  int used = 0;
};

struct OperatingCharacteristics {
  int replicates = 0;
  std::uint64_t seed = 0;
  std::vector<double> analysis_times;
  std::vector<MethodOC> methods;

  const MethodOC& get(Method m) const;
};

/// Monte Carlo operating characteristics. Deterministic given (scenario,
/// design, replicates, seed) regardless of the worker count. Throws when a
/// method fails on 0.5% or more of the replicates.
OperatingCharacteristics run_oc(const Scenario& s, const SimulationDesign& design,
                                const std::vector<Method>& methods, int replicates,
                                std::uint64_t seed, const RunOptions& run = {});

struct EffectCalibration {
  double beta_delta = 0.0;
  double power = 0.0;
  std::vector<std::pair<double, double>> probes;  // (beta_W, power)
};

struct EffectOptions {
  int replicates = 2000;
  double tolerance = 0.01;
  int max_probes = 30;
  std::uint64_t seed = 1;
  RunOptions run;
};

/// Bisection over beta_W (treatment benefit side of the null) of the
/// adjusted method's Monte Carlo power.
EffectCalibration calibrate_effect(const Scenario& s, const SimulationDesign& design,
                                   double target_power, const EffectOptions& options = {});

std::string oc_to_csv(const OperatingCharacteristics& oc, const SimulationDesign& design);

}  // namespace spgs
