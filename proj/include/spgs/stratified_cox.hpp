#pragma once

#include "spgs/survival_data.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace spgs {

/// Right-continuous, nondecreasing step function starting at 0.
class StepFunction {
 public:
  StepFunction() = default;
  /// `times` strictly increasing; `values[k]` is the level on [times[k], times[k+1]).
  StepFunction(std::vector<double> times, std::vector<double> values);

  double operator()(double t) const;
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }
  bool empty() const { return times_.empty(); }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
};

/// Survival data prepared for partial-likelihood work: subjects grouped by
/// stratum and sorted by follow-up time, latest first. Only enrolled subjects
/// (positive follow-up window) are kept.
class CoxData {
 public:
  /// Stratified by arm, covariates Z (the treatment-stratified model).
  static CoxData stratified_by_arm(const Snapshot& snap);
  /// One stratum; design matrix is [treatment indicator, Z].
  static CoxData pooled_with_treatment(const Snapshot& snap);

  CoxData(std::vector<double> time, std::vector<bool> event, std::vector<int> stratum,
          Eigen::MatrixXd z, int num_strata, double calendar_time);

  int num_strata() const { return num_strata_; }
  int num_covariates() const { return static_cast<int>(z_.cols()); }
  int stratum_size(int s) const { return static_cast<int>(order_[s].size()); }
  int stratum_events(int s) const { return events_[s]; }
  double calendar_time() const { return calendar_time_; }

  double time(int j) const { return time_[j]; }
  bool event(int j) const { return event_[j]; }
  auto covariates(int j) const { return z_.row(j); }
  const Eigen::MatrixXd& covariate_matrix() const { return z_; }
  /// Subject indices of stratum `s`, follow-up descending.
  const std::vector<int>& order(int s) const { return order_[s]; }

 private:
  std::vector<double> time_;
  std::vector<bool> event_;
  Eigen::MatrixXd z_;
  std::vector<std::vector<int>> order_;
  std::vector<int> events_;
  int num_strata_ = 0;
  double calendar_time_ = 0.0;
};

/// Normalized risk-set sums at one distinct event time of one stratum:
/// s0 = n_s^-1 sum Y exp(b'Z), s1 = n_s^-1 sum Y exp(b'Z) Z,
/// s2 = n_s^-1 sum Y exp(b'Z) Z Z', with `events` tied failures at `time`.
struct RiskSetSums {
  double time = 0.0;
  int events = 0;
  double s0 = 0.0;
  Eigen::VectorXd s1;
  Eigen::MatrixXd s2;

  Eigen::VectorXd mean() const { return s1 / s0; }
  Eigen::MatrixXd variance() const {
    const Eigen::VectorXd e = mean();
    return s2 / s0 - e * e.transpose();
  }
};

/// Risk-set sums at every distinct event time of stratum `s`, in increasing time order.
std::vector<RiskSetSums> risk_set_sums(const CoxData& data, const Eigen::VectorXd& beta, int s);

struct PartialLikelihood {
  double log_likelihood = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

/// Log partial likelihood (Breslow ties), score U and observed information in one pass.
PartialLikelihood evaluate_partial_likelihood(const CoxData& data, const Eigen::VectorXd& beta);

Eigen::VectorXd partial_score(const Eigen::VectorXd& beta, const Snapshot& snap);
Eigen::MatrixXd observed_information(const Eigen::VectorXd& beta, const Snapshot& snap);
double log_partial_likelihood(const Eigen::VectorXd& beta, const Snapshot& snap);

struct CoxOptions {
  int max_iter = 50;
  double score_tol = 1e-8;
  int max_step_halvings = 10;
  double separation_bound = 50.0;
};

struct StratifiedCoxFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd information;
  /// Breslow baseline cumulative hazard per stratum.
  std::vector<StepFunction> baseline_cum_hazard;
  bool converged = false;
  int iterations = 0;
  double final_score_norm = 0.0;
  double log_likelihood = 0.0;
  /// Newton steps fell back to a pseudo-inverse.
  bool singular_information = false;
  double calendar_time = 0.0;
  std::vector<std::string> warnings;
};

/// Maximum partial likelihood by damped Newton from beta = 0, followed by
/// the Breslow baseline at the optimum.
StratifiedCoxFit fit_cox(const CoxData& data, const CoxOptions& options = {});

/// Treatment-stratified fit at the snapshot's calendar time.
StratifiedCoxFit fit_mple(const Snapshot& snap, const CoxOptions& options = {});

/// Breslow estimator for each stratum at fixed coefficients.
std::vector<StepFunction> breslow_baseline(const CoxData& data, const Eigen::VectorXd& beta);

/// Solves info * x = rhs, falling back to a pseudo-inverse when info is not
/// positive definite. Sets `singular` when the fallback was used.
Eigen::VectorXd solve_information(const Eigen::MatrixXd& info, const Eigen::VectorXd& rhs,
                                  bool* singular = nullptr);
Eigen::MatrixXd invert_information(const Eigen::MatrixXd& info, bool* singular = nullptr);

}  // namespace spgs
