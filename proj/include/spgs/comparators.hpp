#pragma once

#include "spgs/stratified_cox.hpp"
#include "spgs/survival_data.hpp"

#include <string>
#include <vector>

namespace spgs {

/// Product-limit estimate for one arm with Greenwood variance on the survival scale.
class KMEstimate {
 public:
  KMEstimate(const Snapshot& snap, Arm arm);

  struct Point {
    double survival = 1.0;
    double variance = 0.0;
  };
  Point at(double t) const;

  Arm arm() const { return arm_; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& survival() const { return survival_; }
  const std::vector<double>& variance() const { return variance_; }
  /// Last time any subject of the arm is at risk.
  double last_at_risk() const { return last_at_risk_; }

 private:
  Arm arm_;
  std::vector<double> times_;
  std::vector<double> survival_;
  std::vector<double> variance_;
  double last_at_risk_ = 0.0;
};

struct KMComparison {
  double t0 = 0.0;
  double s_hat[2] = {1.0, 1.0};
  double var[2] = {0.0, 0.0};
  double diff = 0.0;
  double se = 0.0;
  double z = 0.0;
  double info_level = 0.0;  // 1 / (v0 + v1); 0 when the variance vanishes
  bool zero_variance = false;
  std::vector<std::string> warnings;
};

/// Unadjusted fixed-time comparison: z = (S1 - S0) / sqrt(v0 + v1).
KMComparison km_compare(const Snapshot& snap, double t0);

struct CoxWaldResult {
  double beta_treatment = 0.0;
  double se = 0.0;
  double z = 0.0;
  double info_level = 0.0;  // 1 / se^2
  StratifiedCoxFit fit;     // coefficient 0 is the treatment indicator
};

/// Unstratified Cox model with the treatment indicator followed by the
/// covariates; Wald statistic for the treatment coefficient.
CoxWaldResult cox_wald(const Snapshot& snap, const CoxOptions& options = {});

}  // namespace spgs
