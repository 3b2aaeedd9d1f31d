#pragma once

#include "spgs/stratified_cox.hpp"
#include "spgs/survival_data.hpp"

#include <Eigen/Core>

#include <array>
#include <string>
#include <vector>

namespace spgs {

/// Plug-in pieces of the variance of sqrt(n) * (S1(u,t0) - S0(u,t0)).
/// Arrays are indexed by arm (0 = control, 1 = treatment).
struct VarianceComponents {
  std::array<double, 2> gamma{};           // n_i^-1 sum_{s<=t0} dN_i(s) / S0_i(s)^2
  std::array<Eigen::VectorXd, 2> q;        // n_i^-1 sum_{s<=t0} S1_i(s) / S0_i(s)^2 dN_i(s)
  std::array<double, 2> c1{};              // n^-1 sum S_i(t0|Z) exp(b'Z)
  std::array<Eigen::VectorXd, 2> c2;       // n^-1 sum S_i(t0|Z) exp(b'Z) Z
  std::array<Eigen::VectorXd, 2> d_arm;    // c1 Q - Lambda_0i(t0) c2
  std::array<double, 2> cum_hazard_t0{};   // Lambda_0i(u, t0)
  std::array<int, 2> n_arm{};
  int n = 0;
  Eigen::MatrixXd sigma;                   // n^-1 * observed information
  Eigen::VectorXd d;                       // d_arm[1] - d_arm[0]
};

/// How the coefficient-uncertainty term enters the variance. `inverse` uses
/// D' Sigma^-1 D (delta method with Avar(sqrt(n)(b - b0)) = Sigma^-1);
/// `as_printed` uses D' Sigma D and exists only for sensitivity checks.
enum class SigmaForm { inverse, as_printed };

struct SPOptions {
  CoxOptions cox;
  SigmaForm sigma_form = SigmaForm::inverse;
};

struct SPComparison {
  double t0 = 0.0;
  double u = 0.0;
  std::array<double, 2> s_hat{};
  double diff = 0.0;        // S1 - S0
  double sigma2 = 0.0;      // asymptotic variance of sqrt(n) * diff
  double info_level = 0.0;  // n / sigma2
  double z = 0.0;           // diff * sqrt(info_level)
  int n = 0;
  StratifiedCoxFit fit;
  VarianceComponents components;
  std::vector<std::string> warnings;
};

/// exp(-exp(b'z) * Lambda_0i(u, t)); t must not exceed the fit's calendar time.
double conditional_survival(const StratifiedCoxFit& fit, Arm arm,
                            const Eigen::Ref<const Eigen::VectorXd>& z, double t);

/// Covariate-adjusted survival probability under `arm`: the average of the
/// conditional survival over every enrolled subject of both arms.
double adjusted_sp(const StratifiedCoxFit& fit, const Snapshot& snap, Arm arm, double t0);

VarianceComponents variance_components(const StratifiedCoxFit& fit, const Snapshot& snap,
                                       double t0);

double assemble_sigma2(const VarianceComponents& vc, SigmaForm form = SigmaForm::inverse);

/// Fits the treatment-stratified model at the snapshot and forms the
/// standardized difference of adjusted survival probabilities at t0.
SPComparison compare_sp(const Snapshot& snap, double t0, const SPOptions& options = {});

}  // namespace spgs
