#include "spgs/adjusted_sp.hpp"

#include "spgs/error.hpp"

#include <cmath>

namespace spgs {

namespace {

void check_horizon(const StratifiedCoxFit& fit, double t) {
  if (!(t >= 0.0)) throw DomainError("survival time must be >= 0");
  if (t > fit.calendar_time)
    throw DomainError("survival time " + std::to_string(t) +
                      " exceeds the calendar time of the fit (" +
                      std::to_string(fit.calendar_time) + ")");
}

double linear_predictor(const StratifiedCoxFit& fit, const Eigen::Ref<const Eigen::VectorXd>& z) {
  return fit.beta.size() > 0 ? fit.beta.dot(z) : 0.0;
}

}  // namespace

double conditional_survival(const StratifiedCoxFit& fit, Arm arm,
                            const Eigen::Ref<const Eigen::VectorXd>& z, double t) {
  check_horizon(fit, t);
  if (z.size() != fit.beta.size()) throw std::invalid_argument("covariate length mismatch");
  const double cum = fit.baseline_cum_hazard[arm_index(arm)](t);
  return std::exp(-std::exp(linear_predictor(fit, z)) * cum);
}

double adjusted_sp(const StratifiedCoxFit& fit, const Snapshot& snap, Arm arm, double t0) {
  check_horizon(fit, t0);
  const double cum = fit.baseline_cum_hazard[arm_index(arm)](t0);
  double sum = 0.0;
  int n = 0;
  for (std::size_t j = 0; j < snap.size(); ++j) {
    if (!snap[j].enrolled) continue;
    const Eigen::VectorXd z = snap.covariates().row(static_cast<Eigen::Index>(j)).transpose();
    sum += std::exp(-std::exp(linear_predictor(fit, z)) * cum);
    ++n;
  }
  if (n == 0) throw DegenerateDataError("no enrolled subjects at calendar time");
  return sum / n;
}

VarianceComponents variance_components(const StratifiedCoxFit& fit, const Snapshot& snap,
                                       double t0) {
  check_horizon(fit, t0);
  const CoxData data = CoxData::stratified_by_arm(snap);
  const int p = data.num_covariates();
  VarianceComponents vc;
  vc.n = snap.enrolled_total();
  if (vc.n == 0) throw DegenerateDataError("no enrolled subjects at calendar time");

  for (int i = 0; i < 2; ++i) {
    vc.n_arm[i] = data.stratum_size(i);
    if (vc.n_arm[i] == 0)
      throw DegenerateDataError("arm " + std::to_string(i) + " has no enrolled subjects");
    vc.gamma[i] = 0.0;
    vc.q[i] = Eigen::VectorXd::Zero(p);
    for (const auto& rs : risk_set_sums(data, fit.beta, i)) {
      if (rs.time > t0) break;
      if (!(rs.s0 > 0.0)) throw DegenerateDataError("degenerate risk set at an event time");
      const double inv_s0_sq = 1.0 / (rs.s0 * rs.s0);
      vc.gamma[i] += rs.events * inv_s0_sq / vc.n_arm[i];
      if (p > 0) vc.q[i] += rs.events * inv_s0_sq / vc.n_arm[i] * rs.s1;
    }
    vc.cum_hazard_t0[i] = fit.baseline_cum_hazard[i](t0);

    vc.c1[i] = 0.0;
    vc.c2[i] = Eigen::VectorXd::Zero(p);
    for (Eigen::Index j = 0; j < data.covariate_matrix().rows(); ++j) {
      const Eigen::VectorXd z = data.covariates(static_cast<int>(j)).transpose();
      const double risk = std::exp(linear_predictor(fit, z));
      const double w = std::exp(-risk * vc.cum_hazard_t0[i]) * risk;
      vc.c1[i] += w;
      if (p > 0) vc.c2[i] += w * z;
    }
    vc.c1[i] /= vc.n;
    vc.c2[i] /= vc.n;
    vc.d_arm[i] = vc.c1[i] * vc.q[i] - vc.cum_hazard_t0[i] * vc.c2[i];
  }
  vc.sigma = fit.information / vc.n;
  vc.d = vc.d_arm[1] - vc.d_arm[0];
  return vc;
}

double assemble_sigma2(const VarianceComponents& vc, SigmaForm form) {
  double s2 = 0.0;
  for (int i = 0; i < 2; ++i)
    s2 += static_cast<double>(vc.n) / vc.n_arm[i] * vc.c1[i] * vc.c1[i] * vc.gamma[i];
  if (vc.d.size() > 0) {
    if (form == SigmaForm::inverse)
      s2 += vc.d.dot(invert_information(vc.sigma) * vc.d);
    else
      s2 += vc.d.dot(vc.sigma * vc.d);
  }
  return s2;
}

SPComparison compare_sp(const Snapshot& snap, double t0, const SPOptions& options) {
  if (!(t0 > 0.0)) throw DomainError("t0 must be positive");
  if (t0 > snap.calendar_time())
    throw DomainError("t0 exceeds the calendar analysis time");
  if (snap.enrolled(Arm::control) == 0 || snap.enrolled(Arm::treatment) == 0)
    throw DegenerateDataError("both arms must have enrolled subjects");

  SPComparison out;
  out.t0 = t0;
  out.u = snap.calendar_time();
  out.fit = fit_mple(snap, options.cox);
  out.warnings = out.fit.warnings;
  for (int i = 0; i < 2; ++i) out.s_hat[i] = adjusted_sp(out.fit, snap, Arm(i), t0);
  out.diff = out.s_hat[1] - out.s_hat[0];
  out.components = variance_components(out.fit, snap, t0);
  out.n = out.components.n;
  out.sigma2 = assemble_sigma2(out.components, options.sigma_form);
  if (!(out.sigma2 > 0.0) || !std::isfinite(out.sigma2))
    throw DegenerateDataError("estimated variance of the survival difference is not positive");
  out.info_level = out.n / out.sigma2;
  out.z = out.diff * std::sqrt(out.info_level);
  return out;
}

}  // namespace spgs
