#include "spgs/comparators.hpp"

#include "spgs/error.hpp"

#include <algorithm>
#include <cmath>

namespace spgs {

KMEstimate::KMEstimate(const Snapshot& snap, Arm arm) : arm_(arm) {
  std::vector<std::pair<double, bool>> obs;
  for (const auto& r : snap.records()) {
    if (r.arm != arm || !r.enrolled || !(r.follow_up > 0.0)) continue;
    obs.emplace_back(r.follow_up, r.event_observed);
  }
  std::sort(obs.begin(), obs.end());
  if (!obs.empty()) last_at_risk_ = obs.back().first;

  double s = 1.0;
  double greenwood = 0.0;
  std::size_t k = 0;
  while (k < obs.size()) {
    const double t = obs[k].first;
    const auto at_risk = static_cast<double>(obs.size() - k);
    int d = 0;
    for (; k < obs.size() && obs[k].first == t; ++k) d += obs[k].second ? 1 : 0;
    if (d == 0) continue;
    s *= 1.0 - d / at_risk;
    if (at_risk > d) greenwood += d / (at_risk * (at_risk - d));
    times_.push_back(t);
    survival_.push_back(s);
    variance_.push_back(s * s * greenwood);
  }
}

KMEstimate::Point KMEstimate::at(double t) const {
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return {};
  const auto k = static_cast<std::size_t>(it - times_.begin()) - 1;
  return {survival_[k], variance_[k]};
}

KMComparison km_compare(const Snapshot& snap, double t0) {
  if (!(t0 > 0.0)) throw DomainError("t0 must be positive");
  if (t0 > snap.calendar_time()) throw DomainError("t0 exceeds the calendar analysis time");
  KMComparison out;
  out.t0 = t0;
  for (int i = 0; i < 2; ++i) {
    const KMEstimate km(snap, Arm(i));
    if (km.last_at_risk() <= 0.0)
      throw DegenerateDataError("arm " + std::to_string(i) + " has nobody at risk");
    if (km.last_at_risk() < t0)
      out.warnings.push_back("arm " + std::to_string(i) +
                             ": risk set empties before t0; estimate carried flat");
    const auto pt = km.at(t0);
    out.s_hat[i] = pt.survival;
    out.var[i] = pt.variance;
  }
  out.diff = out.s_hat[1] - out.s_hat[0];
  const double v = out.var[0] + out.var[1];
  if (v > 0.0) {
    out.se = std::sqrt(v);
    out.z = out.diff / out.se;
    out.info_level = 1.0 / v;
  } else {
    out.zero_variance = true;
    out.warnings.push_back("zero Greenwood variance; z set to 0");
  }
  return out;
}

CoxWaldResult cox_wald(const Snapshot& snap, const CoxOptions& options) {
  const CoxData data = CoxData::pooled_with_treatment(snap);
  if (data.stratum_events(0) == 0) throw DegenerateDataError("no observed events");
  CoxWaldResult out;
  out.fit = fit_cox(data, options);
  out.beta_treatment = out.fit.beta[0];
  const Eigen::MatrixXd cov = invert_information(out.fit.information);
  const double var = cov(0, 0);
  if (!(var > 0.0) || !std::isfinite(var))
    throw DegenerateDataError("treatment coefficient has no information");
  out.se = std::sqrt(var);
  out.z = out.beta_treatment / out.se;
  out.info_level = 1.0 / var;
  return out;
}

}  // namespace spgs
