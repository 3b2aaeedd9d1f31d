#include "spgs/stratified_cox.hpp"

#include "spgs/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace spgs {

StepFunction::StepFunction(std::vector<double> times, std::vector<double> values)
    : times_(std::move(times)), values_(std::move(values)) {
  if (times_.size() != values_.size())
    throw std::invalid_argument("StepFunction: times and values differ in length");
}

double StepFunction::operator()(double t) const {
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return 0.0;
  return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

CoxData::CoxData(std::vector<double> time, std::vector<bool> event, std::vector<int> stratum,
                 Eigen::MatrixXd z, int num_strata, double calendar_time)
    : time_(std::move(time)),
      event_(std::move(event)),
      z_(std::move(z)),
      order_(num_strata),
      events_(num_strata, 0),
      num_strata_(num_strata),
      calendar_time_(calendar_time) {
  const int n = static_cast<int>(time_.size());
  if (static_cast<int>(event_.size()) != n || static_cast<int>(stratum.size()) != n ||
      z_.rows() != n)
    throw std::invalid_argument("CoxData: inconsistent lengths");
  for (int j = 0; j < n; ++j) {
    // a zero-length follow-up window is never at risk at any t > 0
    if (time_[j] <= 0.0) event_[j] = false;
    order_[stratum[j]].push_back(j);
    if (event_[j]) ++events_[stratum[j]];
  }
  for (auto& ord : order_)
    std::stable_sort(ord.begin(), ord.end(),
                     [this](int a, int b) { return time_[a] > time_[b]; });
}

CoxData CoxData::stratified_by_arm(const Snapshot& snap) {
  std::vector<double> time;
  std::vector<bool> event;
  std::vector<int> stratum;
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < snap.size(); ++i) {
    const auto& r = snap[i];
    if (!r.enrolled) continue;
    time.push_back(r.follow_up);
    event.push_back(r.event_observed);
    stratum.push_back(arm_index(r.arm));
    rows.push_back(static_cast<Eigen::Index>(i));
  }
  Eigen::MatrixXd z(static_cast<Eigen::Index>(rows.size()), snap.num_covariates());
  for (std::size_t k = 0; k < rows.size(); ++k)
    z.row(static_cast<Eigen::Index>(k)) = snap.covariates().row(rows[k]);
  return CoxData(std::move(time), std::move(event), std::move(stratum), std::move(z), 2,
                 snap.calendar_time());
}

CoxData CoxData::pooled_with_treatment(const Snapshot& snap) {
  std::vector<double> time;
  std::vector<bool> event;
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < snap.size(); ++i) {
    const auto& r = snap[i];
    if (!r.enrolled) continue;
    time.push_back(r.follow_up);
    event.push_back(r.event_observed);
    rows.push_back(static_cast<Eigen::Index>(i));
  }
  const int p = snap.num_covariates();
  Eigen::MatrixXd z(static_cast<Eigen::Index>(rows.size()), p + 1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    z(row, 0) = arm_index(snap[rows[k]].arm);
    z.row(row).tail(p) = snap.covariates().row(rows[k]);
  }
  std::vector<int> stratum(rows.size(), 0);
  return CoxData(std::move(time), std::move(event), std::move(stratum), std::move(z), 1,
                 snap.calendar_time());
}

namespace {

// exp(beta'Z - offset) for every subject; the offset keeps the exponentials bounded.
Eigen::VectorXd relative_risks(const CoxData& data, const Eigen::VectorXd& beta,
                               double* offset) {
  const Eigen::Index n = data.covariate_matrix().rows();
  Eigen::VectorXd eta = beta.size() > 0 ? Eigen::VectorXd(data.covariate_matrix() * beta)
                                        : Eigen::VectorXd::Zero(n);
  const double shift = n > 0 ? eta.maxCoeff() : 0.0;
  if (offset) *offset = shift;
  return (eta.array() - shift).exp().matrix();
}

// Walks one stratum from the latest follow-up time backwards, calling
// visit(time, events, R0, R1, R2, sum of event covariates, sum of event eta)
// at every distinct event time. R* are unnormalized at-risk sums on the
// offset scale.
template <class Visit>
void walk_stratum(const CoxData& data, int s, const Eigen::VectorXd& risk, bool second_order,
                  Visit&& visit) {
  const int p = data.num_covariates();
  const auto& ord = data.order(s);
  double r0 = 0.0;
  Eigen::VectorXd r1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd r2 = Eigen::MatrixXd::Zero(second_order ? p : 0, second_order ? p : 0);
  Eigen::VectorXd zsum(p);
  std::size_t k = 0;
  while (k < ord.size()) {
    const double t = data.time(ord[k]);
    int d = 0;
    zsum.setZero();
    for (; k < ord.size() && data.time(ord[k]) == t; ++k) {
      const int j = ord[k];
      const double w = risk[j];
      const auto zj = data.covariates(j);
      r0 += w;
      if (p > 0) {
        r1 += w * zj.transpose();
        if (second_order) r2.noalias() += w * zj.transpose() * zj;
      }
      if (data.event(j)) {
        ++d;
        if (p > 0) zsum += zj.transpose();
      }
    }
    if (d > 0) visit(t, d, r0, r1, r2, zsum);
  }
}

}  // namespace

PartialLikelihood evaluate_partial_likelihood(const CoxData& data, const Eigen::VectorXd& beta) {
  const int p = data.num_covariates();
  if (beta.size() != p) throw std::invalid_argument("beta has wrong length");
  double offset = 0.0;
  const Eigen::VectorXd risk = relative_risks(data, beta, &offset);
  PartialLikelihood out;
  out.score = Eigen::VectorXd::Zero(p);
  out.information = Eigen::MatrixXd::Zero(p, p);
  for (int s = 0; s < data.num_strata(); ++s) {
    walk_stratum(data, s, risk, true,
                 [&](double, int d, double r0, const Eigen::VectorXd& r1,
                     const Eigen::MatrixXd& r2, const Eigen::VectorXd& zsum) {
                   if (!(r0 > 0.0) || !std::isfinite(r0))
                     throw DegenerateDataError("event with an empty risk set");
                   double eta_sum = 0.0;
                   if (p > 0) eta_sum = zsum.dot(beta);
                   out.log_likelihood += eta_sum - d * (std::log(r0) + offset);
                   if (p > 0) {
                     const Eigen::VectorXd e = r1 / r0;
                     out.score += zsum - d * e;
                     out.information += d * (r2 / r0 - e * e.transpose());
                   }
                 });
  }
  return out;
}

std::vector<RiskSetSums> risk_set_sums(const CoxData& data, const Eigen::VectorXd& beta, int s) {
  double offset = 0.0;
  const Eigen::VectorXd risk = relative_risks(data, beta, &offset);
  const double scale = std::exp(offset) / data.stratum_size(s);
  std::vector<RiskSetSums> out;
  walk_stratum(data, s, risk, true,
               [&](double t, int d, double r0, const Eigen::VectorXd& r1,
                   const Eigen::MatrixXd& r2, const Eigen::VectorXd&) {
                 out.push_back({t, d, r0 * scale, r1 * scale, r2 * scale});
               });
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<StepFunction> breslow_baseline(const CoxData& data, const Eigen::VectorXd& beta) {
  double offset = 0.0;
  const Eigen::VectorXd risk = relative_risks(data, beta, &offset);
  const double unscale = std::exp(-offset);
  std::vector<StepFunction> out;
  for (int s = 0; s < data.num_strata(); ++s) {
    std::vector<double> times;
    std::vector<double> jumps;
    walk_stratum(data, s, risk, false,
                 [&](double t, int d, double r0, const Eigen::VectorXd&, const Eigen::MatrixXd&,
                     const Eigen::VectorXd&) {
                   times.push_back(t);
                   jumps.push_back(d / r0 * unscale);
                 });
    std::reverse(times.begin(), times.end());
    std::reverse(jumps.begin(), jumps.end());
    std::partial_sum(jumps.begin(), jumps.end(), jumps.begin());
    out.emplace_back(std::move(times), std::move(jumps));
  }
  return out;
}

Eigen::MatrixXd invert_information(const Eigen::MatrixXd& info, bool* singular) {
  const Eigen::Index p = info.rows();
  if (singular) *singular = false;
  if (p == 0) return Eigen::MatrixXd(0, 0);
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() == Eigen::Success) {
    const double min_pivot = llt.matrixLLT().diagonal().minCoeff();
    const double max_pivot = llt.matrixLLT().diagonal().maxCoeff();
    if (min_pivot > 1e-7 * max_pivot) return llt.solve(Eigen::MatrixXd::Identity(p, p));
  }
  if (singular) *singular = true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double cutoff = std::max(lambda.cwiseAbs().maxCoeff(), 1.0) * 1e-10 * p;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(p);
  for (Eigen::Index k = 0; k < p; ++k)
    if (lambda[k] > cutoff) inv[k] = 1.0 / lambda[k];
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::VectorXd solve_information(const Eigen::MatrixXd& info, const Eigen::VectorXd& rhs,
                                  bool* singular) {
  return invert_information(info, singular) * rhs;
}

Eigen::VectorXd partial_score(const Eigen::VectorXd& beta, const Snapshot& snap) {
  return evaluate_partial_likelihood(CoxData::stratified_by_arm(snap), beta).score;
}

Eigen::MatrixXd observed_information(const Eigen::VectorXd& beta, const Snapshot& snap) {
  return evaluate_partial_likelihood(CoxData::stratified_by_arm(snap), beta).information;
}

double log_partial_likelihood(const Eigen::VectorXd& beta, const Snapshot& snap) {
  return evaluate_partial_likelihood(CoxData::stratified_by_arm(snap), beta).log_likelihood;
}

StratifiedCoxFit fit_cox(const CoxData& data, const CoxOptions& options) {
  const int p = data.num_covariates();
  StratifiedCoxFit fit;
  fit.calendar_time = data.calendar_time();
  for (int s = 0; s < data.num_strata(); ++s) {
    if (data.stratum_size(s) == 0)
      fit.warnings.push_back("stratum " + std::to_string(s) + " has no enrolled subjects");
    else if (data.stratum_events(s) == 0)
      fit.warnings.push_back("stratum " + std::to_string(s) +
                             " has no observed events; baseline hazard is identically 0");
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  PartialLikelihood cur = evaluate_partial_likelihood(data, beta);
  int iter = 0;
  for (;; ++iter) {
    const double norm = p > 0 ? cur.score.lpNorm<Eigen::Infinity>() : 0.0;
    if (norm <= options.score_tol) {
      fit.converged = true;
      fit.final_score_norm = norm;
      break;
    }
    if (iter >= options.max_iter)
      throw ConvergenceError("partial likelihood Newton iteration did not converge after " +
                                 std::to_string(iter) + " iterations (score norm " +
                                 std::to_string(norm) + ")",
                             iter, norm);
    bool singular = false;
    Eigen::VectorXd step = solve_information(cur.information, cur.score, &singular);
    fit.singular_information = fit.singular_information || singular;
    if (step.squaredNorm() == 0.0)
      throw ConvergenceError("Newton step vanished with nonzero score", iter, norm);
    if (step.lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + beta.lpNorm<Eigen::Infinity>()) &&
        !singular) {
      // Score is at its rounding floor.
      fit.converged = true;
      fit.final_score_norm = norm;
      break;
    }
    // Log-likelihood changes below rounding level do not trigger halving.
    const double slack = 1e-12 * std::max(1.0, std::abs(cur.log_likelihood));
    Eigen::VectorXd next = beta + step;
    PartialLikelihood trial = evaluate_partial_likelihood(data, next);
    for (int h = 0; h < options.max_step_halvings &&
                    !(trial.log_likelihood >= cur.log_likelihood - slack);
         ++h) {
      step *= 0.5;
      next = beta + step;
      trial = evaluate_partial_likelihood(data, next);
    }
    beta = std::move(next);
    cur = std::move(trial);
    if (beta.lpNorm<Eigen::Infinity>() > options.separation_bound)
      throw SeparationError("coefficients diverge (|beta| > " +
                            std::to_string(options.separation_bound) +
                            "); monotone likelihood suspected");
  }

  if (p > 0 && beta.lpNorm<Eigen::Infinity>() > 5.0) {
    // Score can fall below tolerance while |beta| is still drifting to infinity.
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
                                   0.5 * (cur.information + cur.information.transpose()))
                                   .eigenvalues();
    if (ev.minCoeff() < 1e-6 * std::max(1.0, ev.maxCoeff()))
      throw SeparationError("information vanishes at large coefficients; monotone likelihood "
                            "suspected");
  }

  fit.iterations = iter;
  fit.beta = beta;
  fit.information = 0.5 * (cur.information + cur.information.transpose());
  fit.log_likelihood = cur.log_likelihood;
  fit.baseline_cum_hazard = breslow_baseline(data, beta);
  if (fit.singular_information)
    fit.warnings.push_back("observed information singular; pseudo-inverse used");
  return fit;
}

StratifiedCoxFit fit_mple(const Snapshot& snap, const CoxOptions& options) {
  return fit_cox(CoxData::stratified_by_arm(snap), options);
}

}  // namespace spgs
