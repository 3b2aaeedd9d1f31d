#include "spgs/adjusted_sp.hpp"
#include "spgs/error.hpp"
#include "spgs/trial_sim.hpp"
#include "support.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include <map>

using namespace spgs;

namespace {

// Variance pieces recomputed subject by subject from their definitions,
// sharing nothing with the library beyond the fitted coefficients.
struct NaiveVariance {
  double s_hat[2];
  double sigma2;
};

NaiveVariance naive_variance(const Snapshot& snap, const Eigen::VectorXd& beta, double t0) {
  const int p = snap.num_covariates();
  std::vector<int> idx;
  for (std::size_t j = 0; j < snap.size(); ++j)
    if (snap[j].enrolled) idx.push_back(static_cast<int>(j));
  const int n = static_cast<int>(idx.size());
  auto z = [&](int j) { return Eigen::VectorXd(snap.covariates().row(j).transpose()); };
  auto risk = [&](int j) { return std::exp(z(j).dot(beta)); };

  double gamma[2] = {0, 0}, lambda[2] = {0, 0};
  Eigen::VectorXd q[2] = {Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(p)};
  int n_arm[2] = {0, 0};
  for (int j : idx) ++n_arm[arm_index(snap[j].arm)];

  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
  for (int a = 0; a < 2; ++a) {
    std::map<double, int> deaths;
    for (int j : idx)
      if (arm_index(snap[j].arm) == a && snap[j].event_observed && snap[j].follow_up > 0)
        ++deaths[snap[j].follow_up];
    for (auto [t, d] : deaths) {
      double s0 = 0;
      Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
      Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
      for (int j : idx) {
        if (arm_index(snap[j].arm) != a || snap[j].follow_up < t) continue;
        s0 += risk(j);
        s1 += risk(j) * z(j);
        s2 += risk(j) * z(j) * z(j).transpose();
      }
      info += d * (s2 / s0 - (s1 / s0) * (s1 / s0).transpose());
      if (t <= t0) {
        lambda[a] += d / s0;
        const double s0n = s0 / n_arm[a];
        gamma[a] += d / (s0n * s0n) / n_arm[a];
        q[a] += d * (s1 / n_arm[a]) / (s0n * s0n) / n_arm[a];
      }
    }
  }

  NaiveVariance out{};
  double c1[2] = {0, 0};
  Eigen::VectorXd c2[2] = {Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(p)};
  for (int a = 0; a < 2; ++a) {
    double s = 0;
    for (int j : idx) {
      const double surv = std::exp(-risk(j) * lambda[a]);
      s += surv;
      c1[a] += surv * risk(j) / n;
      c2[a] += surv * risk(j) * z(j) / n;
    }
    out.s_hat[a] = s / n;
  }
  const Eigen::VectorXd d = (c1[1] * q[1] - lambda[1] * c2[1]) - (c1[0] * q[0] - lambda[0] * c2[0]);
  out.sigma2 = 0;
  for (int a = 0; a < 2; ++a) out.sigma2 += double(n) / n_arm[a] * c1[a] * c1[a] * gamma[a];
  if (p > 0) out.sigma2 += d.dot((info / n).inverse() * d);
  return out;
}

Scenario small_scenario(int n, double phi, CovariateScheme cov) {
  Scenario s;
  s.n0 = s.n1 = n;
  s.covariates = cov;
  s.phi = phi;
  return s;
}

}  // namespace

TEST_CASE("variance estimator matches a direct reimplementation") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    const int p = rep % 3;
    const Dataset d = testing::random_small_dataset(rng, 40, p, rep % 2 ? 0.1 : 0.0, true);
    const Snapshot snap = snapshot(d, 3.0);
    const double t0 = 0.5;
    SPComparison cmp;
    try {
      cmp = compare_sp(snap, t0);
    } catch (const SeparationError&) {
      continue;
    }
    const NaiveVariance ref = naive_variance(snap, cmp.fit.beta, t0);
    CHECK(cmp.s_hat[0] == doctest::Approx(ref.s_hat[0]).epsilon(1e-10));
    CHECK(cmp.s_hat[1] == doctest::Approx(ref.s_hat[1]).epsilon(1e-10));
    CHECK(cmp.sigma2 == doctest::Approx(ref.sigma2).epsilon(1e-10));
    CHECK(cmp.info_level == doctest::Approx(cmp.n / cmp.sigma2));
    CHECK(cmp.z == doctest::Approx(cmp.diff * std::sqrt(cmp.info_level)));
  }
}

TEST_CASE("without covariates the adjusted estimate is the Breslow survival") {
  std::mt19937_64 rng(2);
  const Dataset d = testing::random_small_dataset(rng, 50, 0);
  const Snapshot snap = snapshot(d, 10.0);
  const SPComparison cmp = compare_sp(snap, 0.6);
  for (int a = 0; a < 2; ++a)
    CHECK(cmp.s_hat[a] ==
          doctest::Approx(std::exp(-cmp.fit.baseline_cum_hazard[a](0.6))).epsilon(1e-14));
  // With p = 0 only the gamma terms remain.
  const auto& vc = cmp.components;
  double expected = 0;
  for (int a = 0; a < 2; ++a)
    expected += double(vc.n) / vc.n_arm[a] * vc.c1[a] * vc.c1[a] * vc.gamma[a];
  CHECK(cmp.sigma2 == doctest::Approx(expected));
}

TEST_CASE("adjusted survival is a probability and nonincreasing in t0") {
  const Scenario s = small_scenario(150, 0.7, CovariateScheme::bernoulli2);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Snapshot snap = snapshot(generate_trial(s, seed), 2.5);
    const auto fit = fit_mple(snap);
    for (int a = 0; a < 2; ++a) {
      double prev = 1.0;
      for (double t = 0.0; t <= 2.4; t += 0.1) {
        const double v = adjusted_sp(fit, snap, Arm(a), t);
        CHECK(v >= 0.0);
        CHECK(v <= prev + 1e-15);
        prev = v;
      }
    }
  }
}

TEST_CASE("as-printed and inverse forms differ only in the coefficient term") {
  const Scenario s = small_scenario(200, std::log(2.0), CovariateScheme::normal1);
  const Snapshot snap = snapshot(generate_trial(s, 4), 3.0);
  SPOptions inv_opts, printed_opts;
  printed_opts.sigma_form = SigmaForm::as_printed;
  const auto a = compare_sp(snap, 1.0, inv_opts);
  const auto b = compare_sp(snap, 1.0, printed_opts);
  CHECK(a.diff == b.diff);
  const auto& vc = a.components;
  double base = 0;
  for (int i = 0; i < 2; ++i) base += double(vc.n) / vc.n_arm[i] * vc.c1[i] * vc.c1[i] * vc.gamma[i];
  CHECK(a.sigma2 - base == doctest::Approx(vc.d.dot(vc.sigma.inverse() * vc.d)));
  CHECK(b.sigma2 - base == doctest::Approx(vc.d.dot(vc.sigma * vc.d)));
}

TEST_CASE("domain errors") {
  std::mt19937_64 rng(6);
  const Dataset d = testing::random_small_dataset(rng, 20, 1);
  const Snapshot snap = snapshot(d, 1.0);
  CHECK_THROWS_AS(compare_sp(snap, 1.5), DomainError);
  CHECK_THROWS_AS(compare_sp(snap, 0.0), DomainError);
  const auto fit = fit_mple(snap);
  Eigen::VectorXd z(1);
  z << 0.0;
  CHECK_THROWS_AS(conditional_survival(fit, Arm::control, z, 2.0), DomainError);

  std::vector<SubjectRecord> one_arm = {{"a", Arm::control, 0, 1, true, {0.1}},
                                        {"b", Arm::control, 0, 2, true, {0.3}}};
  CHECK_THROWS_AS(compare_sp(snapshot(Dataset(one_arm), 3.0), 1.0), DegenerateDataError);
}

TEST_CASE("identical arms give a zero difference") {
  std::mt19937_64 rng(12);
  const Dataset base = testing::random_small_dataset(rng, 30, 1);
  std::vector<SubjectRecord> rows;
  for (const auto& r : base.records()) {
    SubjectRecord c = r, t = r;
    c.arm = Arm::control;
    c.id += "c";
    t.arm = Arm::treatment;
    t.id += "t";
    rows.push_back(c);
    rows.push_back(t);
  }
  const auto cmp = compare_sp(snapshot(Dataset(rows), 10.0), 0.8);
  CHECK(cmp.diff == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(cmp.z == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("shifting a covariate leaves the comparison unchanged") {
  const Scenario s = small_scenario(150, 0.6, CovariateScheme::bernoulli2);
  const Dataset d = generate_trial(s, 8);
  std::vector<SubjectRecord> rows(d.records().begin(), d.records().end());
  for (auto& r : rows) {
    r.covariates[0] += 3.0;
    r.covariates[1] -= 1.5;
  }
  const auto a = compare_sp(snapshot(d, 2.5), 1.0);
  const auto b = compare_sp(snapshot(Dataset(rows), 2.5), 1.0);
  CHECK((a.fit.beta - b.fit.beta).norm() < 1e-9);
  CHECK(b.s_hat[0] == doctest::Approx(a.s_hat[0]).epsilon(1e-10));
  CHECK(b.s_hat[1] == doctest::Approx(a.s_hat[1]).epsilon(1e-10));
  CHECK(b.sigma2 == doctest::Approx(a.sigma2).epsilon(1e-8));
  CHECK(b.z == doctest::Approx(a.z).epsilon(1e-8));
}

TEST_CASE("a stratum without events before t0 has empty integrals") {
  std::mt19937_64 rng(40);
  const Dataset base = testing::random_small_dataset(rng, 30, 1);
  std::vector<SubjectRecord> rows(base.records().begin(), base.records().end());
  for (auto& r : rows)
    if (r.arm == Arm::treatment) r.time_on_study += 1.0;  // no treatment events in (0, 0.5]
  const Snapshot snap = snapshot(Dataset(rows), 20.0);
  const auto cmp = compare_sp(snap, 0.5);
  const auto& vc = cmp.components;
  CHECK(vc.gamma[1] == 0.0);
  CHECK(vc.q[1].norm() == 0.0);
  CHECK(vc.cum_hazard_t0[1] == 0.0);
  CHECK(vc.d_arm[1].norm() == 0.0);
  CHECK(cmp.s_hat[1] == 1.0);
  CHECK(cmp.sigma2 > 0.0);
}

TEST_CASE("identical covariates reduce to the conditional survival") {
  std::mt19937_64 rng(41);
  const Dataset base = testing::random_small_dataset(rng, 40, 1);
  std::vector<SubjectRecord> rows(base.records().begin(), base.records().end());
  for (auto& r : rows) r.covariates[0] = 0.7;
  const Snapshot snap = snapshot(Dataset(rows), 20.0);
  const auto fit = fit_mple(snap);
  Eigen::VectorXd z(1);
  z << 0.7;
  for (int a = 0; a < 2; ++a)
    CHECK(adjusted_sp(fit, snap, Arm(a), 0.8) ==
          doctest::Approx(conditional_survival(fit, Arm(a), z, 0.8)).epsilon(1e-14));
}
