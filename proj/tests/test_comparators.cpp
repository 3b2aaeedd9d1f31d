#include "spgs/comparators.hpp"
#include "spgs/error.hpp"
#include "support.hpp"

#include <Eigen/LU>
#include <doctest.h>

using namespace spgs;

namespace {

Dataset textbook() {
  // Control: 1, 2+, 3, 3, 5+, 6 ; treatment: 2, 4, 4+, 7
  return Dataset({{"a", Arm::control, 0, 1, true, {}},   {"b", Arm::control, 0, 2, false, {}},
                  {"c", Arm::control, 0, 3, true, {}},   {"d", Arm::control, 0, 3, true, {}},
                  {"e", Arm::control, 0, 5, false, {}},  {"f", Arm::control, 0, 6, true, {}},
                  {"g", Arm::treatment, 0, 2, true, {}}, {"h", Arm::treatment, 0, 4, true, {}},
                  {"i", Arm::treatment, 0, 4, false, {}}, {"j", Arm::treatment, 0, 7, true, {}}});
}

}  // namespace

TEST_CASE("Kaplan-Meier with Greenwood variance by hand") {
  const Snapshot snap = snapshot(textbook(), 20.0);
  const KMEstimate km(snap, Arm::control);
  // S(1) = 5/6, S(3) = 5/6 * 2/4, S(6) = 0.
  CHECK(km.at(0.5).survival == 1.0);
  CHECK(km.at(1.0).survival == doctest::Approx(5.0 / 6));
  CHECK(km.at(2.9).survival == doctest::Approx(5.0 / 6));
  const double s3 = 5.0 / 6 * 0.5;
  CHECK(km.at(3.0).survival == doctest::Approx(s3));
  const double gw = 1.0 / (6 * 5) + 2.0 / (4 * 2);
  CHECK(km.at(4.0).variance == doctest::Approx(s3 * s3 * gw));
  CHECK(km.at(6.0).survival == doctest::Approx(0.0));
  CHECK(km.last_at_risk() == 6.0);

  const KMComparison cmp = km_compare(snap, 3.0);
  const double s1 = 0.75;  // treatment: 4 at risk at t=2, one death
  CHECK(cmp.s_hat[1] == doctest::Approx(s1));
  CHECK(cmp.var[1] == doctest::Approx(s1 * s1 * (1.0 / (4 * 3))));
  CHECK(cmp.z == doctest::Approx((s1 - s3) / std::sqrt(cmp.var[0] + cmp.var[1])));
  CHECK(cmp.info_level == doctest::Approx(1.0 / (cmp.var[0] + cmp.var[1])));
}

TEST_CASE("Kaplan-Meier respects the calendar snapshot") {
  // Staggered entries: at u = 3, subject b (entry 2) has only 1 unit of follow-up.
  const Dataset d({{"a", Arm::control, 0, 2.5, true, {}}, {"b", Arm::control, 2, 2.0, true, {}},
                   {"c", Arm::control, 0, 4.0, true, {}}, {"t", Arm::treatment, 0, 1, true, {}},
                   {"s", Arm::treatment, 0, 5, false, {}}});
  const Snapshot snap = snapshot(d, 3.0);
  const KMEstimate km(snap, Arm::control);
  // risk set at 2.5: a and c (b censored at 1).
  CHECK(km.at(2.5).survival == doctest::Approx(0.5));
}

TEST_CASE("zero variance and empty risk set") {
  const Dataset d({{"a", Arm::control, 0, 5, false, {}}, {"b", Arm::control, 0, 6, false, {}},
                   {"c", Arm::treatment, 0, 5, false, {}}});
  const KMComparison cmp = km_compare(snapshot(d, 10.0), 2.0);
  CHECK(cmp.zero_variance);
  CHECK(cmp.z == 0.0);

  const KMComparison flat = km_compare(snapshot(textbook(), 20.0), 6.5);
  bool warned = false;
  for (const auto& w : flat.warnings) warned = warned || w.find("risk set") != std::string::npos;
  CHECK(warned);
  CHECK_THROWS_AS(km_compare(snapshot(textbook(), 2.0), 3.0), DomainError);
}

TEST_CASE("Cox Wald treatment coefficient maximizes the pooled likelihood") {
  std::mt19937_64 rng(31);
  int checked = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const Dataset d = testing::random_small_dataset(rng, 60, 1, rep % 2 ? 0.1 : 0.0);
    const Snapshot snap = snapshot(d, 10.0);
    const CoxWaldResult w = cox_wald(snap);
    // Pooled likelihood over (arm, z) written directly.
    auto f = [&](const Eigen::VectorXd& b) {
      double ll = 0;
      for (std::size_t i = 0; i < snap.size(); ++i) {
        if (!snap[i].event_observed) continue;
        auto eta = [&](std::size_t j) {
          return b[0] * arm_index(snap[j].arm) + b[1] * snap.covariates()(j, 0);
        };
        double den = 0;
        for (std::size_t j = 0; j < snap.size(); ++j)
          if (snap[j].follow_up >= snap[i].follow_up) den += std::exp(eta(j));
        ll += eta(i) - std::log(den);
      }
      return ll;
    };
    CHECK(testing::fd_gradient(f, w.fit.beta).norm() < 1e-6);
    const Eigen::MatrixXd h = testing::fd_hessian(f, w.fit.beta);
    CHECK(w.se == doctest::Approx(std::sqrt(Eigen::MatrixXd(-h).inverse()(0, 0))).epsilon(1e-5));
    CHECK(w.z == doctest::Approx(w.beta_treatment / w.se));
    ++checked;
  }
  CHECK(checked == 20);
}
