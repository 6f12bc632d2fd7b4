#include <doctest.h>

#include <cmath>

#include "cellpk/error.hpp"
#include "cellpk/metric.hpp"
#include "cellpk/random.hpp"
#include "oracles.hpp"

using namespace cellpk;

TEST_CASE("pk closed cases") {
  const std::vector<double> ref{0.1, 0.2, 0.3};
  CHECK(pk(ref, std::vector<double>{0.1, 0.2, 0.3}).pk == 1.0);
  CHECK(pk(ref, std::vector<double>{0.3, 0.2, 0.1}).pk == 0.0);
  CHECK(pk(ref, std::vector<double>{0.7, 0.7, 0.7}).pk == 0.5);
}

TEST_CASE("pk pair counts on a binary reference") {
  const std::vector<double> ref{0, 0, 1, 1}, pred{0.2, 0.8, 0.4, 0.9};
  const auto expect = oracle::pk_pairs(ref, pred);
  const PkReport r = pk(ref, pred);
  CHECK(expect.concordant == 3);
  CHECK(expect.discordant == 1);
  CHECK(r.concordant == 3);
  CHECK(r.discordant == 1);
  CHECK(r.ties_pred_only == 0);
  CHECK(r.n_pairs_considered == 4);
  CHECK(r.pk == 0.75);
}

TEST_CASE("pk accounting identity and errors") {
  Rng rng(12);
  for (int i = 0; i < 30; ++i) {
    std::vector<double> ref(20), pred(20);
    for (auto& v : ref) v = static_cast<double>(rng.below(4));
    for (auto& v : pred) v = static_cast<double>(rng.below(3));
    ref[0] = 0;
    ref[1] = 3;
    const PkReport r = pk(ref, pred);
    CHECK(r.concordant + r.discordant + r.ties_pred_only == r.n_pairs_considered);
  }
  CHECK_THROWS_AS(pk(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DataError);
  CHECK_THROWS_AS(pk(std::vector<double>{1, 2}, std::vector<double>{1}), DataError);
}

TEST_CASE("pk tie epsilon") {
  const std::vector<double> ref{0.0, 0.5, 1.0};
  const std::vector<double> pred{0.1, 0.1 + 1e-12, 0.9};
  CHECK(pk(ref, pred).ties_pred_only == 0);
  CHECK(pk(ref, pred, 1e-9).ties_pred_only == 1);
}

TEST_CASE("average pk") {
  const std::vector<double> a{0.1, 0.5, 0.9, 0.3};
  const std::vector<double> pred{0.2, 0.6, 0.8, 0.1};
  CHECK(average_pk({a}, pred).mean_pk == pk(a, pred).pk);
  CHECK(average_pk({a, a}, pred).mean_pk == pk(a, pred).pk);
  // Perfect on column 1, anti on column 2.
  const std::vector<double> up{0.1, 0.2, 0.3, 0.4}, down{0.4, 0.3, 0.2, 0.1};
  const auto avg = average_pk({up, down}, up);
  CHECK(oracle::pk_pairs(up, up).pk() == 1.0);
  CHECK(oracle::pk_pairs(down, up).pk() == 0.0);
  CHECK(avg.mean_pk == 0.5);
  CHECK(avg.per_rater.size() == 2);
}

TEST_CASE("kendall tau-b") {
  const std::vector<double> x{1, 2, 3, 4};
  CHECK(kendall_tau_b(x, x) == doctest::Approx(1.0));
  CHECK(kendall_tau_b(x, std::vector<double>{4, 3, 2, 1}) == doctest::Approx(-1.0));
  const std::vector<double> y{1, 3, 2, 4};
  CHECK(oracle::tau_b(x, y) == doctest::Approx(2.0 / 3.0));
  CHECK(kendall_tau_b(x, y) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  Rng rng(14);
  for (int i = 0; i < 40; ++i) {
    std::vector<double> u(15), v(15);
    for (auto& e : u) e = static_cast<double>(rng.below(5));
    for (auto& e : v) e = static_cast<double>(rng.below(4));
    u[0] = 0, u[1] = 9, v[0] = 0, v[1] = 9;
    CHECK(kendall_tau_b(u, v) == doctest::Approx(oracle::tau_b(u, v)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(kendall_tau_b(x, std::vector<double>{2, 2, 2, 2}), DataError);
}

TEST_CASE("student t-test on the textbook fixture") {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{3, 4, 5, 6, 7};
  const auto r = unpaired_t_test(a, b, TTestVariant::student);
  const auto o = oracle::pooled_t_test(a, b);
  CHECK(o.t == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(std::fabs(r.t_statistic - o.t) < 1e-9);
  CHECK(std::fabs(r.p_two_tailed - o.p) < 1e-6);
  CHECK(r.degrees_of_freedom == 8.0);
}

TEST_CASE("welch t-test: identities and Welch-Satterthwaite df") {
  const std::vector<double> a{0.9, 0.85, 0.88, 0.91}, b{0.8, 0.7, 0.95, 0.75, 0.82, 0.6};
  const auto r = unpaired_t_test(a, b);
  CHECK(r.variant == TTestVariant::welch);
  const auto s = unpaired_t_test(b, a);
  CHECK(s.t_statistic == -r.t_statistic);
  CHECK(s.p_two_tailed == r.p_two_tailed);
  auto var = [](const std::vector<double>& v) {
    double m = 0, ss = 0;
    for (double e : v) m += e;
    m /= v.size();
    for (double e : v) ss += (e - m) * (e - m);
    return ss / (v.size() - 1);
  };
  const double qa = var(a) / 4, qb = var(b) / 6;
  CHECK(r.degrees_of_freedom == doctest::Approx((qa + qb) * (qa + qb) / (qa * qa / 3 + qb * qb / 5)).epsilon(1e-12));
  CHECK(r.p_two_tailed == doctest::Approx(oracle::student_two_tailed(r.t_statistic, r.degrees_of_freedom)).epsilon(1e-7));
  const auto same = unpaired_t_test(a, a);
  CHECK(same.t_statistic == 0.0);
  CHECK(same.p_two_tailed == 1.0);
  CHECK_THROWS_AS(unpaired_t_test(std::vector<double>{1}, b), DataError);
  CHECK_THROWS_AS(unpaired_t_test(std::vector<double>{1, 1}, std::vector<double>{1, 1}), DataError);
}

TEST_CASE("student t tail probabilities against numerical integration") {
  for (double df : {1.0, 2.5, 7.0, 30.0})
    for (double t : {0.1, 0.8, 2.0, 4.5}) CHECK(student_t_two_tailed(t, df) == doctest::Approx(oracle::student_two_tailed(t, df)).epsilon(1e-8));
  CHECK(student_t_two_tailed(0.0, 5.0) == 1.0);
  // df = 1 is Cauchy: p = 1 - 2 atan(t) / pi.
  CHECK(student_t_two_tailed(1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("regularized incomplete beta") {
  CHECK(regularized_incomplete_beta(2, 3, 0.0) == 0.0);
  CHECK(regularized_incomplete_beta(2, 3, 1.0) == 1.0);
  // I_x(1, b) = 1 - (1 - x)^b
  CHECK(regularized_incomplete_beta(1, 4, 0.3) == doctest::Approx(1 - std::pow(0.7, 4)).epsilon(1e-13));
  // Symmetry I_x(a, b) = 1 - I_{1-x}(b, a)
  CHECK(regularized_incomplete_beta(2.5, 1.5, 0.4) ==
        doctest::Approx(1 - regularized_incomplete_beta(1.5, 2.5, 0.6)).epsilon(1e-13));
  CHECK_THROWS_AS(regularized_incomplete_beta(0, 1, 0.5), UsageError);
}

TEST_CASE("bootstrap of average pk") {
  const std::vector<double> ref{0.1, 0.4, 0.2, 0.9, 0.5, 0.7};
  const std::vector<double> pred{0.2, 0.3, 0.1, 0.8, 0.6, 0.5};
  const auto a = bootstrap_average_pk({ref}, pred, 200, 3);
  const auto b = bootstrap_average_pk({ref}, pred, 200, 3);
  CHECK(a == b);
  CHECK(a.size() == 200);
  for (double v : a) CHECK((v >= 0.0 && v <= 1.0));
  CHECK(a != bootstrap_average_pk({ref}, pred, 200, 4));
  // A perfect predictor stays perfect on every resample.
  for (double v : bootstrap_average_pk({ref}, ref, 50, 1)) CHECK(v == 1.0);
  CHECK_THROWS_AS(bootstrap_average_pk({ref}, pred, 0, 1), UsageError);
}

TEST_CASE("t-test variant names") {
  CHECK(parse_ttest_variant("welch") == TTestVariant::welch);
  CHECK(parse_ttest_variant("student") == TTestVariant::student);
  CHECK_THROWS_AS(parse_ttest_variant("paired"), UsageError);
}
