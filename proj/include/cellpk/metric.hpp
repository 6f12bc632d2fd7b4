#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace cellpk {

/// Pair counts behind a prediction-probability score. Pairs whose reference
/// values tie are excluded; of the rest, concordant + discordant + ties in
/// the prediction only account for every pair considered.
struct PkReport {
  std::uint64_t n_pairs_considered = 0;
  std::uint64_t concordant = 0;
  std::uint64_t discordant = 0;
  std::uint64_t ties_pred_only = 0;
  double pk = 0.0;
};

struct AveragePk {
  std::vector<PkReport> per_rater;
  double mean_pk = 0.0;
};

enum class TTestVariant { welch, student };

struct TTestResult {
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_two_tailed = 1.0;
  TTestVariant variant = TTestVariant::welch;
};

/// PK = (C + T_x/2) / (C + D + T_x). Values within `tie_epsilon` of each
/// other count as tied (exact equality by default).
PkReport pk(std::span<const double> reference, std::span<const double> prediction, double tie_epsilon = 0.0);

/// PK against each reference column, and their arithmetic mean.
AveragePk average_pk(const std::vector<std::vector<double>>& reference_columns, std::span<const double> prediction,
                     double tie_epsilon = 0.0);

/// tau_b = (C - D) / sqrt((n0 - n1)(n0 - n2)).
double kendall_tau_b(std::span<const double> x, std::span<const double> y);

TTestResult unpaired_t_test(std::span<const double> a, std::span<const double> b,
                            TTestVariant variant = TTestVariant::welch);

/// Two-tailed tail probability P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_tailed(double t, double df);

/// Regularized incomplete beta I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

/// Mean PK over `resamples` bootstrap draws (with replacement) of the rows.
/// Draws where every reference column is constant are redrawn; the
/// sequence depends only on the seed.
std::vector<double> bootstrap_average_pk(const std::vector<std::vector<double>>& reference_columns,
                                         std::span<const double> prediction, int resamples, std::uint64_t seed);

TTestVariant parse_ttest_variant(std::string_view name);

}  // namespace cellpk
