#include "cellpk/metric.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cellpk/error.hpp"
#include "cellpk/random.hpp"

namespace cellpk {

namespace {

// -1, 0, +1 with ties decided by epsilon.
int compare(double a, double b, double eps) {
  const double d = b - a;
  if (std::abs(d) <= eps) return 0;
  return d > 0 ? 1 : -1;
}

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw DataError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  if (a < 2) throw DataError(std::string(what) + ": at least two observations are required");
}

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double sample_variance(std::span<const double> v, double m) {
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int max_iterations = 500;
  constexpr double eps = 1e-15;
  constexpr double tiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iterations; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) return h;
  }
  return h;
}

}  // namespace

PkReport pk(std::span<const double> reference, std::span<const double> prediction, double tie_epsilon) {
  require_same_length(reference.size(), prediction.size(), "pk");
  PkReport r;
  const std::size_t n = reference.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int dref = compare(reference[i], reference[j], tie_epsilon);
      if (dref == 0) continue;
      const int dpred = compare(prediction[i], prediction[j], tie_epsilon);
      if (dpred == 0)
        ++r.ties_pred_only;
      else if (dpred == dref)
        ++r.concordant;
      else
        ++r.discordant;
    }
  }
  r.n_pairs_considered = r.concordant + r.discordant + r.ties_pred_only;
  if (r.n_pairs_considered == 0) throw DataError("pk: all reference values are tied, PK is undefined");
  r.pk = (static_cast<double>(r.concordant) + 0.5 * static_cast<double>(r.ties_pred_only)) /
         static_cast<double>(r.n_pairs_considered);
  return r;
}

AveragePk average_pk(const std::vector<std::vector<double>>& reference_columns, std::span<const double> prediction,
                     double tie_epsilon) {
  if (reference_columns.empty()) throw DataError("average_pk: no reference columns");
  AveragePk out;
  for (const auto& column : reference_columns) out.per_rater.push_back(pk(column, prediction, tie_epsilon));
  double sum = 0.0;
  for (const auto& r : out.per_rater) sum += r.pk;
  out.mean_pk = sum / static_cast<double>(out.per_rater.size());
  return out;
}

double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  require_same_length(x.size(), y.size(), "kendall_tau_b");
  std::uint64_t concordant = 0, discordant = 0, tied_x_only = 0, tied_y_only = 0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const int dx = compare(x[i], x[j], 0.0);
      const int dy = compare(y[i], y[j], 0.0);
      if (dx == 0 && dy == 0) continue;
      if (dx == 0)
        ++tied_x_only;
      else if (dy == 0)
        ++tied_y_only;
      else if (dx == dy)
        ++concordant;
      else
        ++discordant;
    }
  }
  const double cd = static_cast<double>(concordant + discordant);
  const double denom = std::sqrt((cd + static_cast<double>(tied_x_only)) * (cd + static_cast<double>(tied_y_only)));
  if (denom == 0.0) throw DataError("kendall_tau_b: undefined when all values of one variable are tied");
  return (static_cast<double>(concordant) - static_cast<double>(discordant)) / denom;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw UsageError("regularized_incomplete_beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The continued fraction converges fastest on this side of the mean.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed(double t, double df) {
  if (!(df > 0.0)) throw UsageError("student_t_two_tailed: degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

TTestResult unpaired_t_test(std::span<const double> a, std::span<const double> b, TTestVariant variant) {
  if (a.size() < 2 || b.size() < 2) throw DataError("t-test: each sample needs at least two values");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = mean(a);
  const double mb = mean(b);
  const double va = sample_variance(a, ma);
  const double vb = sample_variance(b, mb);
  TTestResult out;
  out.variant = variant;
  double se2 = 0.0;
  if (variant == TTestVariant::student) {
    out.degrees_of_freedom = na + nb - 2.0;
    const double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / out.degrees_of_freedom;
    if (!(pooled > 0.0)) throw DataError("t-test: pooled variance is zero");
    se2 = pooled * (1.0 / na + 1.0 / nb);
  } else {
    if (!(va > 0.0) || !(vb > 0.0)) throw DataError("t-test: welch variant requires nonzero variance in both samples");
    const double qa = va / na;
    const double qb = vb / nb;
    se2 = qa + qb;
    out.degrees_of_freedom = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  }
  out.t_statistic = (ma - mb) / std::sqrt(se2);
  out.p_two_tailed = student_t_two_tailed(out.t_statistic, out.degrees_of_freedom);
  return out;
}

std::vector<double> bootstrap_average_pk(const std::vector<std::vector<double>>& reference_columns,
                                         std::span<const double> prediction, int resamples, std::uint64_t seed) {
  if (resamples < 1) throw UsageError("bootstrap: resample count must be >= 1");
  const std::size_t n = prediction.size();
  for (const auto& col : reference_columns)
    if (col.size() != n) throw DataError("bootstrap: reference column length does not match predictions");
  Rng rng(derive_seed(seed, "bootstrap"));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(resamples));
  std::vector<std::vector<double>> ref(reference_columns.size(), std::vector<double>(n));
  std::vector<double> pred(n);
  constexpr int max_redraws = 1000;
  int redraws = 0;
  while (out.size() < static_cast<std::size_t>(resamples)) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = static_cast<std::size_t>(rng.below(n));
      pred[i] = prediction[k];
      for (std::size_t c = 0; c < ref.size(); ++c) ref[c][i] = reference_columns[c][k];
    }
    try {
      out.push_back(average_pk(ref, pred).mean_pk);
    } catch (const DataError&) {
      if (++redraws > max_redraws) throw DataError("bootstrap: resamples keep collapsing to a single reference value");
    }
  }
  return out;
}

TTestVariant parse_ttest_variant(std::string_view name) {
  if (name == "welch") return TTestVariant::welch;
  if (name == "student") return TTestVariant::student;
  throw UsageError("unknown t-test variant '" + std::string(name) + "' (expected welch or student)");
}

}  // namespace cellpk
