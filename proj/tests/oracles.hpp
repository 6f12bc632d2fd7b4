#pragma once

// Independent reference implementations used only by the tests. They follow
// the textbook definitions literally and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

struct PairCounts {
  std::uint64_t considered = 0, concordant = 0, discordant = 0, pred_ties = 0;
  // pk as the exact rational (2C + T) / (2(C + D + T))
  std::uint64_t num() const { return 2 * concordant + pred_ties; }
  std::uint64_t den() const { return 2 * considered; }
  double pk() const { return static_cast<double>(num()) / static_cast<double>(den()); }
};

inline PairCounts pk_pairs(const std::vector<double>& ref, const std::vector<double>& pred) {
  PairCounts c;
  for (std::size_t i = 0; i < ref.size(); ++i)
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!(ref[i] < ref[j])) continue;  // each untied pair once, oriented low -> high
      ++c.considered;
      if (pred[i] < pred[j]) ++c.concordant;
      else if (pred[i] > pred[j]) ++c.discordant;
      else ++c.pred_ties;
    }
  return c;
}

inline double tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  double c = 0, d = 0, tx = 0, ty = 0, n0 = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      n0 += 1;
      const double sx = (x[i] > x[j]) - (x[i] < x[j]);
      const double sy = (y[i] > y[j]) - (y[i] < y[j]);
      if (sx == 0) tx += 1;
      if (sy == 0) ty += 1;
      if (sx * sy > 0) c += 1;
      if (sx * sy < 0) d += 1;
    }
  return (c - d) / std::sqrt((n0 - tx) * (n0 - ty));
}

// Adaptive Simpson on [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b, double eps, int depth = 50) {
  auto simpson = [&](double l, double r, double fl, double fm, double fr) { return (r - l) / 6 * (fl + 4 * fm + fr); };
  std::function<double(double, double, double, double, double, double, double, int)> rec =
      [&](double l, double r, double fl, double fm, double fr, double whole, double tol, int left) {
        const double m = (l + r) / 2, lm = (l + m) / 2, rm = (m + r) / 2;
        const double flm = f(lm), frm = f(rm);
        const double a1 = simpson(l, m, fl, flm, fm), a2 = simpson(m, r, fm, frm, fr);
        if (left <= 0 || std::fabs(a1 + a2 - whole) <= 15 * tol) return a1 + a2 + (a1 + a2 - whole) / 15;
        return rec(l, m, fl, flm, fm, a1, tol / 2, left - 1) + rec(m, r, fm, frm, fr, a2, tol / 2, left - 1);
      };
  const double fa = f(a), fb = f(b), fm = f((a + b) / 2);
  return rec(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), eps, depth);
}

inline double student_density(double t, double df) {
  const double logc = std::lgamma((df + 1) / 2) - std::lgamma(df / 2) - 0.5 * std::log(df * M_PI);
  return std::exp(logc - (df + 1) / 2 * std::log1p(t * t / df));
}

// Two-tailed p by integrating the density over [-|t|, |t|].
inline double student_two_tailed(double t, double df) {
  const double inner = integrate([df](double x) { return student_density(x, df); }, 0.0, std::fabs(t), 1e-13);
  return 1.0 - 2.0 * inner;
}

struct PooledT {
  double t, df, p;
};

inline PooledT pooled_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = a.size(), nb = b.size();
  double ma = 0, mb = 0;
  for (double v : a) ma += v;
  for (double v : b) mb += v;
  ma /= na;
  mb /= nb;
  double ssa = 0, ssb = 0;
  for (double v : a) ssa += (v - ma) * (v - ma);
  for (double v : b) ssb += (v - mb) * (v - mb);
  const double df = na + nb - 2;
  const double sp2 = (ssa + ssb) / df;
  const double t = (ma - mb) / std::sqrt(sp2 * (1 / na + 1 / nb));
  return {t, df, student_two_tailed(t, df)};
}

struct Point {
  double x, y;
};

inline double polygon_area(const std::vector<Point>& p) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Point& a = p[i];
    const Point& b = p[(i + 1) % p.size()];
    s += a.x * b.y - b.x * a.y;
  }
  return std::fabs(s) / 2;
}

// Sutherland-Hodgman: clip `subject` by the convex counterclockwise `clip`.
inline std::vector<Point> clip_polygon(std::vector<Point> subject, const std::vector<Point>& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Point a = clip[e], b = clip[(e + 1) % clip.size()];
    auto inside = [&](const Point& p) { return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0; };
    auto cross = [&](const Point& p, const Point& q) {
      const double a1 = b.y - a.y, b1 = a.x - b.x, c1 = a1 * a.x + b1 * a.y;
      const double a2 = q.y - p.y, b2 = p.x - q.x, c2 = a2 * p.x + b2 * p.y;
      const double det = a1 * b2 - a2 * b1;
      return Point{(b2 * c1 - b1 * c2) / det, (a1 * c2 - a2 * c1) / det};
    };
    std::vector<Point> out;
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Point cur = subject[i], prev = subject[(i + subject.size() - 1) % subject.size()];
      if (inside(cur)) {
        if (!inside(prev)) out.push_back(cross(prev, cur));
        out.push_back(cur);
      } else if (inside(prev)) {
        out.push_back(cross(prev, cur));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

// Area fraction of a w x h rectangle that stays inside it after rotation by
// `degrees` about its center.
inline double rotated_overlap_fraction(double w, double h, double degrees) {
  const double r = degrees * M_PI / 180.0, c = std::cos(r), s = std::sin(r);
  const std::vector<Point> rect{{-w / 2, -h / 2}, {w / 2, -h / 2}, {w / 2, h / 2}, {-w / 2, h / 2}};
  std::vector<Point> rot;
  for (const auto& p : rect) rot.push_back({c * p.x - s * p.y, s * p.x + c * p.y});
  return polygon_area(clip_polygon(rot, rect)) / (w * h);
}

inline double rotated_overlap_monte_carlo(double w, double h, double degrees, int samples, std::uint64_t seed) {
  const double r = degrees * M_PI / 180.0, c = std::cos(r), s = std::sin(r);
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ux(-w / 2, w / 2), uy(-h / 2, h / 2);
  int hit = 0;
  for (int i = 0; i < samples; ++i) {
    const double x = ux(gen), y = uy(gen);
    const double sx = c * x + s * y, sy = -s * x + c * y;  // inverse rotation
    if (std::fabs(sx) <= w / 2 && std::fabs(sy) <= h / 2) ++hit;
  }
  return static_cast<double>(hit) / samples;
}

// Right-angle rotations by transposes and flips of an interleaved raster.
inline std::vector<std::uint8_t> rotate_grid(const std::vector<std::uint8_t>& src, int w, int h, int ch, int degrees) {
  auto at = [&](int r, int c, int k) { return src[(static_cast<std::size_t>(r) * w + c) * ch + k]; };
  std::vector<std::uint8_t> out(src.size());
  const int ow = (degrees % 180 == 0) ? w : h;
  const int oh = (degrees % 180 == 0) ? h : w;
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c)
      for (int k = 0; k < ch; ++k) {
        std::uint8_t v = 0;
        switch (degrees) {
          case 0: v = at(r, c, k); break;
          case 90: v = at(c, w - 1 - r, k); break;   // transpose, then flip rows
          case 180: v = at(h - 1 - r, w - 1 - c, k); break;
          case 270: v = at(h - 1 - c, r, k); break;  // transpose, then flip columns
        }
        out[(static_cast<std::size_t>(r) * ow + c) * ch + k] = v;
      }
  return out;
}

// Central finite-difference gradient of f at x, perturbing each entry.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, std::vector<double*> entries,
                                            double step) {
  std::vector<double> g;
  for (double* e : entries) {
    const double keep = *e;
    *e = keep + step;
    const double up = f();
    *e = keep - step;
    const double down = f();
    *e = keep;
    g.push_back((up - down) / (2 * step));
  }
  return g;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nb);
  return denom == 0 ? 0 : std::sqrt(diff) / denom;
}

}  // namespace oracle
