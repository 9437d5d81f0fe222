#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include <boost/math/distributions/students_t.hpp>

namespace oracle {

namespace {

int sgn(long double v) { return (v > 0) - (v < 0); }

std::vector<int> dense_ranks(const std::vector<double>& xs) {
  std::set<double> distinct(xs.begin(), xs.end());
  std::vector<int> out;
  for (double x : xs) out.push_back(static_cast<int>(std::distance(distinct.begin(), distinct.find(x))));
  return out;
}

}  // namespace

Rate accuracy_2tuple(const std::vector<Case>& cases) {
  Rate r;
  for (const auto& c : cases) {
    for (std::size_t j = 0; j < c.m.size(); ++j) {
      for (std::size_t k = j + 1; k < c.m.size(); ++k) {
        ++r.counted;
        if (sgn(static_cast<long double>(c.m[j]) - c.m[k]) == sgn(static_cast<long double>(c.h[j]) - c.h[k])) ++r.matched;
      }
    }
  }
  return r;
}

Rate accuracy_triple(const std::vector<Case>& cases) {
  Rate r;
  for (const auto& c : cases) {
    if (c.m.size() != 3) continue;
    ++r.counted;
    if (dense_ranks(c.m) == dense_ranks(c.h)) ++r.matched;
  }
  return r;
}

std::vector<long double> mid_ranks(std::span<const double> xs) {
  std::vector<long double> out;
  for (double x : xs) {
    long double less = 0, equal = 0;
    for (double y : xs) {
      less += y < x ? 1 : 0;
      equal += y == x ? 1 : 0;
    }
    out.push_back(1 + less + (equal - 1) / 2);
  }
  return out;
}

namespace {

std::optional<double> pearson_ld(const std::vector<long double>& x, const std::vector<long double>& y) {
  const long double n = static_cast<long double>(x.size());
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

}  // namespace

std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
  return pearson_ld({xs.begin(), xs.end()}, {ys.begin(), ys.end()});
}

std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys) {
  return pearson_ld(mid_ranks(xs), mid_ranks(ys));
}

namespace {

struct MeanSquares {
  long double rows, cols, err;
  long double n, k;
};

MeanSquares anova(const std::vector<std::vector<double>>& r) {
  const std::size_t n = r.size(), k = r[0].size();
  std::vector<long double> rm(n, 0), cm(k, 0);
  long double g = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      rm[i] += r[i][j] / static_cast<long double>(k);
      cm[j] += r[i][j] / static_cast<long double>(n);
      g += r[i][j] / static_cast<long double>(n * k);
    }
  }
  long double ssr = 0, ssc = 0, sse = 0;
  for (std::size_t i = 0; i < n; ++i) ssr += (rm[i] - g) * (rm[i] - g) * k;
  for (std::size_t j = 0; j < k; ++j) ssc += (cm[j] - g) * (cm[j] - g) * n;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const long double e = r[i][j] - rm[i] - cm[j] + g;
      sse += e * e;
    }
  }
  const long double ln = static_cast<long double>(n), lk = static_cast<long double>(k);
  return {ssr / (ln - 1), ssc / (lk - 1), sse / ((ln - 1) * (lk - 1)), ln, lk};
}

}  // namespace

std::optional<double> icc_single(const std::vector<std::vector<double>>& r) {
  const auto ms = anova(r);
  const long double den = ms.rows + (ms.k - 1) * ms.err + ms.k * (ms.cols - ms.err) / ms.n;
  if (std::fabs(den) < 1e-12L) return std::nullopt;
  return static_cast<double>((ms.rows - ms.err) / den);
}

std::optional<double> icc_average(const std::vector<std::vector<double>>& r) {
  const auto ms = anova(r);
  const long double den = ms.rows + (ms.cols - ms.err) / ms.n;
  if (std::fabs(den) < 1e-12L) return std::nullopt;
  return static_cast<double>((ms.rows - ms.err) / den);
}

std::optional<double> krippendorff_interval(const std::vector<std::vector<std::optional<double>>>& r) {
  std::map<std::pair<double, double>, long double> o;  // coincidence matrix
  for (const auto& unit : r) {
    std::vector<double> vals;
    for (const auto& v : unit) {
      if (v) vals.push_back(*v);
    }
    if (vals.size() < 2) continue;
    const long double w = 1.0L / static_cast<long double>(vals.size() - 1);
    for (std::size_t i = 0; i < vals.size(); ++i) {
      for (std::size_t j = 0; j < vals.size(); ++j) {
        if (i != j) o[{vals[i], vals[j]}] += w;
      }
    }
  }
  if (o.empty()) return std::nullopt;
  std::map<double, long double> nc;
  long double n = 0;
  for (const auto& [ck, v] : o) {
    nc[ck.first] += v;
    n += v;
  }
  long double dobs = 0, dexp = 0;
  for (const auto& [ck, v] : o) dobs += v * (ck.first - ck.second) * (ck.first - ck.second);
  for (const auto& [c, a] : nc) {
    for (const auto& [k, b] : nc) dexp += a * b * (c - k) * (c - k);
  }
  dobs /= n;
  dexp /= n * (n - 1);
  if (dexp <= 1e-15L) return std::nullopt;
  return static_cast<double>(1 - dobs / dexp);
}

std::optional<T> paired_t(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  long double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += (static_cast<long double>(a[i]) - b[i]) / n;
  long double ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double d = static_cast<long double>(a[i]) - b[i] - mean;
    ss += d * d;
  }
  long double scale = 0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::fabs(static_cast<long double>(a[i]) - b[i]));
  const long double sd = std::sqrt(ss / (n - 1));
  // Constant differences (up to rounding) have no finite statistic.
  if (sd <= 1e-12L * scale || ss == 0) return std::nullopt;
  const double t = static_cast<double>(mean / (sd / std::sqrt(static_cast<long double>(n))));
  boost::math::students_t dist(static_cast<double>(n - 1));
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  return T{t, p, n - 1};
}

Wtl win_tie(const std::vector<std::pair<double, double>>& pairs) {
  Wtl w;
  for (const auto& [x, y] : pairs) {
    if (x > y) ++w.a;
    else if (x < y) ++w.b;
    else ++w.tie;
  }
  return w;
}

long double sigmoid_power(long double a, long double b, long double c, long double t) {
  const long double s = 1.0L / (1.0L + std::exp(-(b * t + c)));
  return a * s * s * s;
}

double best_linear_split(const std::vector<std::pair<double, double>>& pts, const std::vector<bool>& labels) {
  std::vector<long double> angles{0.0L};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const long double dx = pts[j].first - pts[i].first, dy = pts[j].second - pts[i].second;
      if (dx == 0 && dy == 0) continue;
      const long double base = std::atan2(dy, dx) + std::numbers::pi_v<long double> / 2;
      for (long double eps : {-1e-9L, 0.0L, 1e-9L}) angles.push_back(base + eps);
    }
  }
  const double n = static_cast<double>(pts.size());
  std::size_t best = 0;
  for (long double th : angles) {
    std::vector<std::pair<long double, bool>> proj;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      proj.emplace_back(std::cos(th) * pts[i].first + std::sin(th) * pts[i].second, labels[i]);
    }
    std::sort(proj.begin(), proj.end());
    // Threshold before index s: everything at or after s predicted true.
    std::size_t pos_total = 0;
    for (const auto& p : proj) pos_total += p.second ? 1 : 0;
    std::size_t neg_before = 0, pos_before = 0;
    for (std::size_t s = 0; s <= proj.size(); ++s) {
      if (s == 0 || s == proj.size() || proj[s].first != proj[s - 1].first) {
        const std::size_t correct = neg_before + (pos_total - pos_before);
        best = std::max({best, correct, pts.size() - correct});
      }
      if (s < proj.size()) (proj[s].second ? pos_before : neg_before)++;
    }
  }
  return static_cast<double>(best) / n;
}

}  // namespace oracle
