#include "medeval/sigmoid.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

#include "medeval/error.hpp"
#include "medeval/util.hpp"

namespace medeval::sigmoid {

using nlohmann::json;

double basis(double t, double b, double c) {
  const double s = 1.0 / (1.0 + std::exp(-(b * t + c)));
  return s * s * s;
}

double eval_f(double a, double b, double c, double t) { return a * basis(t, b, c); }

double residual_sum_of_squares(std::span<const Point> points, double a, double b, double c) {
  double rss = 0.0;
  for (const auto& p : points) {
    const double r = p.y - eval_f(a, b, c, p.t);
    rss += r * r;
  }
  return rss;
}

double fit_amplitude(std::span<const Point> points, double b, double c) {
  if (points.empty()) throw Error(Errc::EmptyData, "no data points");
  double num = 0.0, den = 0.0;
  for (const auto& p : points) {
    const double g = basis(p.t, b, c);
    num += g * p.y;
    den += g * g;
  }
  if (den == 0.0) throw Error(Errc::InvalidValue, "basis vanishes at every point");
  return num / den;
}

FitGrid FitGrid::standard() {
  FitGrid g;
  for (int i = -20; i <= 40; ++i) g.b_values.push_back(i * 0.05);
  for (int i = -30; i <= 60; ++i) g.c_values.push_back(i * 0.1);
  return g;
}

namespace {

double profile_rss(std::span<const Point> points, double b, double c) {
  return residual_sum_of_squares(points, fit_amplitude(points, b, c), b, c);
}

template <typename F>
double golden_section(F f, double lo, double hi, int iters = 80) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iters && hi - lo > 1e-15; ++i) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  return f1 < f2 ? x1 : x2;
}

double spacing(const std::vector<double>& v) {
  if (v.size() < 2) return 0.1;
  double s = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < v.size(); ++i) s = std::min(s, std::abs(v[i] - v[i - 1]));
  return s > 0 ? s : 0.1;
}

void annotate(SigmoidFit& fit) {
  if (!(fit.a > 0.0 && fit.a <= 1.0)) fit.warnings.push_back("amplitude outside (0, 1]");
  if (fit.b < 0.0) fit.warnings.push_back("decreasing fit: b < 0");
}

}  // namespace

SigmoidFit fit_fixed(std::span<const Point> points, double b, double c) {
  SigmoidFit fit;
  fit.a = fit_amplitude(points, b, c);
  fit.b = b;
  fit.c = c;
  fit.rss = residual_sum_of_squares(points, fit.a, b, c);
  fit.points.assign(points.begin(), points.end());
  annotate(fit);
  return fit;
}

SigmoidFit fit_full(std::span<const Point> points, const FitGrid& grid) {
  if (points.size() < 3) {
    throw Error(Errc::TooFewPoints, "full fit needs at least 3 points, got " + std::to_string(points.size()),
                {{"points", points.size()}});
  }
  if (grid.b_values.empty() || grid.c_values.empty()) throw Error(Errc::InvalidValue, "empty fit grid");

  double best_b = grid.b_values.front(), best_c = grid.c_values.front();
  double best = std::numeric_limits<double>::infinity();
  for (double b : grid.b_values) {
    for (double c : grid.c_values) {
      const double r = profile_rss(points, b, c);
      if (r < best) {
        best = r;
        best_b = b;
        best_c = c;
      }
    }
  }

  double hb = spacing(grid.b_values), hc = spacing(grid.c_values);
  double b = best_b, c = best_c;
  for (int iter = 0; iter < 20; ++iter) {
    const double nb = golden_section([&](double x) { return profile_rss(points, x, c); }, b - hb, b + hb);
    const double nc = golden_section([&](double x) { return profile_rss(points, nb, x); }, c - hc, c + hc);
    // Keep the bracket wide enough to follow a curved valley.
    hb = std::max(hb * 0.5, 4.0 * std::abs(nb - b));
    hc = std::max(hc * 0.5, 4.0 * std::abs(nc - c));
    if (profile_rss(points, nb, nc) <= profile_rss(points, b, c)) {
      b = nb;
      c = nc;
    }
  }
  return fit_fixed(points, b, c);
}

Forecast forecast_plateau(const SigmoidFit& fit, int horizon) {
  if (horizon < 1) throw Error(Errc::InvalidValue, "horizon must be >= 1");
  Forecast f;
  for (int t = 0; t <= horizon; ++t) f.values.push_back({static_cast<double>(t), eval_f(fit, t)});
  f.asymptote = fit.b > 0 ? fit.a : (fit.b < 0 ? 0.0 : fit.a * basis(0.0, 0.0, fit.c));
  if (fit.b < 0) f.warnings.push_back("decreasing fit: b < 0");
  return f;
}

std::vector<Point> normalize_points(std::vector<Point> points) {
  bool percent = false;
  for (const auto& p : points) percent = percent || std::abs(p.y) > 1.0;
  if (percent) {
    for (auto& p : points) p.y /= 100.0;
  }
  return points;
}

std::vector<Point> read_points_csv(const std::filesystem::path& path) {
  std::vector<Point> out;
  std::size_t line_no = 0;
  for (const auto& raw : read_lines(path)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(Errc::InvalidValue, path.string() + ":" + std::to_string(line_no) + ": expected t,accuracy");
    const std::string ts = trim(line.substr(0, comma)), ys = trim(line.substr(comma + 1));
    char* end_t = nullptr;
    char* end_y = nullptr;
    const double t = std::strtod(ts.c_str(), &end_t);
    const double y = std::strtod(ys.c_str(), &end_y);
    if (ts.empty() || ys.empty() || *end_t != '\0' || *end_y != '\0') {
      if (out.empty() && line_no == 1) continue;  // header
      throw Error(Errc::InvalidValue, path.string() + ":" + std::to_string(line_no) + ": non-numeric value");
    }
    out.push_back({t, y});
  }
  if (out.empty()) throw Error(Errc::EmptyData, path.string() + " has no data rows");
  return out;
}

json SigmoidFit::to_json() const {
  json pts = json::array();
  for (const auto& p : points) pts.push_back({{"t", p.t}, {"accuracy", p.y}});
  return json{{"a", a}, {"b", b}, {"c", c}, {"rss", rss}, {"points", pts}, {"warnings", warnings}};
}

json Forecast::to_json() const {
  json vals = json::array();
  for (const auto& p : values) vals.push_back({{"t", p.t}, {"accuracy", p.y}});
  return json{{"values", vals}, {"asymptote", asymptote}, {"warnings", warnings}};
}

}  // namespace medeval::sigmoid
