#pragma once
// Sigmoid-power model of accuracy gains across introspection iterations:
//   f(t) = a / (1 + exp(-(b t + c)))^3

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace medeval::sigmoid {

struct Point {
  double t = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

struct SigmoidFit {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double rss = 0.0;
  std::vector<Point> points;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

// (1 + exp(-(b t + c)))^-3
double basis(double t, double b, double c);
double eval_f(double a, double b, double c, double t);
inline double eval_f(const SigmoidFit& fit, double t) { return eval_f(fit.a, fit.b, fit.c, t); }

double residual_sum_of_squares(std::span<const Point> points, double a, double b, double c);

// Least-squares amplitude for fixed (b, c): sum g y / sum g^2.
double fit_amplitude(std::span<const Point> points, double b, double c);

struct FitGrid {
  std::vector<double> b_values;
  std::vector<double> c_values;
  static FitGrid standard();  // b in [-1, 2] step 0.05, c in [-3, 6] step 0.1
};

// Grid search with the closed-form amplitude per cell, then 20 rounds of
// coordinate descent (golden-section line search on b, then c).
SigmoidFit fit_full(std::span<const Point> points, const FitGrid& grid = FitGrid::standard());
SigmoidFit fit_fixed(std::span<const Point> points, double b, double c);

struct Forecast {
  std::vector<Point> values;  // t = 0..horizon
  double asymptote = 0.0;
  std::vector<std::string> warnings;
  nlohmann::json to_json() const;
};
Forecast forecast_plateau(const SigmoidFit& fit, int horizon);

// Percentages (any |y| > 1) are scaled to fractions.
std::vector<Point> normalize_points(std::vector<Point> points);
// `t,accuracy` rows; a non-numeric first line is treated as a header.
std::vector<Point> read_points_csv(const std::filesystem::path& path);

inline constexpr double kPublishedA = 0.5274;
inline constexpr double kPublishedB = 0.453;
inline constexpr double kPublishedC = 2.83;

}  // namespace medeval::sigmoid
