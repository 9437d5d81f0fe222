#pragma once
// Brute-force reference implementations used to check the library. Written
// from the textbook definitions, in long double, and deliberately not sharing
// code paths with src/.

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace oracle {

struct Case {
  std::vector<double> m;  // model score per response
  std::vector<double> h;  // human score per response
};

struct Rate {
  std::size_t matched = 0;
  std::size_t counted = 0;
  double rate() const { return counted == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(counted); }
};

// Sign-triple match over every unordered pair.
Rate accuracy_2tuple(const std::vector<Case>& cases);
// Three-response cases only; weak orderings compared through dense ranks.
Rate accuracy_triple(const std::vector<Case>& cases);

// rank_i = 1 + #{x_j < x_i} + (#{x_j == x_i} - 1) / 2
std::vector<long double> mid_ranks(std::span<const double> xs);
std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys);
std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys);

// Residual-matrix ANOVA. nullopt when the denominator vanishes.
std::optional<double> icc_single(const std::vector<std::vector<double>>& r);
std::optional<double> icc_average(const std::vector<std::vector<double>>& r);

// Coincidence-matrix construction with the squared-difference metric.
std::optional<double> krippendorff_interval(const std::vector<std::vector<std::optional<double>>>& r);

struct T {
  double t = 0.0;
  double p = 1.0;
  std::size_t df = 0;
};
// Two-sided p from the Student t distribution in Boost.Math. nullopt when the
// differences have zero variance.
std::optional<T> paired_t(std::span<const double> a, std::span<const double> b);

// (wins for a, ties, wins for b) over paired values.
struct Wtl {
  std::size_t a = 0, tie = 0, b = 0;
};
Wtl win_tie(const std::vector<std::pair<double, double>>& pairs);

// Direct long double evaluation of a / (1 + e^-(bt + c))^3.
long double sigmoid_power(long double a, long double b, long double c, long double t);

// Best accuracy of any 2D linear split (either orientation), enumerating
// every critical direction.
double best_linear_split(const std::vector<std::pair<double, double>>& pts, const std::vector<bool>& labels);

}  // namespace oracle
