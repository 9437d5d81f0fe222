#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "medeval/sigmoid.hpp"
#include "oracles.hpp"
#include "testkit.hpp"

using namespace medeval;
using namespace medeval::sigmoid;

namespace {

const std::vector<Point> kTable{{0, 0.4461}, {1, 0.4713}, {2, 0.4865}};

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::IoError;
}

double direct(double t) {
  return static_cast<double>(oracle::sigmoid_power(0.5274L, 0.453L, 2.83L, static_cast<long double>(t)));
}

}  // namespace

TEST_CASE("published parameters", "[sigmoid]") {
  CHECK(1.0 * 0.9 * 0.586 == Catch::Approx(kPublishedA).margin(1e-12));
  CHECK(kPublishedB == 0.453);
  CHECK(kPublishedC == 2.83);
}

TEST_CASE("closed form against direct evaluation", "[sigmoid]") {
  const std::vector<std::pair<double, double>> expect{{0, 0.4440}, {1, 0.4724}, {2, 0.4913}, {6, 0.5213}};
  for (const auto& [t, y] : expect) {
    const double f = eval_f(kPublishedA, kPublishedB, kPublishedC, t);
    CHECK(std::abs(f - y) <= 5e-4);
    CHECK(std::abs(f - direct(t)) <= 1e-12);
  }
  // The stated 52.21% at six iterations, to a tenth of a point.
  CHECK(std::abs(eval_f(kPublishedA, kPublishedB, kPublishedC, 6) - 0.5221) <= 1e-3);
  for (double t : {0.0, 3.0, 100.0}) CHECK(eval_f(0.0, kPublishedB, kPublishedC, t) == 0.0);
}

TEST_CASE("property: strictly increasing for positive a and b", "[sigmoid]") {
  DeterministicRng rng(2);
  for (int i = 0; i < 200; ++i) {
    const double a = 0.01 + rng.uniform01(), b = 0.01 + 2 * rng.uniform01(), c = -3 + 6 * rng.uniform01();
    const double t = 10 * rng.uniform01();
    CHECK(eval_f(a, b, c, t + 0.5) > eval_f(a, b, c, t));
    CHECK(eval_f(a, b, c, t) < a);
  }
}

TEST_CASE("amplitude on the iteration table", "[sigmoid]") {
  const double a = fit_amplitude(kTable, kPublishedB, kPublishedC);
  CHECK(std::abs(a - 0.526) <= 0.002);
  double num = 0, den = 0;
  for (const auto& p : kTable) {
    const double g = basis(p.t, kPublishedB, kPublishedC);
    num += g * p.y;
    den += g * g;
  }
  CHECK(a == Catch::Approx(num / den).margin(1e-15));

  const std::vector<Point> one{{0, 0.4}};
  CHECK(fit_amplitude(one, kPublishedB, kPublishedC) == Catch::Approx(0.4 / basis(0, kPublishedB, kPublishedC)).margin(1e-15));
  const std::vector<Point> zeros{{0, 0}, {1, 0}, {2, 0}};
  CHECK(fit_amplitude(zeros, kPublishedB, kPublishedC) == 0.0);
  CHECK(code_of([] { fit_amplitude(std::vector<Point>{}, 0.4, 2.8); }) == Errc::EmptyData);
}

TEST_CASE("property: amplitude beats a dense scan", "[sigmoid]") {
  DeterministicRng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Point> pts;
    const std::size_t n = 1 + rng.uniform_index(6);
    for (std::size_t i = 0; i < n; ++i) pts.push_back({static_cast<double>(i), 0.3 + 0.4 * rng.uniform01()});
    const double b = 0.1 + rng.uniform01(), c = -1 + 4 * rng.uniform01();
    const double a = fit_amplitude(pts, b, c);
    const double best = residual_sum_of_squares(pts, a, b, c);
    for (int k = 0; k <= 4000; ++k) {
      const double trial_a = 2.0 * k / 4000.0;
      CHECK(best <= residual_sum_of_squares(pts, trial_a, b, c) + 1e-15);
    }
  }
}

TEST_CASE("full fit recovers synthetic truth", "[sigmoid]") {
  std::vector<Point> pts;
  for (int t = 0; t <= 5; ++t) pts.push_back({static_cast<double>(t), eval_f(0.5, 0.45, 2.8, t)});
  const auto fit = fit_full(pts);
  CHECK(fit.rss < 1e-10);
  CHECK(std::abs(fit.a - 0.5) <= 1e-3);
  CHECK(fit.warnings.empty());
  const auto again = fit_full(pts);
  CHECK(again.a == fit.a);
  CHECK(again.b == fit.b);
  CHECK(again.c == fit.c);
}

TEST_CASE("full fit on the table does no worse than the published curve", "[sigmoid]") {
  const auto fit = fit_full(kTable);
  CHECK(fit.rss <= residual_sum_of_squares(kTable, kPublishedA, kPublishedB, kPublishedC));
  CHECK(code_of([] { fit_full(std::vector<Point>{{0, 0.4}, {1, 0.5}}); }) == Errc::TooFewPoints);
  const auto fixed = fit_fixed(kTable, kPublishedB, kPublishedC);
  CHECK(fixed.a == fit_amplitude(kTable, kPublishedB, kPublishedC));
}

TEST_CASE("forecast", "[sigmoid]") {
  SigmoidFit published{kPublishedA, kPublishedB, kPublishedC, 0.0, {}, {}};
  const auto f = forecast_plateau(published, 6);
  REQUIRE(f.values.size() == 7);
  CHECK(std::abs(f.values.back().y - 0.5213) <= 5e-4);
  CHECK(f.asymptote == kPublishedA);
  for (std::size_t i = 1; i < f.values.size(); ++i) CHECK(f.values[i].y > f.values[i - 1].y);
  for (const auto& v : f.values) CHECK(v.y <= f.asymptote);
  CHECK(f.warnings.empty());

  SigmoidFit falling{0.5, -0.3, 1.0, 0.0, {}, {}};
  const auto g = forecast_plateau(falling, 3);
  REQUIRE_FALSE(g.warnings.empty());
  CHECK(g.warnings[0].find("b < 0") != std::string::npos);
  CHECK(code_of([&] { forecast_plateau(published, 0); }) == Errc::InvalidValue);
}

TEST_CASE("point normalization and CSV input", "[sigmoid]") {
  const auto pct = normalize_points({{0, 44.61}, {1, 47.13}});
  CHECK(pct[0].y == Catch::Approx(0.4461).margin(1e-12));
  const auto frac = normalize_points({{0, 0.4461}});
  CHECK(frac[0].y == 0.4461);

  testkit::TempDir dir("sig");
  write_file_atomic(dir / "p.csv", "iteration,accuracy\n0,44.61\n1,47.13\n2,48.65\n");
  const auto pts = read_points_csv(dir / "p.csv");
  REQUIRE(pts.size() == 3);
  CHECK(pts[2] == Point{2, 48.65});
  write_file_atomic(dir / "bad.csv", "0,44\n1,abc\n");
  CHECK(code_of([&] { read_points_csv(dir / "bad.csv"); }) == Errc::InvalidValue);
  write_file_atomic(dir / "empty.csv", "t,y\n");
  CHECK(code_of([&] { read_points_csv(dir / "empty.csv"); }) == Errc::EmptyData);
}
