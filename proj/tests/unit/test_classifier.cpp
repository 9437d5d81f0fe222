#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "medeval/classifier.hpp"
#include "oracles.hpp"
#include "testkit.hpp"

using namespace medeval;
using namespace medeval::classifier;

namespace {

// Two axes: text containing "plus" points along +x, "minus" along -x.
class AxisEmbedder final : public knowledge::Embedder {
 public:
  std::size_t dim() const override { return 2; }
  std::vector<float> embed(std::string_view text) const override {
    if (text.find("plus") != std::string_view::npos) return {1.0f, 0.0f};
    if (text.find("minus") != std::string_view::npos) return {-1.0f, 0.0f};
    return {0.0f, 1.0f};
  }
  std::string fingerprint() const override { return "axis-2"; }
};

struct Data {
  std::vector<std::vector<double>> xs;
  std::vector<bool> ys;
};

Data blobs(std::uint64_t seed, std::size_t per_class, double spread) {
  DeterministicRng rng(seed);
  Data d;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const bool high = i % 2 == 0;
    const double cx = high ? 2.0 : -2.0, cy = high ? 1.0 : -1.0;
    d.xs.push_back({cx + spread * (2 * rng.uniform01() - 1), cy + spread * (2 * rng.uniform01() - 1)});
    d.ys.push_back(high);
  }
  return d;
}

Data xor_points(std::uint64_t seed, std::size_t per_quadrant) {
  DeterministicRng rng(seed);
  Data d;
  for (std::size_t i = 0; i < 4 * per_quadrant; ++i) {
    const int q = static_cast<int>(i % 4);
    const double sx = (q == 0 || q == 3) ? 1.0 : -1.0, sy = (q == 0 || q == 1) ? 1.0 : -1.0;
    d.xs.push_back({sx * (0.5 + rng.uniform01()), sy * (0.5 + rng.uniform01())});
    d.ys.push_back(sx * sy > 0);
  }
  return d;
}

InstructionRecord record_with_text(const std::string& q, const std::string& text) {
  auto r = testkit::make_record(q, {5, 4});
  r.evaluation.raw_text = text;
  return r;
}

}  // namespace

TEST_CASE("separable blobs reach full validation accuracy", "[classifier]") {
  const auto d = blobs(1, 20, 0.8);
  const auto clf = train_vectors(d.xs, d.ys, TrainOptions{}, "blobs");
  CHECK(clf.validation_accuracy == 1.0);
  CHECK(clf.training_accuracy == 1.0);
  CHECK(clf.warnings.empty());
  CHECK(clf.weights.size() == 2);
}

TEST_CASE("XOR stays at or below the best linear split and warns", "[classifier]") {
  const auto d = xor_points(2, 10);
  const TrainOptions opt;
  const auto clf = train_vectors(d.xs, d.ys, opt, "xor");
  const auto split = stratified_split(d.ys, opt.validation_fraction, opt.seed);
  std::vector<std::pair<double, double>> val_pts, all_pts;
  std::vector<bool> val_labels;
  for (auto i : split.validation) {
    val_pts.emplace_back(d.xs[i][0], d.xs[i][1]);
    val_labels.push_back(d.ys[i]);
  }
  for (const auto& x : d.xs) all_pts.emplace_back(x[0], x[1]);
  CHECK(clf.validation_accuracy <= oracle::best_linear_split(val_pts, val_labels) + 1e-9);
  CHECK(clf.training_accuracy <= oracle::best_linear_split(all_pts, d.ys) + 1e-9);
  CHECK(clf.validation_accuracy <= 0.75 + 1e-9);
  REQUIRE_FALSE(clf.warnings.empty());
  CHECK(clf.warnings[0].rfind("LowSeparability", 0) == 0);
}

TEST_CASE("training errors", "[classifier]") {
  const auto d = blobs(3, 5, 0.5);
  std::vector<bool> all_high(d.ys.size(), true);
  CHECK_THROWS_MATCHES(train_vectors(d.xs, all_high, {}, "f"), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == Errc::SingleClassInput; }));
  TrainOptions empty;
  empty.c_grid.clear();
  CHECK_THROWS_MATCHES(train_vectors(d.xs, d.ys, empty, "f"), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == Errc::EmptyGrid; }));
}

TEST_CASE("stratified split keeps both classes and is seeded", "[classifier]") {
  std::vector<bool> labels;
  for (int i = 0; i < 50; ++i) labels.push_back(i < 30);
  const auto a = stratified_split(labels, 0.2, 7), b = stratified_split(labels, 0.2, 7);
  CHECK(a.validation == b.validation);
  std::size_t high = 0;
  for (auto i : a.validation) high += labels[i] ? 1 : 0;
  CHECK(high == 6);
  CHECK(a.validation.size() == 10);
  CHECK(a.train.size() + a.validation.size() == labels.size());
}

TEST_CASE("grid search is deterministic under a fixed seed", "[classifier]") {
  const auto d = blobs(5, 15, 2.5);
  const auto a = train_vectors(d.xs, d.ys, {}, "f");
  const auto b = train_vectors(d.xs, d.ys, {}, "f");
  CHECK(a.weights == b.weights);
  CHECK(a.bias == b.bias);
  CHECK(a.c == b.c);
}

TEST_CASE("property: scaling features with C/s^2 preserves every sign", "[classifier]") {
  for (double s : {0.5, 2.0, 4.0}) {
    const auto d = blobs(6, 20, 0.8);
    auto scaled = d.xs;
    for (auto& x : scaled) {
      for (auto& v : x) v *= s;
    }
    const double c = 1.0;
    std::vector<int> ys;
    for (bool y : d.ys) ys.push_back(y ? 1 : -1);
    const auto base = fit_hinge(d.xs, ys, c, 200, 0.1);
    const auto other = fit_hinge(scaled, ys, c / (s * s), 200, 0.1);
    for (std::size_t i = 0; i < d.xs.size(); ++i) {
      double a = base.bias, b = other.bias;
      for (std::size_t k = 0; k < 2; ++k) {
        a += base.weights[k] * d.xs[i][k];
        b += other.weights[k] * scaled[i][k];
      }
      CHECK((a >= 0) == (b >= 0));
    }
  }
}

TEST_CASE("classify follows the weight direction", "[classifier]") {
  AxisEmbedder e;
  TrainedClassifier clf;
  clf.weights = {1.0, 0.0};
  clf.bias = 0.0;
  clf.fingerprint = e.fingerprint();
  std::vector<InstructionRecord> recs{record_with_text("a", "plus side"), record_with_text("b", "minus side")};
  const auto once = classify(clf, recs, e);
  CHECK(once[0].quality == Quality::High);
  CHECK(once[1].quality == Quality::Low);
  CHECK(classify(clf, once, e) == once);

  knowledge::HashEmbedder other(2);
  CHECK_THROWS_MATCHES(classify(clf, recs, other), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == Errc::EmbedderMismatch; }));
}

TEST_CASE("train on records uses the evaluation text", "[classifier]") {
  AxisEmbedder e;
  std::vector<std::pair<InstructionRecord, Quality>> labeled;
  for (int i = 0; i < 10; ++i) {
    labeled.emplace_back(record_with_text("h" + std::to_string(i), "plus " + std::to_string(i)), Quality::High);
    labeled.emplace_back(record_with_text("l" + std::to_string(i), "minus " + std::to_string(i)), Quality::Low);
  }
  const auto clf = train(labeled, e);
  CHECK(clf.fingerprint == "axis-2");
  CHECK(clf.validation_accuracy == 1.0);
  CHECK(clf.predict_high(std::vector<double>{1.0, 0.0}));
}

TEST_CASE("split_by_quality", "[classifier]") {
  std::vector<InstructionRecord> recs;
  for (int i = 0; i < 15; ++i) {
    auto r = testkit::make_record("q" + std::to_string(i), {3, 4});
    r.quality = i < 10 ? Quality::High : Quality::Low;
    recs.push_back(r);
  }
  const auto s = split_by_quality(recs);
  CHECK(s.r_prime.size() == 10);
  CHECK(s.s_prime.size() == 5);
  CHECK(split_by_quality({}).r_prime.empty());
  recs[0].quality = Quality::Unclassified;
  CHECK_THROWS_MATCHES(split_by_quality(recs), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == Errc::UnclassifiedPresent; }));
}

TEST_CASE("split_by_quality at full scale has no intersection", "[classifier]") {
  std::vector<InstructionRecord> recs;
  auto base = testkit::make_record("template", {5, 4});
  for (int i = 0; i < 4788 + 3823; ++i) {
    auto r = base;
    r.eval_case.case_id = "c" + std::to_string(i);
    r.quality = i < 4788 ? Quality::High : Quality::Low;
    recs.push_back(std::move(r));
  }
  const auto s = split_by_quality(recs);
  CHECK(s.r_prime.size() == 4788);
  CHECK(s.s_prime.size() == 3823);
  std::set<std::string> hi;
  for (const auto& r : s.r_prime) hi.insert(r.record_id());
  for (const auto& r : s.s_prime) CHECK_FALSE(hi.count(r.record_id()));
}

TEST_CASE("classifier persists to JSON", "[classifier]") {
  testkit::TempDir dir("clf");
  const auto d = blobs(8, 10, 0.5);
  const auto clf = train_vectors(d.xs, d.ys, {}, "blobs");
  clf.save(dir / "clf.json");
  const auto back = TrainedClassifier::load(dir / "clf.json");
  CHECK(back.weights == clf.weights);
  CHECK(back.bias == clf.bias);
  CHECK(back.c == clf.c);
  CHECK(back.fingerprint == "blobs");
}
