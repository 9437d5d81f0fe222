#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include "medeval/curriculum.hpp"
#include "testkit.hpp"

using namespace medeval;
using namespace medeval::curriculum;

namespace {

std::vector<std::string> ids(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::IoError;
}

std::vector<InstructionRecord> records(std::size_t n_high, std::size_t n_low) {
  std::vector<InstructionRecord> out;
  for (std::size_t i = 0; i < n_high; ++i) out.push_back(testkit::make_record("high " + std::to_string(i), {5, 4}));
  for (std::size_t i = 0; i < n_low; ++i) out.push_back(testkit::make_record("low " + std::to_string(i), {2, 3}, Source::LowTier));
  return out;
}

std::vector<std::string> record_ids(const std::vector<InstructionRecord>& rs, Source src) {
  std::vector<std::string> out;
  for (const auto& r : rs) {
    if (r.source == src) out.push_back(r.record_id());
  }
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("stage sizes at full scale", "[curriculum]") {
  const auto r = ids("r", 4788), s = ids("s", 3823);
  const auto p = plan(r, s, 1911, 2394, 11);
  CHECK(p.stage1.size() == 1911);
  CHECK(p.stage2.size() == 4306);
  CHECK(p.stage3.size() == 2394);
  std::set<std::string> s_set(s.begin(), s.end()), r_set(r.begin(), r.end());
  for (const auto& id : p.stage1) CHECK(s_set.count(id));
  for (const auto& id : p.stage3) CHECK(r_set.count(id));
}

TEST_CASE("taking everything leaves an empty middle stage", "[curriculum]") {
  const auto r = ids("r", 5), s = ids("s", 4);
  const auto p = plan(r, s, 4, 5, 1);
  CHECK(p.stage2.empty());
  CHECK(code_of([&] { plan(r, s, 5, 1, 1); }) == Errc::SampleTooLarge);
  CHECK(code_of([&] { plan(r, s, 1, 6, 1); }) == Errc::SampleTooLarge);
  const std::vector<std::string> overlap{"x", "s0"};
  CHECK(code_of([&] { plan(overlap, s, 1, 1, 1); }) == Errc::InvalidValue);
}

TEST_CASE("property: stages partition R' and S'", "[curriculum]") {
  DeterministicRng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t nr = rng.uniform_index(30), ns = rng.uniform_index(30);
    const std::size_t n1 = rng.uniform_index(ns + 1), n3 = rng.uniform_index(nr + 1);
    auto r = ids("r", nr), s = ids("s", ns);
    const std::uint64_t seed = rng.next_u64();
    const auto p = plan(r, s, n1, n3, seed);
    CHECK(p.stage1.size() == n1);
    CHECK(p.stage3.size() == n3);
    std::multiset<std::string> all(p.stage1.begin(), p.stage1.end());
    all.insert(p.stage2.begin(), p.stage2.end());
    all.insert(p.stage3.begin(), p.stage3.end());
    std::multiset<std::string> expect(r.begin(), r.end());
    expect.insert(s.begin(), s.end());
    CHECK(all == expect);
    // Input order does not matter, only the seed.
    rng.shuffle(r);
    rng.shuffle(s);
    CHECK(plan(r, s, n1, n3, seed) == p);
  }
}

TEST_CASE("export writes hashed stage files", "[curriculum]") {
  const auto rs = records(7, 6);
  const auto p = plan(record_ids(rs, Source::HighTier), record_ids(rs, Source::LowTier), 3, 3, 5);
  testkit::TempDir a("cur"), b("cur");
  const auto m = export_manifests(p, rs, a.path(), {{"seed", 5}});
  export_manifests(p, rs, b.path(), {{"seed", 5}});
  CHECK(testkit::first_difference(a.path(), b.path()).empty());

  REQUIRE(m["stages"].size() == 3);
  const std::vector<std::size_t> counts{3, 7, 3};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& st = m["stages"][i];
    CHECK(st["count"] == counts[i]);
    const auto body = slurp(a / st["file"].get<std::string>());
    CHECK(st["sha256"] == sha256_hex(body));
    CHECK(static_cast<std::size_t>(std::count(body.begin(), body.end(), '\n')) == counts[i]);
  }
  const auto first = nlohmann::json::parse(slurp(a / "stage1.jsonl").substr(0, slurp(a / "stage1.jsonl").find('\n')));
  CHECK(first["id"] == p.stage1[0]);
  CHECK(first.contains("prompt"));
  CHECK(first.contains("target"));
}

TEST_CASE("export refuses unapproved or unknown records", "[curriculum]") {
  auto rs = records(3, 3);
  const auto p = plan(record_ids(rs, Source::HighTier), record_ids(rs, Source::LowTier), 1, 1, 5);
  testkit::TempDir dir("cur");
  auto pending = rs;
  pending[0].verification = VerificationState{};
  CHECK(code_of([&] { export_manifests(p, pending, dir / "x"); }) == Errc::UnapprovedRecord);
  CHECK_FALSE(std::filesystem::exists(dir / "x"));
  auto missing = rs;
  missing.pop_back();
  CHECK(code_of([&] { export_manifests(p, missing, dir / "y"); }) == Errc::UnresolvedId);
}

TEST_CASE("training target appends accepted revision notes", "[curriculum]") {
  auto r = testkit::make_record("q", {4, 4});
  CHECK(training_target(r) == r.evaluation.raw_text);
  r.suggestions.push_back({"Mention hydration.", 1, SuggestionVerdict::JudgeAccepted, SuggestionAuthor::Suggester});
  r.suggestions.push_back({"Ignore this.", 2, SuggestionVerdict::JudgeRejected, SuggestionAuthor::Suggester});
  r.suggestions.push_back({"Jury wording.", 3, SuggestionVerdict::JuryAccepted, SuggestionAuthor::Jury});
  CHECK(training_target(r) ==
        r.evaluation.raw_text + "\n\nRevision note: Mention hydration.\n\nRevision note: Jury wording.");
}

TEST_CASE("plan JSON round trip", "[curriculum]") {
  const auto p = plan(ids("r", 6), ids("s", 6), 2, 2, 3);
  CHECK(nlohmann::json(p).get<CurriculumPlan>() == p);
}
