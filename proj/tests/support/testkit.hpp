#pragma once
// Shared fixtures for unit and acceptance tests.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "medeval/model.hpp"
#include "medeval/util.hpp"

namespace testkit {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::filesystem::path fixture_dir();

// n responses labeled doc1..docN.
medeval::EvalCase make_case(const std::string& question, std::size_t n_responses);
// Approved, high-tier record whose evaluation has the given scores.
medeval::InstructionRecord make_record(const std::string& question, const std::vector<int>& scores,
                                       medeval::Source source = medeval::Source::HighTier);

// Evaluation text for the given scores in the canonical grammar.
std::string evaluation_text(const std::vector<int>& scores, std::size_t n_steps = 2);

// Random grammar-valid evaluation: returns text and the expected result
// (steps trimmed, raw_text empty). Layout, spacing, "point"/"points" and
// trailing punctuation vary.
struct RandomEvaluation {
  std::string text;
  medeval::EvaluationResult expected;
};
RandomEvaluation random_evaluation(medeval::DeterministicRng& rng);

// Byte-level comparison of two directory trees; empty when identical,
// otherwise the first differing relative path.
std::string first_difference(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace testkit
