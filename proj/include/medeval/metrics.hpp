#pragma once
// Agreement between model scores and human scores, plus inter-annotator
// reliability statistics.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "medeval/model.hpp"

namespace medeval::metrics {

struct ScoredCase {
  std::string case_id;
  std::map<std::size_t, double> model_scores;  // response_index -> score
  std::map<std::size_t, double> human_scores;  // response_index -> mean annotation
  std::map<std::size_t, std::string> model_labels;

  void validate() const;
  bool operator==(const ScoredCase&) const = default;
};

void to_json(nlohmann::json& j, const ScoredCase& v);
void from_json(const nlohmann::json& j, ScoredCase& v);

// SignMatch: a pair matches iff sign(m_j - m_k) == sign(h_j - h_k), ties included.
// StrictOnly: pairs tied in the human column are skipped and a model tie never
// matches; for triples only cases with three distinct human scores count.
enum class TieMode { SignMatch, StrictOnly };

struct RateResult {
  double rate = 0.0;
  std::size_t matched = 0;
  std::size_t counted = 0;
  std::size_t skipped = 0;
};

RateResult accuracy_2tuple(std::span<const ScoredCase> cases, TieMode mode = TieMode::SignMatch);
// Cases without exactly three responses are skipped and reported.
RateResult accuracy_triple(std::span<const ScoredCase> cases, TieMode mode = TieMode::SignMatch);

double pearson(std::span<const double> xs, std::span<const double> ys);
// Pearson correlation of average (tie-mean) ranks.
double spearman(std::span<const double> xs, std::span<const double> ys);
std::vector<double> average_ranks(std::span<const double> xs);

// Two-way random effects, absolute agreement.
enum class IccVariant { Single, Average };  // ICC(2,1), ICC(2,k)
// ratings[item][rater]; the matrix must be complete and rectangular.
double icc(const std::vector<std::vector<double>>& ratings, IccVariant variant = IccVariant::Average);

// ratings[item][rater]; std::nullopt marks a missing rating. Interval metric.
using SparseRatings = std::vector<std::vector<std::optional<double>>>;
double krippendorff_alpha(const SparseRatings& ratings);

struct TTest {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t df = 0;
  bool degenerate = false;  // zero-variance differences with non-zero mean
};
// Two-sided paired t-test on a - b.
TTest paired_t_test(std::span<const double> a, std::span<const double> b);

// I_x(a, b) via Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

struct WinTieLoss {
  double win_a = 0.0;
  double tie = 0.0;
  double win_b = 0.0;
  std::size_t n = 0;
};

struct WinTieTable {
  std::string model_a;
  std::string model_b;
  WinTieLoss model;  // from model_scores
  WinTieLoss human;  // from human_scores
};

// Counts only cases containing both labels; ModelAbsent if none do.
WinTieTable win_tie_tables(std::span<const ScoredCase> cases, const std::string& model_a, const std::string& model_b);

enum class CorrelationMode { Pooled, PerCase };

struct ReportOptions {
  TieMode tie_mode = TieMode::SignMatch;
  CorrelationMode correlation = CorrelationMode::Pooled;
  IccVariant icc_variant = IccVariant::Average;
};

struct MetricReport {
  double acc_2tuple = 0.0;
  double acc_triple = 0.0;
  double spearman = 0.0;
  double pearson = 0.0;
  std::size_t n_cases = 0;
  std::size_t n_pairs = 0;
  std::size_t triple_counted = 0;
  std::size_t triple_skipped = 0;
  std::optional<double> icc;
  std::optional<double> krippendorff_alpha;
  std::optional<TTest> t_test;
  std::vector<WinTieTable> win_tie;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
  std::string tables_csv() const;
};

// Mean of each annotator's triple, then mean across annotators, per response.
std::vector<ScoredCase> attach_human_scores(std::vector<ScoredCase> cases, const std::vector<HumanAnnotation>& annotations);
// items = (case_id, response_index) in sorted order, raters = annotator ids sorted.
SparseRatings annotation_matrix(const std::vector<HumanAnnotation>& annotations);

MetricReport build_report(std::span<const ScoredCase> cases, const std::vector<HumanAnnotation>& annotations,
                          const ReportOptions& options = {});

}  // namespace medeval::metrics
