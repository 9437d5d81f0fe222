#include "medeval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace medeval::metrics {

using nlohmann::json;

namespace {

constexpr double kConstantRelTol = 1e-12;

int sign(double v) { return (v > 0) - (v < 0); }

std::vector<double> in_key_order(const std::map<std::size_t, double>& m) {
  std::vector<double> out;
  for (const auto& [k, v] : m) out.push_back(v);
  return out;
}

json index_map_to_json(const std::map<std::size_t, double>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

std::map<std::size_t, double> index_map_from_json(const json& j) {
  std::map<std::size_t, double> m;
  for (auto it = j.begin(); it != j.end(); ++it) m[std::stoul(it.key())] = it.value().get<double>();
  return m;
}

void require_same_length(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw Error(Errc::LengthMismatch, "length mismatch: " + std::to_string(xs.size()) + " vs " + std::to_string(ys.size()));
  }
}

}  // namespace

void ScoredCase::validate() const {
  if (model_scores.empty()) throw Error(Errc::InvalidValue, "scored case " + case_id + " is empty");
  if (model_scores.size() != human_scores.size() ||
      !std::equal(model_scores.begin(), model_scores.end(), human_scores.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    throw Error(Errc::InvalidValue, "scored case " + case_id + " has different model and human response sets");
  }
}

void to_json(json& j, const ScoredCase& v) {
  json labels = json::object();
  for (const auto& [k, l] : v.model_labels) labels[std::to_string(k)] = l;
  j = json{{"case_id", v.case_id},
           {"model_scores", index_map_to_json(v.model_scores)},
           {"human_scores", index_map_to_json(v.human_scores)},
           {"model_labels", labels}};
}

void from_json(const json& j, ScoredCase& v) {
  v.case_id = j.at("case_id").get<std::string>();
  v.model_scores = index_map_from_json(j.at("model_scores"));
  v.human_scores = j.contains("human_scores") ? index_map_from_json(j.at("human_scores"))
                                              : std::map<std::size_t, double>{};
  v.model_labels.clear();
  if (auto it = j.find("model_labels"); it != j.end()) {
    for (auto l = it->begin(); l != it->end(); ++l) v.model_labels[std::stoul(l.key())] = l.value().get<std::string>();
  }
}

RateResult accuracy_2tuple(std::span<const ScoredCase> cases, TieMode mode) {
  RateResult r;
  for (const auto& c : cases) {
    c.validate();
    const auto m = in_key_order(c.model_scores);
    const auto h = in_key_order(c.human_scores);
    for (std::size_t j = 0; j < m.size(); ++j) {
      for (std::size_t k = j + 1; k < m.size(); ++k) {
        const int sm = sign(m[j] - m[k]);
        const int sh = sign(h[j] - h[k]);
        if (mode == TieMode::StrictOnly && sh == 0) {
          ++r.skipped;
          continue;
        }
        ++r.counted;
        if (sm == sh) ++r.matched;
      }
    }
  }
  if (r.counted == 0) throw Error(Errc::NoPairs, "no response pairs to compare");
  r.rate = static_cast<double>(r.matched) / static_cast<double>(r.counted);
  return r;
}

RateResult accuracy_triple(std::span<const ScoredCase> cases, TieMode mode) {
  RateResult r;
  for (const auto& c : cases) {
    c.validate();
    if (c.model_scores.size() != 3) {
      ++r.skipped;
      continue;
    }
    const auto m = in_key_order(c.model_scores);
    const auto h = in_key_order(c.human_scores);
    if (mode == TieMode::StrictOnly && (h[0] == h[1] || h[0] == h[2] || h[1] == h[2])) {
      ++r.skipped;
      continue;
    }
    ++r.counted;
    // Weak orderings are equal iff every pairwise comparison agrees.
    bool same = true;
    for (std::size_t j = 0; j < 3 && same; ++j) {
      for (std::size_t k = j + 1; k < 3; ++k) {
        if (sign(m[j] - m[k]) != sign(h[j] - h[k])) {
          same = false;
          break;
        }
      }
    }
    if (same) ++r.matched;
  }
  if (r.counted == 0) throw Error(Errc::NoTripleCases, "no three-response cases to compare");
  r.rate = static_cast<double>(r.matched) / static_cast<double>(r.counted);
  return r;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  require_same_length(xs, ys);
  if (xs.size() < 2) throw Error(Errc::InvalidValue, "correlation needs at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(Errc::ConstantInput, "correlation of a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  require_same_length(xs, ys);
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

double icc(const std::vector<std::vector<double>>& ratings, IccVariant variant) {
  const std::size_t n = ratings.size();
  if (n < 2) throw Error(Errc::IncompleteMatrix, "ICC needs at least two items");
  const std::size_t k = ratings.front().size();
  if (k < 2) throw Error(Errc::IncompleteMatrix, "ICC needs at least two raters");
  for (const auto& row : ratings) {
    if (row.size() != k) throw Error(Errc::IncompleteMatrix, "ICC rating matrix is not rectangular");
    for (double v : row) {
      if (!std::isfinite(v)) throw Error(Errc::IncompleteMatrix, "ICC rating matrix has missing values");
    }
  }
  const double dn = static_cast<double>(n), dk = static_cast<double>(k);
  double grand = 0.0;
  std::vector<double> row_mean(n, 0.0), col_mean(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      row_mean[i] += ratings[i][j];
      col_mean[j] += ratings[i][j];
      grand += ratings[i][j];
    }
  }
  grand /= dn * dk;
  for (auto& v : row_mean) v /= dk;
  for (auto& v : col_mean) v /= dn;
  double ss_total = 0.0, ss_rows = 0.0, ss_cols = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) ss_total += (ratings[i][j] - grand) * (ratings[i][j] - grand);
  }
  for (double v : row_mean) ss_rows += dk * (v - grand) * (v - grand);
  for (double v : col_mean) ss_cols += dn * (v - grand) * (v - grand);
  const double ss_err = ss_total - ss_rows - ss_cols;
  const double ms_rows = ss_rows / (dn - 1.0);
  const double ms_cols = ss_cols / (dk - 1.0);
  const double ms_err = ss_err / ((dn - 1.0) * (dk - 1.0));

  const double denom = variant == IccVariant::Single
                           ? ms_rows + (dk - 1.0) * ms_err + dk * (ms_cols - ms_err) / dn
                           : ms_rows + (ms_cols - ms_err) / dn;
  if (std::abs(denom) < 1e-300) throw Error(Errc::DegenerateVariance, "ICC denominator is zero");
  return (ms_rows - ms_err) / denom;
}

double krippendorff_alpha(const SparseRatings& ratings) {
  // Pairable values: units with at least two ratings.
  std::vector<std::vector<double>> units;
  for (const auto& row : ratings) {
    std::vector<double> vals;
    for (const auto& v : row) {
      if (v) vals.push_back(*v);
    }
    if (vals.size() >= 2) units.push_back(std::move(vals));
  }
  if (units.empty()) throw Error(Errc::AllMissing, "no unit has two or more ratings");

  double n = 0.0;
  double observed = 0.0;
  std::vector<double> all;
  for (const auto& vals : units) {
    const double m = static_cast<double>(vals.size());
    n += m;
    double sq = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      for (std::size_t j = 0; j < vals.size(); ++j) {
        if (i != j) sq += (vals[i] - vals[j]) * (vals[i] - vals[j]);
      }
    }
    observed += sq / (m - 1.0);
    all.insert(all.end(), vals.begin(), vals.end());
  }
  observed /= n;

  // Sum over ordered pairs i != j of (v_i - v_j)^2 = 2 * (N * sum v^2 - (sum v)^2).
  double s1 = 0.0, s2 = 0.0;
  for (double v : all) {
    s1 += v;
    s2 += v * v;
  }
  const double expected = 2.0 * (n * s2 - s1 * s1) / (n * (n - 1.0));
  if (!(expected > 1e-12)) throw Error(Errc::NoVariance, "all pairable ratings are identical");
  return 1.0 - observed / expected;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0 && b > 0)) throw Error(Errc::InvalidValue, "incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  auto cf = [](double aa, double bb, double xx) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    double c = 1.0;
    double d = 1.0 - (aa + bb) * xx / (aa + 1.0);
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
      const double dm = static_cast<double>(m);
      double num = dm * (bb - dm) * xx / ((aa + 2 * dm - 1) * (aa + 2 * dm));
      d = 1.0 + num * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + num / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      h *= d * c;
      num = -(aa + dm) * (aa + bb + dm) * xx / ((aa + 2 * dm) * (aa + 2 * dm + 1));
      d = 1.0 + num * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + num / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      const double delta = d * c;
      h *= delta;
      if (std::abs(delta - 1.0) < eps) break;
    }
    return h;
  };
  // The continued fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(ln_front) * cf(a, b, x) / a;
  return 1.0 - std::exp(ln_front) * cf(b, a, 1.0 - x) / b;
}

TTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  require_same_length(a, b);
  if (a.size() < 2) throw Error(Errc::InvalidValue, "paired t-test needs at least two pairs");
  const std::size_t n = a.size();
  const double dn = static_cast<double>(n);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / dn;
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  double scale = 0.0;
  for (double v : d) scale = std::max(scale, std::abs(v));
  TTest out;
  out.df = n - 1;
  // Differences equal up to rounding count as constant.
  if (std::sqrt(ss / (dn - 1.0)) <= kConstantRelTol * scale) {
    if (scale == 0.0) return out;  // t = 0, p = 1
    out.statistic = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    out.p_value = 0.0;
    out.degenerate = true;
    return out;
  }
  const double sd = std::sqrt(ss / (dn - 1.0));
  out.statistic = mean / (sd / std::sqrt(dn));
  const double df = static_cast<double>(out.df);
  out.p_value = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + out.statistic * out.statistic));
  return out;
}

WinTieTable win_tie_tables(std::span<const ScoredCase> cases, const std::string& model_a, const std::string& model_b) {
  WinTieTable t{model_a, model_b, {}, {}};
  std::size_t wa_m = 0, tie_m = 0, wb_m = 0, wa_h = 0, tie_h = 0, wb_h = 0, n = 0;
  for (const auto& c : cases) {
    std::optional<std::size_t> ia, ib;
    for (const auto& [idx, label] : c.model_labels) {
      if (label == model_a) ia = idx;
      if (label == model_b) ib = idx;
    }
    if (!ia || !ib || !c.model_scores.count(*ia) || !c.model_scores.count(*ib)) continue;
    ++n;
    const int sm = sign(c.model_scores.at(*ia) - c.model_scores.at(*ib));
    (sm > 0 ? wa_m : sm < 0 ? wb_m : tie_m)++;
    if (c.human_scores.count(*ia) && c.human_scores.count(*ib)) {
      const int sh = sign(c.human_scores.at(*ia) - c.human_scores.at(*ib));
      (sh > 0 ? wa_h : sh < 0 ? wb_h : tie_h)++;
    }
  }
  if (n == 0) {
    throw Error(Errc::ModelAbsent, "no case contains both '" + model_a + "' and '" + model_b + "'",
                {{"model_a", model_a}, {"model_b", model_b}});
  }
  auto fill = [](WinTieLoss& w, std::size_t a, std::size_t t, std::size_t b) {
    w.n = a + t + b;
    if (w.n == 0) return;
    const double dn = static_cast<double>(w.n);
    w.win_a = static_cast<double>(a) / dn;
    w.tie = static_cast<double>(t) / dn;
    w.win_b = static_cast<double>(b) / dn;
  };
  fill(t.model, wa_m, tie_m, wb_m);
  fill(t.human, wa_h, tie_h, wb_h);
  return t;
}

std::vector<ScoredCase> attach_human_scores(std::vector<ScoredCase> cases, const std::vector<HumanAnnotation>& annotations) {
  // case_id -> response -> (sum of annotator means, count)
  std::map<std::string, std::map<std::size_t, std::pair<double, int>>> acc;
  for (const auto& a : annotations) {
    for (const auto& r : a.responses) {
      auto& cell = acc[a.case_id][r.response_index];
      cell.first += r.mean();
      cell.second += 1;
    }
  }
  for (auto& c : cases) {
    c.human_scores.clear();
    auto it = acc.find(c.case_id);
    if (it == acc.end()) continue;
    for (const auto& [idx, cell] : it->second) c.human_scores[idx] = cell.first / cell.second;
  }
  return cases;
}

SparseRatings annotation_matrix(const std::vector<HumanAnnotation>& annotations) {
  std::set<std::string> raters;
  std::map<std::pair<std::string, std::size_t>, std::map<std::string, double>> cells;
  for (const auto& a : annotations) {
    raters.insert(a.annotator_id);
    for (const auto& r : a.responses) cells[{a.case_id, r.response_index}][a.annotator_id] = r.mean();
  }
  SparseRatings out;
  for (const auto& [item, by_rater] : cells) {
    std::vector<std::optional<double>> row;
    for (const auto& rater : raters) {
      auto it = by_rater.find(rater);
      row.push_back(it == by_rater.end() ? std::nullopt : std::optional<double>(it->second));
    }
    out.push_back(std::move(row));
  }
  return out;
}

MetricReport build_report(std::span<const ScoredCase> cases, const std::vector<HumanAnnotation>& annotations,
                          const ReportOptions& options) {
  MetricReport r;
  std::vector<ScoredCase> usable;
  for (const auto& c : cases) {
    if (c.human_scores.empty()) {
      r.notes.push_back("case " + c.case_id + " has no human scores; skipped");
      continue;
    }
    c.validate();
    usable.push_back(c);
  }
  r.n_cases = usable.size();
  const auto tuple = accuracy_2tuple(usable, options.tie_mode);
  r.acc_2tuple = tuple.rate;
  r.n_pairs = tuple.counted;
  try {
    const auto triple = accuracy_triple(usable, options.tie_mode);
    r.acc_triple = triple.rate;
    r.triple_counted = triple.counted;
    r.triple_skipped = triple.skipped;
  } catch (const Error& e) {
    if (e.code() != Errc::NoTripleCases) throw;
    r.notes.push_back("no three-response cases; acc_triple is 0");
  }

  std::vector<double> ms, hs;
  for (const auto& c : usable) {
    for (const auto& [k, v] : c.model_scores) {
      ms.push_back(v);
      hs.push_back(c.human_scores.at(k));
    }
  }
  if (options.correlation == CorrelationMode::Pooled) {
    r.spearman = spearman(ms, hs);
    r.pearson = pearson(ms, hs);
  } else {
    double ssp = 0, spe = 0;
    std::size_t used = 0;
    for (const auto& c : usable) {
      const auto m = in_key_order(c.model_scores);
      const auto h = in_key_order(c.human_scores);
      try {
        const double s = spearman(m, h);
        const double p = pearson(m, h);
        ssp += s;
        spe += p;
        ++used;
      } catch (const Error&) {
        // constant within the case; no correlation defined
      }
    }
    if (used == 0) throw Error(Errc::ConstantInput, "no case has a defined per-case correlation");
    r.spearman = ssp / static_cast<double>(used);
    r.pearson = spe / static_cast<double>(used);
    r.notes.push_back("per-case correlations averaged over " + std::to_string(used) + " cases");
  }
  r.t_test = paired_t_test(ms, hs);

  if (!annotations.empty()) {
    const auto sparse = annotation_matrix(annotations);
    try {
      r.krippendorff_alpha = krippendorff_alpha(sparse);
    } catch (const Error& e) {
      r.notes.push_back(std::string("krippendorff_alpha unavailable: ") + e.what());
    }
    // ICC needs a full matrix: items missing any rater are dropped.
    std::vector<std::vector<double>> dense;
    for (const auto& row : sparse) {
      if (std::any_of(row.begin(), row.end(), [](const auto& v) { return !v.has_value(); })) continue;
      std::vector<double> d;
      for (const auto& v : row) d.push_back(*v);
      dense.push_back(std::move(d));
    }
    if (dense.size() < sparse.size()) {
      r.notes.push_back("icc over " + std::to_string(dense.size()) + " of " + std::to_string(sparse.size()) +
                        " items rated by every annotator");
    }
    try {
      r.icc = icc(dense, options.icc_variant);
    } catch (const Error& e) {
      r.notes.push_back(std::string("icc unavailable: ") + e.what());
    }
  }

  std::set<std::string> labels;
  for (const auto& c : usable) {
    for (const auto& [k, l] : c.model_labels) labels.insert(l);
  }
  const std::vector<std::string> ordered(labels.begin(), labels.end());
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    for (std::size_t j = i + 1; j < ordered.size(); ++j) {
      try {
        r.win_tie.push_back(win_tie_tables(usable, ordered[i], ordered[j]));
      } catch (const Error& e) {
        if (e.code() != Errc::ModelAbsent) throw;
      }
    }
  }
  return r;
}

json MetricReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json tables = json::array();
  for (const auto& t : win_tie) {
    auto w = [](const WinTieLoss& x) { return json{{"win_a", x.win_a}, {"tie", x.tie}, {"win_b", x.win_b}, {"n", x.n}}; };
    tables.push_back({{"model_a", t.model_a}, {"model_b", t.model_b}, {"model", w(t.model)}, {"human", w(t.human)}});
  }
  json tt = nullptr;
  if (t_test) {
    const double stat = t_test->statistic;
    tt = {{"statistic", std::isfinite(stat) ? json(stat) : json(stat > 0 ? "inf" : "-inf")},
          {"p", t_test->p_value},
          {"df", t_test->df},
          {"degenerate", t_test->degenerate}};
  }
  return json{{"acc_2tuple", acc_2tuple},
              {"acc_triple", acc_triple},
              {"spearman", spearman},
              {"pearson", pearson},
              {"n_cases", n_cases},
              {"n_pairs", n_pairs},
              {"triple_counted", triple_counted},
              {"triple_skipped", triple_skipped},
              {"icc", opt(icc)},
              {"krippendorff_alpha", opt(krippendorff_alpha)},
              {"t_test", tt},
              {"win_tie_loss", tables},
              {"notes", notes}};
}

std::string MetricReport::tables_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "model_a,model_b,column,win_a,tie,win_b,n\n";
  for (const auto& t : win_tie) {
    for (const auto& [name, w] : {std::pair{"model", t.model}, std::pair{"human", t.human}}) {
      out << t.model_a << ',' << t.model_b << ',' << name << ',' << w.win_a << ',' << w.tie << ',' << w.win_b << ','
          << w.n << '\n';
    }
  }
  return out.str();
}

}  // namespace medeval::metrics
