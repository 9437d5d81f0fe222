#include "medeval/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

namespace medeval::classifier {

using nlohmann::json;

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double objective(const LinearModel& m, const std::vector<std::vector<double>>& xs, const std::vector<int>& ys,
                 double lambda) {
  double hinge = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    hinge += std::max(0.0, 1.0 - ys[i] * (dot(m.weights, xs[i]) + m.bias));
  }
  return 0.5 * lambda * dot(m.weights, m.weights) + hinge / static_cast<double>(xs.size());
}

}  // namespace

double TrainedClassifier::margin(std::span<const double> x) const {
  if (x.size() != weights.size()) {
    throw Error(Errc::EmbedderMismatch, "feature dim " + std::to_string(x.size()) + " != classifier dim " +
                                            std::to_string(weights.size()));
  }
  return dot(weights, x) + bias;
}

void to_json(json& j, const TrainedClassifier& v) {
  j = json{{"weights", v.weights},
           {"bias", v.bias},
           {"c", v.c},
           {"validation_accuracy", v.validation_accuracy},
           {"training_accuracy", v.training_accuracy},
           {"fingerprint", v.fingerprint},
           {"dim", v.weights.size()},
           {"warnings", v.warnings}};
}

void from_json(const json& j, TrainedClassifier& v) {
  v.weights = j.at("weights").get<std::vector<double>>();
  v.bias = j.at("bias").get<double>();
  v.c = j.at("c").get<double>();
  v.validation_accuracy = j.value("validation_accuracy", 0.0);
  v.training_accuracy = j.value("training_accuracy", 0.0);
  v.fingerprint = j.at("fingerprint").get<std::string>();
  v.warnings = j.value("warnings", std::vector<std::string>{});
  if (j.contains("dim") && j.at("dim").get<std::size_t>() != v.weights.size()) {
    throw Error(Errc::InvalidValue, "classifier dim does not match its weight vector");
  }
}

void TrainedClassifier::save(const std::filesystem::path& path) const {
  write_file_atomic(path, json(*this).dump(2) + "\n");
}

TrainedClassifier TrainedClassifier::load(const std::filesystem::path& path) {
  try {
    return json::parse(read_file(path)).get<TrainedClassifier>();
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidValue, path.string() + ": " + e.what());
  }
}

LinearModel fit_hinge(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys, double c, int epochs,
                      double learning_rate) {
  if (xs.empty()) throw Error(Errc::InvalidValue, "no training points");
  if (!(c > 0.0)) throw Error(Errc::InvalidValue, "C must be > 0");
  const std::size_t dim = xs.front().size();
  const double n = static_cast<double>(xs.size());
  const double lambda = 1.0 / (c * n);

  LinearModel m{std::vector<double>(dim, 0.0), 0.0};
  LinearModel best = m;
  double best_obj = objective(m, xs, ys, lambda);
  std::vector<double> gw(dim);
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    for (std::size_t d = 0; d < dim; ++d) gw[d] = lambda * m.weights[d];
    double gb = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (ys[i] * (dot(m.weights, xs[i]) + m.bias) < 1.0) {
        for (std::size_t d = 0; d < dim; ++d) gw[d] -= ys[i] * xs[i][d] / n;
        gb -= ys[i] / n;
      }
    }
    const double step = learning_rate / std::sqrt(static_cast<double>(epoch));
    for (std::size_t d = 0; d < dim; ++d) m.weights[d] -= step * gw[d];
    m.bias -= step * gb;
    if (const double obj = objective(m, xs, ys, lambda); obj < best_obj) {
      best_obj = obj;
      best = m;
    }
  }
  return best;
}

Split stratified_split(const std::vector<bool>& labels, double fraction, std::uint64_t seed) {
  DeterministicRng rng(seed);
  Split s;
  for (bool cls : {true, false}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) idx.push_back(i);
    }
    rng.shuffle(idx);
    std::size_t n_val = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
    if (idx.size() < 2) n_val = 0;
    n_val = std::min(n_val, idx.size() - std::min<std::size_t>(idx.size(), 1));
    s.validation.insert(s.validation.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  return s;
}

double accuracy(const LinearModel& model, const std::vector<std::vector<double>>& xs, const std::vector<bool>& labels,
                std::span<const std::size_t> subset) {
  if (subset.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i : subset) {
    const bool high = dot(model.weights, xs[i]) + model.bias >= 0.0;
    if (high == labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(subset.size());
}

TrainedClassifier train_vectors(const std::vector<std::vector<double>>& xs, const std::vector<bool>& labels,
                                const TrainOptions& options, std::string fingerprint) {
  if (options.c_grid.empty()) throw Error(Errc::EmptyGrid, "c_grid is empty");
  for (double c : options.c_grid) {
    if (!(c > 0.0)) throw Error(Errc::InvalidValue, "c_grid values must be > 0");
  }
  if (xs.size() != labels.size()) throw Error(Errc::LengthMismatch, "features and labels differ in length");
  const auto n_high = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (n_high == 0 || n_high == labels.size()) {
    throw Error(Errc::SingleClassInput, "training data needs both High and Low labels",
                {{"high", n_high}, {"low", labels.size() - n_high}});
  }
  const std::size_t dim = xs.front().size();
  for (const auto& x : xs) {
    if (x.size() != dim) throw Error(Errc::InvalidValue, "feature vectors differ in dimension");
  }

  const Split split = stratified_split(labels, options.validation_fraction, options.seed);
  std::vector<std::vector<double>> train_x;
  std::vector<int> train_y;
  for (std::size_t i : split.train) {
    train_x.push_back(xs[i]);
    train_y.push_back(labels[i] ? 1 : -1);
  }
  const std::span<const std::size_t> eval_set = split.validation.empty() ? std::span<const std::size_t>(split.train)
                                                                         : std::span<const std::size_t>(split.validation);

  std::vector<double> grid = options.c_grid;
  std::sort(grid.begin(), grid.end());
  std::vector<std::future<double>> scores;
  for (double c : grid) {
    scores.push_back(std::async(std::launch::async, [&, c] {
      const auto m = fit_hinge(train_x, train_y, c, options.epochs, options.learning_rate);
      return accuracy(m, xs, labels, eval_set);
    }));
  }
  double best_c = grid.front();
  double best_acc = -1.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double acc = scores[g].get();
    if (acc > best_acc) {  // strict: ties keep the smaller C
      best_acc = acc;
      best_c = grid[g];
    }
  }

  std::vector<int> all_y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) all_y[i] = labels[i] ? 1 : -1;
  const auto final_model = fit_hinge(xs, all_y, best_c, options.epochs, options.learning_rate);
  std::vector<std::size_t> all_idx(xs.size());
  std::iota(all_idx.begin(), all_idx.end(), 0);

  TrainedClassifier out;
  out.weights = final_model.weights;
  out.bias = final_model.bias;
  out.c = best_c;
  out.validation_accuracy = best_acc;
  out.training_accuracy = accuracy(final_model, xs, labels, all_idx);
  out.fingerprint = std::move(fingerprint);
  if (out.training_accuracy < options.low_separability_threshold) {
    out.warnings.push_back("LowSeparability: training accuracy " + std::to_string(out.training_accuracy) +
                           " after refit");
  }
  return out;
}

std::vector<double> embed_record(const InstructionRecord& record, const knowledge::Embedder& embedder) {
  const auto v = embedder.embed(record.evaluation.raw_text);
  return {v.begin(), v.end()};
}

TrainedClassifier train(const std::vector<std::pair<InstructionRecord, Quality>>& labeled,
                        const knowledge::Embedder& embedder, const TrainOptions& options) {
  if (options.c_grid.empty()) throw Error(Errc::EmptyGrid, "c_grid is empty");
  if (labeled.empty()) throw Error(Errc::SingleClassInput, "no labeled records");
  std::vector<std::vector<double>> xs;
  std::vector<bool> ys;
  for (const auto& [rec, q] : labeled) {
    if (q == Quality::Unclassified) throw Error(Errc::InvalidValue, "training label must be High or Low");
    xs.push_back(embed_record(rec, embedder));
    ys.push_back(q == Quality::High);
  }
  return train_vectors(xs, ys, options, embedder.fingerprint());
}

std::vector<InstructionRecord> classify(const TrainedClassifier& clf, std::vector<InstructionRecord> records,
                                        const knowledge::Embedder& embedder) {
  if (clf.fingerprint != embedder.fingerprint()) {
    throw Error(Errc::EmbedderMismatch, "classifier trained with '" + clf.fingerprint + "', embedder is '" +
                                            embedder.fingerprint() + "'");
  }
  for (auto& r : records) {
    r.quality = clf.predict_high(embed_record(r, embedder)) ? Quality::High : Quality::Low;
  }
  return records;
}

QualitySplit split_by_quality(std::vector<InstructionRecord> records) {
  QualitySplit s;
  for (auto& r : records) {
    switch (r.quality) {
      case Quality::High: s.r_prime.push_back(std::move(r)); break;
      case Quality::Low: s.s_prime.push_back(std::move(r)); break;
      case Quality::Unclassified:
        throw Error(Errc::UnclassifiedPresent, "record " + r.record_id() + " is unclassified",
                    {{"record_id", r.record_id()}});
    }
  }
  return s;
}

}  // namespace medeval::classifier
