#pragma once
// Evaluation-quality classifier: embeddings of the evaluation text fed to a
// linear max-margin model chosen by grid search over C.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "medeval/knowledge.hpp"
#include "medeval/model.hpp"

namespace medeval::classifier {

struct TrainOptions {
  std::vector<double> c_grid{0.01, 0.1, 1.0, 10.0, 100.0};
  std::uint64_t seed = 7;
  int epochs = 200;
  double learning_rate = 0.1;  // step at epoch e is learning_rate / sqrt(e)
  double validation_fraction = 0.2;
  double low_separability_threshold = 0.9;  // refit training accuracy below this warns
};

struct TrainedClassifier {
  std::vector<double> weights;
  double bias = 0.0;
  double c = 1.0;
  double validation_accuracy = 0.0;
  double training_accuracy = 0.0;
  std::string fingerprint;
  std::vector<std::string> warnings;

  double margin(std::span<const double> x) const;
  bool predict_high(std::span<const double> x) const { return margin(x) >= 0.0; }

  void save(const std::filesystem::path& path) const;
  static TrainedClassifier load(const std::filesystem::path& path);
};

void to_json(nlohmann::json& j, const TrainedClassifier& v);
void from_json(const nlohmann::json& j, TrainedClassifier& v);

// Hinge loss + L2, minimized by full-batch subgradient descent:
//   lambda/2 |w|^2 + mean(max(0, 1 - y (w.x + b))),  lambda = 1 / (C n)
// Returns the iterate with the lowest objective.
struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
};
LinearModel fit_hinge(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys, double c, int epochs,
                      double learning_rate);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
// Per class: sorted indices shuffled with the seed, the first
// round(fraction * n_class) go to validation. Singleton classes stay in train.
Split stratified_split(const std::vector<bool>& labels, double fraction, std::uint64_t seed);

double accuracy(const LinearModel& model, const std::vector<std::vector<double>>& xs, const std::vector<bool>& labels,
                std::span<const std::size_t> subset);

// labels[i] true means High.
TrainedClassifier train_vectors(const std::vector<std::vector<double>>& xs, const std::vector<bool>& labels,
                                const TrainOptions& options, std::string fingerprint);

TrainedClassifier train(const std::vector<std::pair<InstructionRecord, Quality>>& labeled,
                        const knowledge::Embedder& embedder, const TrainOptions& options = {});

std::vector<double> embed_record(const InstructionRecord& record, const knowledge::Embedder& embedder);

std::vector<InstructionRecord> classify(const TrainedClassifier& clf, std::vector<InstructionRecord> records,
                                        const knowledge::Embedder& embedder);

struct QualitySplit {
  std::vector<InstructionRecord> r_prime;  // High
  std::vector<InstructionRecord> s_prime;  // Low
};
QualitySplit split_by_quality(std::vector<InstructionRecord> records);

}  // namespace medeval::classifier
