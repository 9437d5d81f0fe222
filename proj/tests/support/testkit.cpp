#include "testkit.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>

#include <unistd.h>

#ifndef MEDEVAL_FIXTURE_DIR
#error "MEDEVAL_FIXTURE_DIR must be defined by the build"
#endif

namespace fs = std::filesystem;

namespace testkit {

namespace {
std::atomic<int> dir_counter{0};

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words{
      "the",     "patient", "asks",     "about",    "fever",     "doctor",  "response", "mentions",
      "dosage",  "risk",    "clear",    "accurate", "incomplete", "however", "symptoms", "blood",
      "pressure", "renal",  "common",   "advice",   "(brief)",   "well-written", "misses", "key",
      "facts",   "insulin", "rest",     "fluids",   "2",         "mg",      "daily",    "dose"};
  return words;
}

std::string pick(medeval::DeterministicRng& rng, const std::vector<std::string>& options) {
  return options[rng.uniform_index(options.size())];
}
}  // namespace

TempDir::TempDir(const std::string& tag) {
  medeval::DeterministicRng rng(static_cast<std::uint64_t>(std::hash<std::string>{}(tag)) ^
                                static_cast<std::uint64_t>(dir_counter.fetch_add(1)) ^
                                static_cast<std::uint64_t>(::getpid()) << 20);
  for (;;) {
    path_ = fs::temp_directory_path() / ("medeval-" + tag + "-" + std::to_string(rng.next_u64() % 1000000000ULL));
    if (fs::create_directories(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

fs::path fixture_dir() { return fs::path(MEDEVAL_FIXTURE_DIR); }

medeval::EvalCase make_case(const std::string& question, std::size_t n_responses) {
  medeval::EvalCase c;
  c.question = question;
  c.reference_answer = "Reference answer for: " + question;
  for (std::size_t i = 0; i < n_responses; ++i) {
    c.responses.push_back({"doc" + std::to_string(i + 1), "Answer " + std::to_string(i + 1) + " to " + question, {}});
  }
  return medeval::validate_case(c);
}

std::string evaluation_text(const std::vector<int>& scores, std::size_t n_steps) {
  medeval::EvaluationResult r;
  r.steps.push_back("The patient describes the problem.");
  for (std::size_t i = 1; i < n_steps; ++i) r.steps.push_back("Observation number " + std::to_string(i + 1) + ".");
  r.scores = scores;
  std::string out = "Analyze:\n";
  for (std::size_t i = 0; i < r.steps.size(); ++i) out += "Step " + std::to_string(i + 1) + ": " + r.steps[i] + "\n";
  out += "Score:";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out += " Doctor " + std::to_string(i + 1) + ": " + std::to_string(scores[i]) + " points.";
  }
  return out;
}

medeval::InstructionRecord make_record(const std::string& question, const std::vector<int>& scores,
                                       medeval::Source source) {
  medeval::InstructionRecord rec;
  rec.eval_case = make_case(question, scores.size());
  rec.evaluation.steps = {"The patient describes the problem.", "Observation number 2."};
  rec.evaluation.scores = scores;
  rec.evaluation.raw_text = evaluation_text(scores);
  rec.source = source;
  rec.verification = medeval::VerificationState::decide({true, true, true}, "rev-1");
  rec.validate();
  return rec;
}

RandomEvaluation random_evaluation(medeval::DeterministicRng& rng) {
  RandomEvaluation out;
  const std::size_t n_steps = 1 + rng.uniform_index(5);
  const std::size_t n_docs = 1 + rng.uniform_index(5);
  const std::vector<std::string> step_sep{"\n", " ", "\n\n", "\r\n"};
  std::string text = "Analyze:" + pick(rng, {" ", "\n", " \n", "\t"});
  for (std::size_t s = 0; s < n_steps; ++s) {
    std::string body;
    const std::size_t words = 1 + rng.uniform_index(9);
    for (std::size_t w = 0; w < words; ++w) {
      if (w) body += " ";
      body += pick(rng, vocabulary());
    }
    body += pick(rng, {".", "", "!", ";"});
    out.expected.steps.push_back(body);
    text += "Step" + pick(rng, {" ", "  "}) + std::to_string(s + 1) + pick(rng, {":", " :"}) +
            pick(rng, {" ", "  ", "\t"}) + body + pick(rng, step_sep);
  }
  text += pick(rng, {"", "\n", " "}) + "Score:";
  std::vector<std::size_t> order(n_docs);
  for (std::size_t i = 0; i < n_docs; ++i) order[i] = i;
  rng.shuffle(order);
  out.expected.scores.assign(n_docs, 0);
  for (std::size_t i : order) {
    const int score = 1 + static_cast<int>(rng.uniform_index(5));
    out.expected.scores[i] = score;
    text += pick(rng, {" ", "\n", "  "}) + "Doctor " + std::to_string(i + 1) + pick(rng, {":", " :", ": "}) +
            pick(rng, {" ", ""}) + std::to_string(score) + " " + pick(rng, {"point", "points"}) +
            pick(rng, {".", ",", ";", ""});
  }
  text += pick(rng, {"", "\n", " "});
  out.text = text;
  return out;
}

std::string first_difference(const fs::path& a, const fs::path& b) {
  auto listing = [](const fs::path& root) {
    std::set<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      files.insert(fs::relative(e.path(), root).generic_string() + (e.is_directory() ? "/" : ""));
    }
    return files;
  };
  const auto la = listing(a), lb = listing(b);
  if (la != lb) {
    for (const auto& f : la) {
      if (!lb.count(f)) return f;
    }
    for (const auto& f : lb) {
      if (!la.count(f)) return f;
    }
  }
  for (const auto& f : la) {
    if (f.back() == '/') continue;
    if (medeval::read_file(a / f) != medeval::read_file(b / f)) return f;
  }
  return {};
}

}  // namespace testkit
