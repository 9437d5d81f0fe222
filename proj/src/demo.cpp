#include "medeval/demo.hpp"

#include <algorithm>
#include <set>

#include "medeval/chain.hpp"
#include "medeval/classifier.hpp"
#include "medeval/config.hpp"
#include "medeval/curriculum.hpp"
#include "medeval/introspection.hpp"
#include "medeval/knowledge.hpp"
#include "medeval/metrics.hpp"
#include "medeval/provenance.hpp"
#include "medeval/review.hpp"
#include "medeval/sigmoid.hpp"

namespace medeval::demo {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::initializer_list<std::string_view> parts) {
  std::string key;
  for (auto p : parts) {
    key.append(p);
    key.push_back('\x1f');
  }
  return fnv1a64(key);
}

const std::vector<std::string> kLabels{"alpha", "beta", "gamma"};
const std::vector<std::string> kDurations{"for two days", "for a week", "for three weeks", "since last month",
                                          "on and off for a year"};
const std::vector<std::string> kGeneric{"Rest, drink plenty of water and it should settle on its own.",
                                        "It is probably stress. Try to sleep more and relax.",
                                        "Take a multivitamin and wait a few weeks to see how you feel."};

const Condition* condition_for(std::string_view question) {
  for (const auto& c : conditions()) {
    if (question.find(c.symptom) != std::string_view::npos) return &c;
  }
  return nullptr;
}

std::vector<bool> coverage(const Condition& c, const std::string& response) {
  const auto lower = to_lower(response);
  std::vector<bool> hit;
  for (const auto& k : c.keywords) hit.push_back(lower.find(k) != std::string::npos);
  return hit;
}

int score_from_coverage(const std::vector<bool>& hit) {
  const auto k = std::count(hit.begin(), hit.end(), true);
  return 1 + static_cast<int>(std::lround(4.0 * static_cast<double>(k) / static_cast<double>(hit.size())));
}

std::string last_user_text(const gateway::ChatRequest& r) {
  for (auto it = r.messages.rbegin(); it != r.messages.rend(); ++it) {
    if (it->speaker == "user") return it->text;
  }
  return {};
}

struct PromptCase {
  std::string question;
  std::vector<std::string> responses;
};

// Reads the case that follows the template's final instruction line.
PromptCase read_prompt_case(const std::string& prompt) {
  PromptCase pc;
  auto pos = prompt.rfind("Now evaluate the following case.");
  if (pos == std::string::npos) pos = 0;
  std::size_t line_start = prompt.find('\n', pos);
  while (line_start != std::string::npos && line_start < prompt.size()) {
    const auto next = prompt.find('\n', line_start + 1);
    const auto line = prompt.substr(line_start + 1, next == std::string::npos ? std::string::npos : next - line_start - 1);
    if (line.rfind("Patient's question: ", 0) == 0) {
      pc.question = line.substr(20);
    } else if (line.rfind("Doctor ", 0) == 0) {
      const auto colon = line.find(": ");
      if (colon != std::string::npos) pc.responses.push_back(line.substr(colon + 2));
    } else if (line.rfind("Reference answer: ", 0) == 0) {
      break;
    }
    line_start = next;
  }
  return pc;
}

std::string join_words(const std::vector<std::string>& items) {
  if (items.empty()) return {};
  if (items.size() == 1) return items[0];
  std::string out;
  for (std::size_t i = 0; i + 1 < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out + " and " + items.back();
}

using PatchedSet = std::set<std::string>;

std::string evaluate(const std::string& tier, const std::string& prompt, const PatchedSet* patched) {
  const auto pc = read_prompt_case(prompt);
  const auto* cond = condition_for(pc.question);
  if (!cond || pc.responses.empty()) return "I cannot evaluate this case.";
  const bool careful = tier != "low";
  const bool retrieved = prompt.find("Retrieved knowledge:") != std::string::npos;
  if (careful && !cond->lookup.empty() && !retrieved) return "[Question] " + cond->lookup;

  EvaluationResult r;
  if (careful) {
    r.steps.push_back("The patient describes symptoms that point to " + cond->name + ".");
    if (retrieved) r.steps.push_back("The retrieved material confirms: " + cond->facts[1]);
  } else {
    r.steps.push_back("I read all answers.");
  }
  for (std::size_t i = 0; i < pc.responses.size(); ++i) {
    const auto hit = coverage(*cond, pc.responses[i]);
    int s = score_from_coverage(hit);
    const std::string d = "Doctor " + std::to_string(i + 1);
    if (careful) {
      std::vector<std::string> found, missing;
      for (std::size_t k = 0; k < hit.size(); ++k) (hit[k] ? found : missing).push_back(cond->keywords[k]);
      if (missing.empty()) {
        r.steps.push_back(d + " covers " + join_words(found) + ", matching the reference answer.");
      } else if (found.empty()) {
        r.steps.push_back(d + " gives generic advice and misses the key points of the reference answer.");
      } else {
        r.steps.push_back(d + " mentions " + join_words(found) + " but omits " + join_words(missing) + ".");
      }
    } else {
      switch (mix({pc.question, std::to_string(i), "noise"}) % 4) {
        case 0: s = std::min(5, s + 1); break;
        case 1: s = std::max(1, s - 1); break;
        default: break;
      }
      r.steps.push_back(d + (s >= 4 ? " seems okay." : " is not so good."));
    }
    r.scores.push_back(s);
  }
  // The introspection evaluator confuses the first two doctors on some cases
  // until an accepted suggestion has been trained in.
  if (tier == "introspect" && r.scores.size() >= 2 && mix({pc.question, "flaw"}) % 3 == 0 &&
      !(patched && patched->count(pc.question))) {
    if (r.scores[0] != r.scores[1]) {
      std::swap(r.scores[0], r.scores[1]);
    } else {
      r.scores[0] = r.scores[0] == 5 ? 4 : r.scores[0] + 1;
    }
  }
  return chain::format_evaluation(r);
}

std::string between(const std::string& s, const std::string& open, const std::string& close) {
  const auto a = s.find(open);
  if (a == std::string::npos) return {};
  const auto b = s.find(close, a + open.size());
  return s.substr(a + open.size(), b == std::string::npos ? std::string::npos : b - a - open.size());
}

std::string suggest(const std::string& prompt) {
  const auto question = between(prompt, "Patient's question: ", "\n");
  const auto* cond = condition_for(question);
  if (!cond) return "Re-read the reference answer before scoring.";
  std::size_t round = 1;
  for (auto p = prompt.find("Your suggestion (round"); p != std::string::npos; p = prompt.find("Your suggestion (round", p + 1)) {
    ++round;
  }
  if (round == 1) return "Check answers about " + cond->name + " against the reference answer.";
  return "When scoring answers about " + cond->name + ", reward answers that state: " + cond->facts[0] + " " +
         cond->facts[1] + " " + cond->facts[2];
}

std::string judge(const std::string& prompt) {
  const auto question = between(prompt, "Patient's question: ", "\n");
  const auto suggestion = between(prompt, "Revision suggestion:\n", "\x01");
  switch (mix({question, "judge"}) % 4) {
    case 0: return "REJECT The suggestion does not justify changing the ranking.";
    case 1:
      if (suggestion.find("state:") == std::string::npos) return "REJECT Name the specific facts that matter.";
      return "ACCEPT";
    default: return "ACCEPT";
  }
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string answer_text(const Condition& c, int level, std::uint64_t h) {
  switch (level) {
    case 2: return "This sounds like " + c.name + ". " + c.facts[0] + " " + c.facts[1] + " " + c.facts[2];
    case 1: return "This may be " + c.name + ". " + c.facts[0] + " See a doctor if it does not improve.";
    default: return kGeneric[h % kGeneric.size()];
  }
}

int answer_level(std::uint64_t seed, const std::string& label, const std::string& question) {
  const double u = static_cast<double>(mix({std::to_string(seed), label, question}) % 10000) / 10000.0;
  // P(level 0), P(level 1) per label; the rest is level 2.
  const std::map<std::string, std::pair<double, double>> mixes{
      {"alpha", {0.1, 0.3}}, {"beta", {0.3, 0.4}}, {"gamma", {0.6, 0.3}}};
  const auto it = mixes.find(label);
  const auto [p0, p1] = it == mixes.end() ? std::pair{0.34, 0.33} : it->second;
  if (u < p0) return 0;
  if (u < p0 + p1) return 1;
  return 2;
}

int clamp_score(int s) { return std::clamp(s, 1, 5); }

int noise(std::initializer_list<std::string_view> key) {
  switch (mix(key) % 5) {
    case 0: return -1;
    case 1: return 1;
    default: return 0;
  }
}

void write_jsonl(const fs::path& path, const std::vector<json>& lines) {
  std::string body;
  for (const auto& l : lines) body += l.dump() + "\n";
  write_file_atomic(path, body);
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

}  // namespace

const std::vector<Condition>& conditions() {
  static const std::vector<Condition> kConditions{
      {"iron deficiency anaemia",
       "feel tired all the time and my ferritin came back low",
       "What treatment do I need?",
       {"Oral iron such as ferrous sulfate is the first-line treatment.",
        "Taking it with vitamin C and away from tea improves absorption.",
        "The source of iron loss, such as bleeding, must be investigated."},
       {"ferrous", "vitamin c", "bleeding"},
       ""},
      {"type 2 diabetes",
       "had two fasting glucose results above 7 mmol/L",
       "Do I have diabetes and what happens next?",
       {"Two fasting values above 7.0 mmol/L confirm the diagnosis.",
        "Metformin is the usual first medicine.",
        "Diet, exercise and weight loss remain the foundation of care."},
       {"confirm", "metformin", "exercise"},
       ""},
      {"typhoid fever",
       "have had a fever of 39.5 C and stomach pain since returning from travel",
       "Could this be typhoid?",
       {"A sustained high fever after travel to an endemic area suggests typhoid.",
        "Blood culture is the test that confirms it.",
        "Treatment is an antibiotic such as azithromycin."},
       {"sustained", "blood culture", "azithromycin"},
       "Which test confirms typhoid fever and which antibiotic treats it?"},
      {"migraine",
       "get throbbing one-sided headaches with nausea",
       "What can I take?",
       {"Triptans such as sumatriptan treat acute attacks.",
        "An NSAID taken early in the attack also helps.",
        "Frequent attacks call for preventive therapy."},
       {"sumatriptan", "nsaid", "preventive"},
       ""},
      {"community-acquired pneumonia",
       "have a cough with green sputum and fever and feel short of breath",
       "Do I need antibiotics?",
       {"A chest X-ray confirms pneumonia.",
        "Amoxicillin is first-line for mild cases.",
        "Breathlessness needs urgent medical review."},
       {"x-ray", "amoxicillin", "urgent"},
       "What is the first-line antibiotic for community-acquired pneumonia?"},
      {"gout",
       "woke with a red, hot, swollen big toe",
       "What is this and how is it treated?",
       {"Sudden painful swelling of the big toe is typical of gout.",
        "Colchicine or an anti-inflammatory treats the flare.",
        "Allopurinol lowers urate in the long term."},
       {"gout", "colchicine", "allopurinol"},
       ""},
      {"hypothyroidism",
       "feel cold and tired and my TSH is high",
       "Which medicine do I need?",
       {"A high TSH with low T4 means an underactive thyroid.",
        "Levothyroxine replaces the missing hormone.",
        "TSH is rechecked after six weeks on treatment."},
       {"underactive", "levothyroxine", "six weeks"},
       "How is an underactive thyroid treated and monitored?"},
      {"urinary tract infection",
       "have burning when passing urine and need to go often",
       "Is this an infection?",
       {"These symptoms suggest cystitis.",
        "Nitrofurantoin for three days is the usual treatment.",
        "Fever or back pain needs review for a kidney infection."},
       {"cystitis", "nitrofurantoin", "kidney"},
       ""},
  };
  return kConditions;
}

int keyword_score(const std::string& question, const std::string& response) {
  const auto* c = condition_for(question);
  if (!c) throw Error(Errc::InvalidValue, "question matches no synthetic condition");
  return score_from_coverage(coverage(*c, response));
}

Corpus make_corpus(std::uint64_t seed, std::size_t cases_per_condition) {
  Corpus corpus;
  std::set<std::string> seen;
  const auto s = std::to_string(seed);
  for (const auto& c : conditions()) {
    std::string reference = capitalize(c.name) + " is likely. " + c.facts[0] + " " + c.facts[1] + " " + c.facts[2];
    for (std::size_t j = 0, salt = 0; j < cases_per_condition; ++salt) {
      const auto h = mix({s, c.name, std::to_string(salt)});
      const auto age = 18 + h % 63;
      const auto& duration = kDurations[(h >> 16) % kDurations.size()];
      auto q = "I am " + std::to_string(age) + " years old and I " + c.symptom + " (" + duration + "). " + c.ask;
      if (!seen.insert(q).second) continue;
      corpus.qa_lines.push_back({{"question", q}, {"answer", reference}});
      ++j;
    }
    std::string doc = capitalize(c.name) + " overview.\n\n";
    for (const auto& f : c.facts) doc += f + " ";
    doc += "\n\nPatients with " + c.name + " should be reassessed if symptoms worsen. Advice should be adapted to "
           "age, pregnancy and other conditions.\n";
    auto file = c.name;
    std::replace(file.begin(), file.end(), ' ', '-');
    corpus.documents[file + ".txt"] = doc;
  }
  corpus.documents["general-advice.txt"] =
      "General advice.\n\nMost minor illnesses settle with rest and fluids. Seek help if symptoms persist or "
      "worsen, or if new symptoms appear.\n";
  corpus.qa_lines.push_back({{"question", "Please rephrase this sentence: the patient was seen in clinic today."},
                             {"answer", "The clinic saw the patient today."}});
  corpus.qa_lines.push_back({{"question", "Rephrase in plain words: the lesion is benign."},
                             {"answer", "The growth is not cancer."}});
  corpus.qa_lines.push_back({{"question", "What is a normal resting heart rate?"}});
  DeterministicRng rng(seed);
  rng.shuffle(corpus.qa_lines);
  return corpus;
}

std::shared_ptr<gateway::Backend> responder_stub(std::uint64_t seed, const std::string& label) {
  return std::make_shared<gateway::FunctionBackend>(
      [seed, label](const gateway::ChatRequest& r) {
        const auto q = last_user_text(r);
        const auto* c = condition_for(q);
        const auto h = mix({std::to_string(seed), label, q, "text"});
        if (!c) return kGeneric[h % kGeneric.size()];
        return answer_text(*c, answer_level(seed, label, q), h);
      },
      "responder-" + label);
}

std::shared_ptr<gateway::Backend> evaluator_stub(const std::string& tier) {
  return std::make_shared<gateway::FunctionBackend>(
      [tier](const gateway::ChatRequest& r) { return evaluate(tier, last_user_text(r), nullptr); }, "evaluator-" + tier);
}

json run(const fs::path& out, const RunOptions& options, std::ostream& log) {
  if (fs::exists(out) && !fs::is_empty(out)) {
    throw Error(Errc::IoError, "demo output directory is not empty: " + out.string(), {{"path", out.string()}});
  }
  // Hash-embedded texts have small coordinates; a larger step converges within the epoch budget.
  const auto cfg = config::PipelineConfig::parse("[classifier]\nlearning_rate = 1.0\n", nullptr);
  const auto seed = options.seed;
  const auto prov = [&](const std::string& step, std::vector<std::pair<std::string, fs::path>> inputs = {}) {
    return make_provenance("demo " + step, seed, cfg.hash(), inputs);
  };
  json summary{{"seed", seed}};

  // Corpus.
  const auto corpus = make_corpus(seed, options.cases_per_condition);
  write_jsonl(out / "corpus/qa.jsonl", corpus.qa_lines);
  for (const auto& [name, text] : corpus.documents) write_file_atomic(out / "corpus/docs" / name, text);

  // Ingest.
  const auto loaded = ingest::load_qa(out / "corpus/qa.jsonl");
  const auto filtered = ingest::apply_filter(loaded.pairs, ingest::default_rules());
  std::vector<json> kept, rejects;
  for (const auto& p : filtered.kept) kept.push_back({{"question", p.question}, {"answer", p.answer}});
  for (const auto& r : loaded.rejects) rejects.push_back({{"line", r.line_no}, {"reason", r.reason}});
  write_jsonl(out / "ingest/qa.jsonl", kept);
  write_jsonl(out / "ingest/rejects.jsonl", rejects);
  write_json(out / "ingest/report.json", filtered.report.to_json());
  summary["ingest"] = filtered.report.to_json();
  summary["ingest"]["malformed"] = loaded.rejects.size();
  log << "ingest: kept " << filtered.report.kept << " of " << filtered.report.total_in << "\n";

  // Responders.
  std::map<std::string, std::vector<ModelResponse>> answers;
  for (const auto& label : kLabels) {
    gateway::Gateway gw(seed);
    gw.set_backend(gateway::Role::Responder, responder_stub(seed, label));
    auto& list = answers[label];
    for (const auto& p : filtered.kept) list.push_back(gateway::respond_medical(gw, p.question, label));
    write_file_atomic(out / "responses" / (label + ".jsonl"), to_jsonl(list));
  }
  const auto cases = ingest::assemble_cases(filtered.kept, answers);
  write_file_atomic(out / "cases.jsonl", to_jsonl(cases));
  log << "respond: " << cases.size() << " cases x " << kLabels.size() << " models\n";

  // Knowledge base.
  const knowledge::HashEmbedder embedder(cfg.embedder_dim());
  const auto index =
      knowledge::VectorIndex::build(knowledge::chunk_directory(out / "corpus/docs", cfg.chunk_window(), cfg.chunk_overlap()), embedder);
  index.save(out / "db");
  log << "build-db: " << index.size() << " chunks\n";

  // Synthesis, both tiers.
  const auto chain_cfg = cfg.chain();
  std::vector<InstructionRecord> synthesized;
  std::vector<json> traces, failures;
  std::size_t retrievals = 0;
  for (const auto& [tier, source] : {std::pair{"high", Source::HighTier}, std::pair{"low", Source::LowTier}}) {
    gateway::Gateway gw(seed);
    gw.set_backend(gateway::Role::Evaluator, evaluator_stub(tier));
    auto res = chain::synthesize(cases, source, &index, &embedder, gw, chain_cfg, options.workers);
    for (const auto& t : res.traces) {
      retrievals += t.retrievals();
      traces.push_back({{"tier", tier}, {"trace", t.to_json()}});
    }
    failures.insert(failures.end(), res.failures.begin(), res.failures.end());
    synthesized.insert(synthesized.end(), res.records.begin(), res.records.end());
  }
  write_file_atomic(out / "synth/records.jsonl", to_jsonl(synthesized));
  write_jsonl(out / "synth/traces.jsonl", traces);
  write_jsonl(out / "synth/failures.jsonl", failures);
  summary["synthesis"] = {{"records", synthesized.size()}, {"failures", failures.size()}, {"retrievals", retrievals}};
  log << "synthesize: " << synthesized.size() << " records, " << retrievals << " retrievals\n";

  // Verification through the review store, with a deterministic clock.
  auto ticks = std::make_shared<std::int64_t>(1'700'000'000'000);
  review::ReviewStore store(out / "queue", cfg.review(), [ticks] { return *ticks += 1000; });
  for (const auto& r : synthesized) store.enqueue(review::QueueKind::Verification, json(r));
  const std::vector<std::string> reviewers{"rev-1", "rev-2"};
  for (const auto& who : reviewers) {
    for (const auto& v : store.pending(review::QueueKind::Verification, who)) {
      const auto id = v.at("item_id").get<std::string>();
      store.claim(review::QueueKind::Verification, id, who);
      const Criteria c{mix({id, who, "knowledge"}) % 12 != 0, mix({id, who, "attribution"}) % 17 != 1,
                       mix({id, who, "fluency"}) % 23 != 2};
      store.submit_verification(id, c, who);
    }
  }
  const auto decided = store.decided_records();
  std::vector<InstructionRecord> approved;
  for (const auto& r : decided) {
    if (r.verification.status == VerificationStatus::Approved) approved.push_back(r);
  }
  write_file_atomic(out / "verification/decided.jsonl", to_jsonl(decided));
  write_json(out / "verification/stats.json", store.verification_stats().to_json());
  summary["verification"] = store.verification_stats().to_json();
  log << "verify: " << approved.size() << " approved of " << decided.size() << "\n";

  // Quality classifier, trained on the source tier.
  std::vector<std::pair<InstructionRecord, Quality>> labeled;
  for (const auto& r : approved) labeled.emplace_back(r, r.source == Source::HighTier ? Quality::High : Quality::Low);
  const auto clf = classifier::train(labeled, embedder, cfg.classifier());
  clf.save(out / "classifier/model.json");
  const auto classified = classifier::classify(clf, approved, embedder);
  write_file_atomic(out / "classifier/classified.jsonl", to_jsonl(classified));
  std::size_t agree = 0;
  for (const auto& r : classified) agree += (r.quality == Quality::High) == (r.source == Source::HighTier);
  summary["classifier"] = {{"c", clf.c},
                           {"training_accuracy", clf.training_accuracy},
                           {"validation_accuracy", clf.validation_accuracy},
                           {"agreement_with_source", classified.empty() ? 0.0 : double(agree) / double(classified.size())}};
  log << "classify: C = " << clf.c << ", training accuracy " << clf.training_accuracy << "\n";

  // Curriculum.
  const auto split = classifier::split_by_quality(classified);
  std::vector<std::string> r_ids, s_ids;
  for (const auto& r : split.r_prime) r_ids.push_back(r.record_id());
  for (const auto& r : split.s_prime) s_ids.push_back(r.record_id());
  const auto plan = curriculum::plan(r_ids, s_ids, s_ids.size() / 2, r_ids.size() / 2, seed);
  curriculum::export_manifests(plan, classified, out / "curriculum",
                               prov("curriculum", {{"classified", out / "classifier/classified.jsonl"}}));
  summary["curriculum"] = {{"stage1", plan.stage1.size()}, {"stage2", plan.stage2.size()}, {"stage3", plan.stage3.size()}};
  log << "curriculum: " << plan.stage1.size() << "/" << plan.stage2.size() << "/" << plan.stage3.size() << "\n";

  // Introspection on the high-tier records.
  std::vector<InstructionRecord> base;
  for (const auto& r : classified) {
    if (r.source == Source::HighTier) base.push_back(r);
  }
  auto patched = std::make_shared<PatchedSet>();
  gateway::Gateway igw(seed);
  igw.set_backend(gateway::Role::Evaluator,
                  std::make_shared<gateway::FunctionBackend>(
                      [patched](const gateway::ChatRequest& r) { return evaluate("introspect", last_user_text(r), patched.get()); },
                      "evaluator-introspect"));
  igw.set_backend(gateway::Role::Suggester, std::make_shared<gateway::FunctionBackend>(
                                                [](const gateway::ChatRequest& r) { return suggest(last_user_text(r)); },
                                                "suggester"));
  igw.set_backend(gateway::Role::Judge, std::make_shared<gateway::FunctionBackend>(
                                            [](const gateway::ChatRequest& r) { return judge(last_user_text(r)); }, "judge"));
  introspection::JuryQueue jury(out / "queue");
  auto iopts = cfg.introspection();
  iopts.workers = options.workers;
  const introspection::Retrieval retrieval{&index, &embedder};
  introspection::IntrospectionState state;
  std::map<std::string, std::string> question_of;
  for (const auto& r : base) question_of[r.record_id()] = r.eval_case.question;
  std::size_t tickets = 0;
  for (int it = 0; it < options.iterations; ++it) {
    auto res = introspection::run_iteration(state, base, igw, retrieval, jury, iopts);
    if (res.status == introspection::IterationStatus::AwaitingJury) {
      state = res.next;
      state.save(out / "introspection/state.json");
      for (const auto& t : res.opened_tickets) {
        ++tickets;
        const auto h = mix({t.ticket_id, "jury"});
        std::optional<std::string> revised;
        if (h % 4 == 0) revised = "Jury revision: score the doctors by the facts in the reference answer.";
        store.submit_jury_verdict(t.ticket_id, h % 2 == 0, revised, "chief-1");
      }
      res = introspection::run_iteration(state, base, igw, retrieval, jury, iopts);
    }
    introspection::export_refresh(res, out / "introspection" / ("iter-" + std::to_string(it + 1)),
                                  prov("introspect", {{"records", out / "classifier/classified.jsonl"}}));
    state = res.next;
    for (const auto& [id, list] : state.accepted) patched->insert(question_of.at(id));
    state.save(out / "introspection/state.json");
  }
  std::vector<sigmoid::Point> points;
  std::string csv = "t,accuracy\n";
  for (const auto& h : state.history) {
    const double evaluated = h.at("evaluated").get<double>();
    const double acc = evaluated > 0 ? 1.0 - h.at("incorrect").get<double>() / evaluated : 0.0;
    points.push_back({static_cast<double>(points.size()), acc});
    csv += std::to_string(points.size() - 1) + "," + json(acc).dump() + "\n";
  }
  write_file_atomic(out / "fit/iterations.csv", csv);
  json accs = json::array();
  for (const auto& p : points) accs.push_back(p.y);
  summary["introspection"] = {{"iterations", state.history.size()}, {"accuracy", accs}, {"jury_tickets", tickets}};
  log << "introspect: " << state.history.size() << " iterations, " << tickets << " jury tickets\n";

  // Iteration model.
  const auto fit = points.size() >= 3 ? sigmoid::fit_full(points)
                                      : sigmoid::fit_fixed(points, sigmoid::kPublishedB, sigmoid::kPublishedC);
  const auto forecast = sigmoid::forecast_plateau(fit, 10);
  write_json(out / "fit/fit.json", {{"fit", fit.to_json()}, {"forecast", forecast.to_json()}});
  summary["fit"] = {{"a", fit.a}, {"b", fit.b}, {"c", fit.c}, {"rss", fit.rss}};

  // Agreement metrics against synthetic annotators.
  std::vector<metrics::ScoredCase> scored;
  std::vector<HumanAnnotation> annotations;
  const std::vector<std::string> annotators{"dr-a", "dr-b", "dr-c"};
  for (const auto& r : synthesized) {
    if (r.source != Source::HighTier) continue;
    metrics::ScoredCase sc;
    sc.case_id = r.eval_case.case_id;
    for (std::size_t i = 0; i < r.evaluation.scores.size(); ++i) {
      sc.model_scores[i] = r.evaluation.scores[i];
      sc.model_labels[i] = r.eval_case.responses[i].model_label;
    }
    scored.push_back(sc);
    for (std::size_t a = 0; a < annotators.size(); ++a) {
      if (a == 2 && mix({sc.case_id, "absent"}) % 5 == 0) continue;
      HumanAnnotation ann{sc.case_id, annotators[a], {}, std::nullopt};
      for (std::size_t i = 0; i < r.eval_case.responses.size(); ++i) {
        const int base_score = keyword_score(r.eval_case.question, r.eval_case.responses[i].text);
        const auto key = sc.case_id + std::to_string(i);
        ann.responses.push_back({i, clamp_score(base_score + noise({key, annotators[a], "rel"})),
                                 clamp_score(4 + noise({key, annotators[a], "flu"})),
                                 clamp_score(base_score + noise({key, annotators[a], "kno"}))});
      }
      annotations.push_back(ann);
    }
  }
  write_file_atomic(out / "metrics/scored.jsonl", to_jsonl(scored));
  write_file_atomic(out / "metrics/annotations.jsonl", to_jsonl(annotations));
  const auto with_humans = metrics::attach_human_scores(scored, annotations);
  const auto report = metrics::build_report(with_humans, annotations, cfg.metrics());
  write_json(out / "metrics/report.json", report.to_json());
  write_file_atomic(out / "metrics/tables.csv", report.tables_csv());
  summary["metrics"] = {{"acc_2tuple", report.acc_2tuple}, {"acc_triple", report.acc_triple},
                        {"spearman", report.spearman}, {"pearson", report.pearson}};
  log << "evaluate: 2-tuple accuracy " << report.acc_2tuple << ", triple accuracy " << report.acc_triple << "\n";

  // Blind preference between the careful and the terse evaluator.
  std::map<std::string, const InstructionRecord*> low_by_case;
  for (const auto& r : synthesized) {
    if (r.source == Source::LowTier) low_by_case[r.eval_case.case_id] = &r;
  }
  std::map<std::string, std::string> system_text;
  std::size_t enqueued = 0;
  for (const auto& r : synthesized) {
    if (enqueued == 12) break;
    if (r.source != Source::HighTier || !low_by_case.count(r.eval_case.case_id)) continue;
    json payload{{"context", chain::render_case_tuple(r.eval_case)},
                 {"candidates", {{{"text", r.evaluation.raw_text}, {"source", "medeval"}},
                                 {{"text", low_by_case[r.eval_case.case_id]->evaluation.raw_text}, {"source", "baseline"}}}}};
    system_text[store.enqueue(review::QueueKind::Preference, payload)] = r.evaluation.raw_text;
    ++enqueued;
  }
  for (const std::string who : {"pref-1", "pref-2", "pref-3"}) {
    for (const auto& v : store.pending(review::QueueKind::Preference, who)) {
      const auto id = v.at("item_id").get<std::string>();
      const bool system_is_a = v.at("A").get<std::string>() == system_text.at(id);
      const bool prefer_system = mix({id, who, "pref"}) % 5 != 0;
      store.submit_preference(id, prefer_system == system_is_a ? "A" : "B", who);
    }
  }
  const auto prefs = store.close_preference();
  write_json(out / "preference/results.json", prefs.to_json());
  summary["preference"] = prefs.to_json().at("pooled");
  log << "preference: " << prefs.pooled.n << " choices\n";

  summary["provenance"] = prov("run");
  write_json(out / "summary.json", summary);
  return summary;
}

}  // namespace medeval::demo
