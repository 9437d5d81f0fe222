#include "medeval/cli.hpp"

#include <algorithm>
#include <csignal>
#include <pthread.h>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "medeval/chain.hpp"
#include "medeval/classifier.hpp"
#include "medeval/config.hpp"
#include "medeval/curriculum.hpp"
#include "medeval/demo.hpp"
#include "medeval/ingest.hpp"
#include "medeval/introspection.hpp"
#include "medeval/knowledge.hpp"
#include "medeval/metrics.hpp"
#include "medeval/provenance.hpp"
#include "medeval/review.hpp"
#include "medeval/sigmoid.hpp"

namespace medeval::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

config::PipelineConfig load_config(const Globals& g) {
  auto cfg = g.config_path.empty() ? config::PipelineConfig::defaults() : config::PipelineConfig::load(g.config_path);
  return cfg;
}

std::uint64_t effective_seed(const Globals& g, const config::PipelineConfig& cfg) { return g.seed.value_or(cfg.seed()); }

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw Error(Errc::FileNotFound, "no such file: " + p.string(), {{"path", p.string()}});
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, j.dump(2) + "\n");
}

void write_lines(const fs::path& path, const std::vector<json>& lines) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::string body;
  for (const auto& l : lines) body += l.dump() + "\n";
  write_file_atomic(path, body);
}

template <typename T>
void write_records(const fs::path& path, const std::vector<T>& items) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, to_jsonl(items));
}

void attach_gateway(gateway::Gateway& gw, const config::PipelineConfig& cfg, gateway::Role role, bool required) {
  const auto b = required ? std::optional(cfg.require_backend(role)) : cfg.backend(role);
  if (!b) return;
  gw.set_backend(role, gateway::make_backend(*b), gateway::RetryPolicy{b->max_retries},
                 static_cast<std::size_t>(std::max(1, b->max_in_flight)), b->default_params);
}

std::vector<ingest::QaPair> read_qa(const fs::path& path) {
  require_file(path);
  auto loaded = ingest::load_qa(path);
  if (loaded.pairs.empty()) throw Error(Errc::NoValidRecords, path.string() + " has no valid QA pairs");
  return loaded.pairs;
}

std::vector<ModelResponse> read_responses(const fs::path& path, const std::string& label) {
  require_file(path);
  std::vector<ModelResponse> out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (is_blank(line)) continue;
    try {
      const auto j = json::parse(line);
      ModelResponse r;
      if (j.is_string()) {
        r.text = j.get<std::string>();
      } else {
        r.text = j.at("text").get<std::string>();
        if (j.contains("generation_params") && !j.at("generation_params").is_null()) {
          r.generation_params = j.at("generation_params").get<GenerationParams>();
        }
      }
      r.model_label = label;
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(Errc::InvalidValue, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// --- subcommands -------------------------------------------------------------

struct IngestArgs {
  std::string qa, rules, out, report;
  std::vector<std::string> responses;
};

json cmd_ingest(const Globals& g, const IngestArgs& a) {
  const auto cfg = load_config(g);
  require_file(a.qa);
  const auto loaded = ingest::load_qa(a.qa);
  const auto rules = a.rules.empty() ? ingest::default_rules() : ingest::load_rules(a.rules);
  const auto filtered = ingest::apply_filter(loaded.pairs, rules);
  if (filtered.kept.empty()) throw Error(Errc::NoValidRecords, "no QA pairs survive loading and filtering");
  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<json> qa, rejects;
  for (const auto& p : filtered.kept) qa.push_back({{"question", p.question}, {"answer", p.answer}});
  for (const auto& r : loaded.rejects) rejects.push_back({{"line", r.line_no}, {"reason", r.reason}});
  write_lines(out / "qa.jsonl", qa);
  write_lines(out / "rejects.jsonl", rejects);

  std::vector<std::pair<std::string, fs::path>> inputs{{"qa", a.qa}};
  if (!a.rules.empty()) inputs.emplace_back("rules", a.rules);
  json summary{{"kept", filtered.report.kept}, {"filtered_out", filtered.report.filtered_out},
               {"malformed", loaded.rejects.size()}};
  if (!a.responses.empty()) {
    std::map<std::string, std::vector<ModelResponse>> by_label;
    for (const auto& spec : a.responses) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
        throw Error(Errc::InvalidValue, "--responses expects label=path, got '" + spec + "'");
      }
      const auto label = spec.substr(0, eq);
      if (by_label.count(label)) throw Error(Errc::DuplicateModelLabel, "label " + label + " given twice", {{"label", label}});
      by_label[label] = read_responses(spec.substr(eq + 1), label);
      inputs.emplace_back("responses." + label, spec.substr(eq + 1));
    }
    const auto cases = ingest::assemble_cases(filtered.kept, by_label);
    write_records(out / "cases.jsonl", cases);
    summary["cases"] = cases.size();
  }
  auto report = filtered.report.to_json();
  report["malformed"] = loaded.rejects.size();
  report["provenance"] = make_provenance("ingest", effective_seed(g, cfg), cfg.hash(), inputs);
  write_json(out / "report.json", report);
  if (!a.report.empty()) write_json(a.report, report);
  return summary;
}

struct RespondArgs {
  std::string qa, label, out;
  std::size_t workers = 1;
};

json cmd_respond(const Globals& g, const RespondArgs& a) {
  const auto cfg = load_config(g);
  const auto pairs = read_qa(a.qa);
  gateway::Gateway gw(effective_seed(g, cfg));
  attach_gateway(gw, cfg, gateway::Role::Responder, true);
  const auto responses = parallel_map<ModelResponse>(pairs.size(), std::max<std::size_t>(1, a.workers), [&](std::size_t i) {
    return gateway::respond_medical(gw, pairs[i].question, a.label);
  });
  write_records(a.out, responses);
  return {{"responses", responses.size()}, {"label", a.label}};
}

struct BuildDbArgs {
  std::string docs, out;
  std::optional<std::size_t> window, overlap;
};

json cmd_build_db(const Globals& g, const BuildDbArgs& a) {
  const auto cfg = load_config(g);
  if (!fs::is_directory(a.docs)) throw Error(Errc::FileNotFound, "no such directory: " + a.docs, {{"path", a.docs}});
  const knowledge::HashEmbedder embedder(cfg.embedder_dim());
  const auto chunks = knowledge::chunk_directory(a.docs, a.window.value_or(cfg.chunk_window()),
                                                 a.overlap.value_or(cfg.chunk_overlap()));
  const auto index = knowledge::VectorIndex::build(chunks, embedder);
  index.save(a.out);
  write_json(fs::path(a.out) / "provenance.json",
             make_provenance("build-db", effective_seed(g, cfg), cfg.hash(), {{"docs", a.docs}}));
  return {{"chunks", index.size()}, {"dim", index.dim()}, {"fingerprint", index.fingerprint()}};
}

struct SynthArgs {
  std::string cases, db, source = "high", out, traces, failures, scored, marker;
  std::size_t workers = 1;
  int max_rounds = 0;  // 0: from config
};

json cmd_synthesize(const Globals& g, const SynthArgs& a) {
  const auto cfg = load_config(g);
  require_file(a.cases);
  const auto cases = read_jsonl<EvalCase>(a.cases);
  if (cases.empty()) throw Error(Errc::NoValidRecords, a.cases + " has no cases");
  if (a.source != "high" && a.source != "low") throw Error(Errc::InvalidValue, "--source must be high or low");
  gateway::Gateway gw(effective_seed(g, cfg));
  attach_gateway(gw, cfg, gateway::Role::Evaluator, true);
  const knowledge::HashEmbedder embedder(cfg.embedder_dim());
  std::optional<knowledge::VectorIndex> index;
  if (!a.db.empty()) {
    index = knowledge::VectorIndex::load(a.db);
    if (index->fingerprint() != embedder.fingerprint()) {
      throw Error(Errc::EmbedderMismatch, "index built with '" + index->fingerprint() + "', configured embedder is '" +
                                              embedder.fingerprint() + "'");
    }
  }
  auto chain_cfg = cfg.chain();
  if (a.max_rounds > 0) chain_cfg.max_rounds = a.max_rounds;
  if (!a.marker.empty()) chain_cfg.marker = chain::marker_from_string(a.marker);
  const auto res = chain::synthesize(cases, a.source == "high" ? Source::HighTier : Source::LowTier,
                                     index ? &*index : nullptr, &embedder, gw, chain_cfg, std::max<std::size_t>(1, a.workers));
  write_records(a.out, res.records);
  if (!a.traces.empty()) {
    std::vector<json> traces;
    for (const auto& t : res.traces) traces.push_back(t.to_json());
    write_lines(a.traces, traces);
  }
  if (!a.failures.empty()) write_lines(a.failures, res.failures);
  if (!a.scored.empty()) {
    std::vector<metrics::ScoredCase> scored;
    for (const auto& r : res.records) {
      metrics::ScoredCase sc;
      sc.case_id = r.eval_case.case_id;
      for (std::size_t i = 0; i < r.evaluation.scores.size(); ++i) {
        sc.model_scores[i] = r.evaluation.scores[i];
        sc.model_labels[i] = r.eval_case.responses[i].model_label;
      }
      scored.push_back(std::move(sc));
    }
    write_records(a.scored, scored);
  }
  std::size_t retrievals = 0;
  for (const auto& t : res.traces) retrievals += t.retrievals();
  std::vector<std::pair<std::string, fs::path>> inputs{{"cases", a.cases}};
  if (!a.db.empty()) inputs.emplace_back("db", a.db);
  write_json(a.out + ".provenance.json", make_provenance("synthesize", effective_seed(g, cfg), cfg.hash(), inputs));
  return {{"records", res.records.size()}, {"failures", res.failures.size()}, {"retrievals", retrievals}};
}

struct ClassifyArgs {
  std::string train, model, in, out;
};

json cmd_classify(const Globals& g, const ClassifyArgs& a) {
  const auto cfg = load_config(g);
  if (a.model.empty()) throw Error(Errc::InvalidValue, "--model is required");
  if (a.train.empty() && a.in.empty()) throw Error(Errc::InvalidValue, "give --train, --in, or both");
  const knowledge::HashEmbedder embedder(cfg.embedder_dim());
  json summary = json::object();
  std::optional<classifier::TrainedClassifier> clf;
  if (!a.train.empty()) {
    require_file(a.train);
    std::vector<std::pair<InstructionRecord, Quality>> labeled;
    for (auto& r : read_jsonl<InstructionRecord>(a.train)) {
      // An explicit quality label wins; otherwise the provenance tier is the label.
      const auto q = r.quality != Quality::Unclassified ? r.quality
                                                        : (r.source == Source::HighTier ? Quality::High : Quality::Low);
      labeled.emplace_back(std::move(r), q);
    }
    auto opts = cfg.classifier();
    opts.seed = effective_seed(g, cfg);
    clf = classifier::train(labeled, embedder, opts);
    clf->save(a.model);
    summary["c"] = clf->c;
    summary["validation_accuracy"] = clf->validation_accuracy;
    summary["training_accuracy"] = clf->training_accuracy;
    summary["warnings"] = clf->warnings;
  } else {
    require_file(a.model);
    clf = classifier::TrainedClassifier::load(a.model);
  }
  if (!a.in.empty()) {
    if (a.out.empty()) throw Error(Errc::InvalidValue, "--out is required with --in");
    require_file(a.in);
    const auto classified = classifier::classify(*clf, read_jsonl<InstructionRecord>(a.in), embedder);
    write_records(a.out, classified);
    const auto high = std::count_if(classified.begin(), classified.end(),
                                    [](const auto& r) { return r.quality == Quality::High; });
    summary["high"] = high;
    summary["low"] = classified.size() - static_cast<std::size_t>(high);
  }
  return summary;
}

struct CurriculumArgs {
  std::string in, out;
  std::optional<std::size_t> n1, n3;
};

json cmd_curriculum(const Globals& g, const CurriculumArgs& a) {
  const auto cfg = load_config(g);
  require_file(a.in);
  const auto records = read_jsonl<InstructionRecord>(a.in);
  const auto split = classifier::split_by_quality(records);
  std::vector<std::string> r_ids, s_ids;
  for (const auto& r : split.r_prime) r_ids.push_back(r.record_id());
  for (const auto& r : split.s_prime) s_ids.push_back(r.record_id());
  const auto seed = effective_seed(g, cfg);
  const auto n1 = a.n1.value_or(static_cast<std::size_t>(cfg.get_int("curriculum", "n1")));
  const auto n3 = a.n3.value_or(static_cast<std::size_t>(cfg.get_int("curriculum", "n3")));
  const auto plan = curriculum::plan(r_ids, s_ids, n1, n3, seed);
  const auto manifest = curriculum::export_manifests(plan, records, a.out,
                                                     make_provenance("curriculum", seed, cfg.hash(), {{"records", a.in}}));
  return {{"stage1", plan.stage1.size()}, {"stage2", plan.stage2.size()}, {"stage3", plan.stage3.size()},
          {"manifest", (fs::path(a.out) / "manifest.json").string()}};
}

struct IntrospectArgs {
  std::string records, state, queue_dir, out, db;
  int iterations = 1;
  bool skip_jury = false;
};

json cmd_introspect(const Globals& g, const IntrospectArgs& a) {
  const auto cfg = load_config(g);
  require_file(a.records);
  const auto base = read_jsonl<InstructionRecord>(a.records);
  gateway::Gateway gw(effective_seed(g, cfg));
  attach_gateway(gw, cfg, gateway::Role::Evaluator, true);
  attach_gateway(gw, cfg, gateway::Role::Suggester, true);
  attach_gateway(gw, cfg, gateway::Role::Judge, true);
  const knowledge::HashEmbedder embedder(cfg.embedder_dim());
  std::optional<knowledge::VectorIndex> index;
  if (!a.db.empty()) index = knowledge::VectorIndex::load(a.db);
  const introspection::Retrieval retrieval{index ? &*index : nullptr, &embedder};
  introspection::JuryQueue jury(a.queue_dir);
  auto opts = cfg.introspection();
  opts.skip_jury = a.skip_jury;

  auto state = fs::exists(a.state) ? introspection::IntrospectionState::load(a.state) : introspection::IntrospectionState{};
  json iterations = json::array();
  std::string status = "completed";
  for (int i = 0; i < std::max(1, a.iterations); ++i) {
    const int iteration = state.iteration;
    auto res = introspection::run_iteration(state, base, gw, retrieval, jury, opts);
    state = res.next;
    state.save(a.state);
    if (res.status == introspection::IterationStatus::AwaitingJury) {
      status = "awaiting_jury";
      json tickets = json::array();
      for (const auto& t : res.opened_tickets) tickets.push_back(t.ticket_id);
      iterations.push_back({{"iteration", iteration}, {"status", status}, {"tickets", tickets}});
      break;
    }
    const auto dir = fs::path(a.out) / ("iter-" + std::to_string(iteration));
    std::vector<std::pair<std::string, fs::path>> inputs{{"records", a.records}};
    if (!a.db.empty()) inputs.emplace_back("db", a.db);
    introspection::export_refresh(res, dir, make_provenance("introspect", effective_seed(g, cfg), cfg.hash(), inputs));
    iterations.push_back({{"iteration", iteration},
                          {"status", "completed"},
                          {"refreshed", res.refreshed.size()},
                          {"summary", state.history.empty() ? json(nullptr) : state.history.back()}});
  }
  return {{"status", status}, {"iterations", iterations}, {"next_iteration", state.iteration}};
}

struct EvaluateArgs {
  std::string scores, annotations, out, tables;
};

json cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
  const auto cfg = load_config(g);
  require_file(a.scores);
  require_file(a.annotations);
  auto cases = read_jsonl<metrics::ScoredCase>(a.scores);
  const auto annotations = read_jsonl<HumanAnnotation>(a.annotations);
  cases = metrics::attach_human_scores(std::move(cases), annotations);
  const auto report = metrics::build_report(cases, annotations, cfg.metrics());
  auto j = report.to_json();
  j["provenance"] = make_provenance("evaluate", effective_seed(g, cfg), cfg.hash(),
                                    {{"scores", a.scores}, {"annotations", a.annotations}});
  if (!a.out.empty()) write_json(a.out, j);
  if (!a.tables.empty()) {
    if (fs::path(a.tables).has_parent_path()) fs::create_directories(fs::path(a.tables).parent_path());
    write_file_atomic(a.tables, report.tables_csv());
  }
  return {{"acc_2tuple", report.acc_2tuple}, {"acc_triple", report.acc_triple}, {"spearman", report.spearman},
          {"pearson", report.pearson}, {"n_cases", report.n_cases}};
}

struct FitArgs {
  std::string points, mode = "full", out;
  int horizon = 10;
  double b = sigmoid::kPublishedB;
  double c = sigmoid::kPublishedC;
};

json cmd_fit(const Globals& g, const FitArgs& a) {
  const auto cfg = load_config(g);
  require_file(a.points);
  const auto points = sigmoid::normalize_points(sigmoid::read_points_csv(a.points));
  sigmoid::SigmoidFit fit;
  if (a.mode == "full") {
    fit = sigmoid::fit_full(points);
  } else if (a.mode == "fixed") {
    fit = sigmoid::fit_fixed(points, a.b, a.c);
  } else {
    throw Error(Errc::InvalidValue, "--mode must be fixed or full");
  }
  const auto forecast = sigmoid::forecast_plateau(fit, a.horizon);
  json j{{"mode", a.mode}, {"fit", fit.to_json()}, {"forecast", forecast.to_json()}};
  j["provenance"] = make_provenance("fit", effective_seed(g, cfg), cfg.hash(), {{"points", a.points}});
  if (!a.out.empty()) write_json(a.out, j);
  return {{"a", fit.a}, {"b", fit.b}, {"c", fit.c}, {"rss", fit.rss}, {"asymptote", forecast.asymptote},
          {"warnings", fit.warnings}};
}

struct ServeArgs {
  std::string queue_dir, reviewers, host = "127.0.0.1";
  int port = 8080;
};

json cmd_serve(const Globals& g, const ServeArgs& a, std::ostream& out) {
  const auto cfg = load_config(g);
  require_file(a.reviewers);
  review::ReviewStore store(a.queue_dir, cfg.review());
  review::ReviewServer server(store, review::load_tokens(a.reviewers));
  // Block the stop signals before the server threads start so only sigwait sees them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  const int port = server.start(a.host, a.port);
  out << json{{"listening", a.host + ":" + std::to_string(port)}}.dump() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  return {{"stopped", true}, {"signal", sig}};
}

struct QueueArgs {
  std::string queue_dir, kind = "verification", in, out;
};

json cmd_enqueue(const Globals& g, const QueueArgs& a) {
  const auto cfg = load_config(g);
  require_file(a.in);
  review::ReviewStore store(a.queue_dir, cfg.review());
  const auto kind = review::queue_from_string(a.kind);
  std::size_t n = 0;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(a.in)) {
    ++line_no;
    if (is_blank(line)) continue;
    json payload;
    try {
      payload = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::InvalidPayload, a.in + ":" + std::to_string(line_no) + ": " + e.what());
    }
    store.enqueue(kind, payload);
    ++n;
  }
  return {{"enqueued", n}, {"kind", a.kind}, {"counts", store.counts(kind)}};
}

json cmd_export(const Globals& g, const QueueArgs& a) {
  const auto cfg = load_config(g);
  review::ReviewStore store(a.queue_dir, cfg.review());
  if (a.out.empty()) throw Error(Errc::InvalidValue, "--out is required");
  if (a.kind == "preference") {
    write_json(a.out, store.preference_results().to_json());
    return {{"written", a.out}};
  }
  const auto decided = store.decided_records();
  std::vector<InstructionRecord> approved;
  for (const auto& r : decided) {
    if (r.verification.status == VerificationStatus::Approved) approved.push_back(r);
  }
  write_records(a.out, approved);
  return {{"decided", decided.size()}, {"approved", approved.size()}, {"rejected", decided.size() - approved.size()}};
}

json cmd_stats(const Globals& g, const QueueArgs& a) {
  const auto cfg = load_config(g);
  review::ReviewStore store(a.queue_dir, cfg.review());
  auto j = store.verification_stats().to_json();
  if (!a.out.empty()) write_json(a.out, j);
  return j;
}

struct DemoArgs {
  std::string out;
  std::size_t workers = 2;
};

json cmd_demo(const Globals& g, const DemoArgs& a, std::ostream& err) {
  demo::RunOptions o;
  o.seed = g.seed.value_or(7);
  o.workers = std::max<std::size_t>(1, a.workers);
  return demo::run(a.out, o, err);
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Medical QA evaluator pipeline", "medeval"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override pipeline.seed");
  app.set_version_flag("--version", std::string(kToolVersion));

  IngestArgs ingest_a;
  auto* ingest = app.add_subcommand("ingest", "Load, filter and assemble QA cases");
  ingest->add_option("--qa,--in", ingest_a.qa, "QA JSONL file")->required();
  ingest->add_option("--rules", ingest_a.rules, "Filter pattern file");
  ingest->add_option("--responses", ingest_a.responses, "label=path of responder output aligned with kept pairs");
  ingest->add_option("--out", ingest_a.out, "Output directory")->required();
  ingest->add_option("--report", ingest_a.report, "Extra copy of report.json");

  RespondArgs respond_a;
  auto* respond = app.add_subcommand("respond", "Collect responder answers for QA pairs");
  respond->add_option("--qa", respond_a.qa)->required();
  respond->add_option("--label", respond_a.label)->required();
  respond->add_option("--out", respond_a.out)->required();
  respond->add_option("--workers", respond_a.workers);

  BuildDbArgs db_a;
  auto* build_db = app.add_subcommand("build-db", "Chunk and embed reference documents");
  build_db->add_option("--docs", db_a.docs)->required();
  build_db->add_option("--out", db_a.out)->required();
  build_db->add_option("--window", db_a.window);
  build_db->add_option("--overlap", db_a.overlap);

  SynthArgs synth_a;
  auto* synth = app.add_subcommand("synthesize", "Run the knowledge completion chain over cases");
  synth->add_option("--cases", synth_a.cases)->required();
  synth->add_option("--db,--store", synth_a.db);
  synth->add_option("--max-rounds", synth_a.max_rounds)->check(CLI::PositiveNumber);
  synth->add_option("--marker", synth_a.marker);
  synth->add_option("--source", synth_a.source)->check(CLI::IsMember({"high", "low"}));
  synth->add_option("--out", synth_a.out)->required();
  synth->add_option("--traces", synth_a.traces);
  synth->add_option("--failures", synth_a.failures);
  synth->add_option("--scored", synth_a.scored);
  synth->add_option("--workers", synth_a.workers);

  ClassifyArgs clf_a;
  auto* classify = app.add_subcommand("classify", "Train and/or apply the quality classifier");
  classify->add_option("--train", clf_a.train);
  classify->add_option("--model", clf_a.model)->required();
  classify->add_option("--in", clf_a.in);
  classify->add_option("--out", clf_a.out);

  CurriculumArgs cur_a;
  auto* curriculum = app.add_subcommand("curriculum", "Plan and export the three training stages");
  curriculum->add_option("--in", cur_a.in)->required();
  curriculum->add_option("--n1", cur_a.n1);
  curriculum->add_option("--n3", cur_a.n3);
  curriculum->add_option("--out", cur_a.out)->required();

  IntrospectArgs intro_a;
  auto* introspect = app.add_subcommand("introspect", "Run or resume introspection iterations");
  introspect->add_option("--records", intro_a.records)->required();
  introspect->add_option("--state", intro_a.state)->required();
  introspect->add_option("--queue-dir", intro_a.queue_dir)->required();
  introspect->add_option("--out", intro_a.out)->required();
  introspect->add_option("--db", intro_a.db);
  introspect->add_option("--iter", intro_a.iterations);
  introspect->add_flag("--skip-jury", intro_a.skip_jury);

  EvaluateArgs eval_a;
  auto* evaluate = app.add_subcommand("evaluate", "Agreement metrics against human annotations");
  evaluate->add_option("--scores", eval_a.scores)->required();
  evaluate->add_option("--annotations", eval_a.annotations)->required();
  evaluate->add_option("--out", eval_a.out);
  evaluate->add_option("--tables", eval_a.tables);

  FitArgs fit_a;
  auto* fit = app.add_subcommand("fit", "Fit the iteration accuracy curve");
  fit->add_option("--points", fit_a.points)->required();
  fit->add_option("--mode", fit_a.mode)->check(CLI::IsMember({"fixed", "full"}));
  fit->add_option("--b", fit_a.b);
  fit->add_option("--c", fit_a.c);
  fit->add_option("--horizon", fit_a.horizon);
  fit->add_option("--out", fit_a.out);

  ServeArgs serve_a;
  auto* serve = app.add_subcommand("serve", "Run the review service");
  serve->add_option("--queue-dir", serve_a.queue_dir)->required();
  serve->add_option("--reviewers", serve_a.reviewers)->required();
  serve->add_option("--host", serve_a.host);
  serve->add_option("--port", serve_a.port);

  QueueArgs enq_a, exp_a, stats_a;
  auto* enqueue = app.add_subcommand("enqueue", "Add review items from a JSONL file");
  enqueue->add_option("--queue-dir", enq_a.queue_dir)->required();
  enqueue->add_option("--kind", enq_a.kind)->check(CLI::IsMember({"verification", "jury", "preference"}));
  enqueue->add_option("--in", enq_a.in)->required();
  auto* exp = app.add_subcommand("export", "Export approved records or preference results");
  exp->add_option("--queue-dir", exp_a.queue_dir)->required();
  exp->add_option("--kind", exp_a.kind)->check(CLI::IsMember({"verification", "preference"}));
  exp->add_option("--out", exp_a.out)->required();
  auto* stats = app.add_subcommand("stats", "Verification statistics");
  stats->add_option("--queue-dir", stats_a.queue_dir)->required();
  stats->add_option("--out", stats_a.out);

  DemoArgs demo_a;
  auto* demo_cmd = app.add_subcommand("demo", "Offline end-to-end run on synthetic data");
  demo_cmd->add_option("--out", demo_a.out)->required();
  demo_cmd->add_option("--workers", demo_a.workers);

  // The first bare word must name a subcommand.
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a == "--config" || a == "--seed") {
      ++i;
      continue;
    }
    if (a.rfind("-", 0) == 0) continue;
    const auto subs = app.get_subcommands([](CLI::App*) { return true; });
    if (std::none_of(subs.begin(), subs.end(), [&](CLI::App* s) { return s->get_name() == a; })) {
      err << Error(Errc::UnknownCommand, "unknown command '" + a + "'", {{"command", a}}).to_json().dump() << "\n";
      return 2;
    }
    break;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << Error(Errc::InvalidValue, e.what(), {{"usage", true}}).to_json().dump() << "\n";
    return 2;
  }

  try {
    json result;
    if (*ingest) result = cmd_ingest(g, ingest_a);
    else if (*respond) result = cmd_respond(g, respond_a);
    else if (*build_db) result = cmd_build_db(g, db_a);
    else if (*synth) result = cmd_synthesize(g, synth_a);
    else if (*classify) result = cmd_classify(g, clf_a);
    else if (*curriculum) result = cmd_curriculum(g, cur_a);
    else if (*introspect) result = cmd_introspect(g, intro_a);
    else if (*evaluate) result = cmd_evaluate(g, eval_a);
    else if (*fit) result = cmd_fit(g, fit_a);
    else if (*serve) result = cmd_serve(g, serve_a, out);
    else if (*enqueue) result = cmd_enqueue(g, enq_a);
    else if (*exp) result = cmd_export(g, exp_a);
    else if (*stats) result = cmd_stats(g, stats_a);
    else if (*demo_cmd) result = cmd_demo(g, demo_a, err);
    out << result.dump() << "\n";
    return 0;
  } catch (const Error& e) {
    err << e.to_json().dump() << "\n";
    return 1;
  } catch (const json::exception& e) {
    err << Error(Errc::InvalidValue, e.what()).to_json().dump() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << Error(Errc::IoError, e.what(), {{"path", e.path1().string()}}).to_json().dump() << "\n";
    return 1;
  }
}

}  // namespace medeval::cli
