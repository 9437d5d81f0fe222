#include "medeval/curriculum.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "medeval/chain.hpp"

namespace medeval::curriculum {

using nlohmann::json;

void to_json(json& j, const CurriculumPlan& v) {
  j = json{{"stage1", v.stage1}, {"stage2", v.stage2}, {"stage3", v.stage3},
           {"seed", v.seed},     {"n1", v.n1},         {"n3", v.n3}};
}

void from_json(const json& j, CurriculumPlan& v) {
  v.stage1 = j.at("stage1").get<std::vector<std::string>>();
  v.stage2 = j.at("stage2").get<std::vector<std::string>>();
  v.stage3 = j.at("stage3").get<std::vector<std::string>>();
  v.seed = j.at("seed").get<std::uint64_t>();
  v.n1 = j.at("n1").get<std::size_t>();
  v.n3 = j.at("n3").get<std::size_t>();
}

CurriculumPlan plan(std::span<const std::string> r_prime_ids, std::span<const std::string> s_prime_ids, std::size_t n1,
                    std::size_t n3, std::uint64_t seed) {
  if (n1 > s_prime_ids.size()) {
    throw Error(Errc::SampleTooLarge, "n1 = " + std::to_string(n1) + " exceeds |S'| = " + std::to_string(s_prime_ids.size()),
                {{"n", n1}, {"available", s_prime_ids.size()}});
  }
  if (n3 > r_prime_ids.size()) {
    throw Error(Errc::SampleTooLarge, "n3 = " + std::to_string(n3) + " exceeds |R'| = " + std::to_string(r_prime_ids.size()),
                {{"n", n3}, {"available", r_prime_ids.size()}});
  }
  std::vector<std::string> s(s_prime_ids.begin(), s_prime_ids.end());
  std::vector<std::string> r(r_prime_ids.begin(), r_prime_ids.end());
  std::sort(s.begin(), s.end());
  std::sort(r.begin(), r.end());
  if (std::adjacent_find(s.begin(), s.end()) != s.end() || std::adjacent_find(r.begin(), r.end()) != r.end()) {
    throw Error(Errc::InvalidValue, "duplicate record id in R' or S'");
  }
  std::vector<std::string> both;
  std::set_intersection(r.begin(), r.end(), s.begin(), s.end(), std::back_inserter(both));
  if (!both.empty()) throw Error(Errc::InvalidValue, "record " + both.front() + " is in both R' and S'");

  DeterministicRng rng(seed);
  rng.shuffle(s);
  rng.shuffle(r);

  CurriculumPlan p;
  p.seed = seed;
  p.n1 = n1;
  p.n3 = n3;
  p.stage1.assign(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n1));
  p.stage3.assign(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(n3));
  p.stage2.assign(s.begin() + static_cast<std::ptrdiff_t>(n1), s.end());
  p.stage2.insert(p.stage2.end(), r.begin() + static_cast<std::ptrdiff_t>(n3), r.end());
  std::sort(p.stage2.begin(), p.stage2.end());
  rng.shuffle(p.stage2);
  return p;
}

std::string training_target(const InstructionRecord& record) {
  std::string out = record.evaluation.raw_text;
  for (const auto& s : record.suggestions) {
    if (s.accepted()) out += "\n\nRevision note: " + s.text;
  }
  return out;
}

json manifest_line(const InstructionRecord& record) {
  return json{{"id", record.record_id()},
              {"prompt", chain::render_case_tuple(record.eval_case)},
              {"target", training_target(record)}};
}

namespace {

json write_stage(const std::string& name, const std::vector<const InstructionRecord*>& records,
                 const std::filesystem::path& out_dir) {
  std::string body;
  for (const auto* r : records) {
    if (r->verification.status != VerificationStatus::Approved) {
      throw Error(Errc::UnapprovedRecord, "record " + r->record_id() + " is not approved",
                  {{"record_id", r->record_id()}, {"status", std::string(to_string(r->verification.status))}});
    }
    body += manifest_line(*r).dump();
    body += '\n';
  }
  const std::string file = name + ".jsonl";
  write_file_atomic(out_dir / file, body);
  return json{{"name", name}, {"file", file}, {"count", records.size()}, {"sha256", sha256_hex(body)}};
}

}  // namespace

json export_manifests(const CurriculumPlan& plan, const std::vector<InstructionRecord>& records,
                      const std::filesystem::path& out_dir, const json& provenance) {
  std::map<std::string, const InstructionRecord*> by_id;
  for (const auto& r : records) by_id[r.record_id()] = &r;
  auto resolve = [&](const std::vector<std::string>& ids) {
    std::vector<const InstructionRecord*> out;
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw Error(Errc::UnresolvedId, "plan id " + id + " has no record", {{"record_id", id}});
      out.push_back(it->second);
    }
    return out;
  };
  const auto s1 = resolve(plan.stage1);
  const auto s2 = resolve(plan.stage2);
  const auto s3 = resolve(plan.stage3);
  // Check approval before touching the output directory.
  for (const auto* group : {&s1, &s2, &s3}) {
    for (const auto* r : *group) {
      if (r->verification.status != VerificationStatus::Approved) {
        throw Error(Errc::UnapprovedRecord, "record " + r->record_id() + " is not approved",
                    {{"record_id", r->record_id()}, {"status", std::string(to_string(r->verification.status))}});
      }
    }
  }
  std::filesystem::create_directories(out_dir);
  json stages = json::array();
  stages.push_back(write_stage("stage1", s1, out_dir));
  stages.push_back(write_stage("stage2", s2, out_dir));
  stages.push_back(write_stage("stage3", s3, out_dir));
  json manifest{{"order", {"stage1", "stage2", "stage3"}},
                {"stages", stages},
                {"seed", plan.seed},
                {"n1", plan.n1},
                {"n3", plan.n3},
                {"provenance", provenance}};
  write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

json export_stage(const std::string& stage_name, const std::vector<InstructionRecord>& records,
                  const std::filesystem::path& out_dir, const json& provenance) {
  std::vector<const InstructionRecord*> ptrs;
  for (const auto& r : records) ptrs.push_back(&r);
  std::filesystem::create_directories(out_dir);
  json stages = json::array();
  stages.push_back(write_stage(stage_name, ptrs, out_dir));
  json manifest{{"order", {stage_name}}, {"stages", stages}, {"provenance", provenance}};
  write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace medeval::curriculum
