#pragma once
// Three-stage curriculum: low-tier patterns first, a mixed middle stage, and
// high-tier evaluations last. Output is a set of ordered, hash-attested
// manifests for an external fine-tuning job.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "medeval/model.hpp"

namespace medeval::curriculum {

struct CurriculumPlan {
  std::vector<std::string> stage1;  // sampled from S'
  std::vector<std::string> stage2;  // remainder of both sets
  std::vector<std::string> stage3;  // sampled from R'
  std::uint64_t seed = 0;
  std::size_t n1 = 0;
  std::size_t n3 = 0;

  bool operator==(const CurriculumPlan&) const = default;
};

void to_json(nlohmann::json& j, const CurriculumPlan& v);
void from_json(const nlohmann::json& j, CurriculumPlan& v);

// Both id lists are sorted, then shuffled with one seeded RNG (S' first, then
// R'). stage1 and stage3 are prefixes of the shuffled lists; stage2 is the
// union of the leftovers, shuffled once more.
CurriculumPlan plan(std::span<const std::string> r_prime_ids, std::span<const std::string> s_prime_ids, std::size_t n1,
                    std::size_t n3, std::uint64_t seed);

// Training target: the evaluation text, then one "Revision note:" block per
// accepted suggestion in order.
std::string training_target(const InstructionRecord& record);

// {"id", "prompt", "target"}
nlohmann::json manifest_line(const InstructionRecord& record);

// Writes stage1.jsonl, stage2.jsonl, stage3.jsonl and manifest.json.
// Returns the manifest.
nlohmann::json export_manifests(const CurriculumPlan& plan, const std::vector<InstructionRecord>& records,
                                const std::filesystem::path& out_dir, const nlohmann::json& provenance = nlohmann::json::object());

// Single-stage variant used for refresh manifests.
nlohmann::json export_stage(const std::string& stage_name, const std::vector<InstructionRecord>& records,
                            const std::filesystem::path& out_dir, const nlohmann::json& provenance = nlohmann::json::object());

}  // namespace medeval::curriculum
