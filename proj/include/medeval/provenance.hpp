#pragma once
// Provenance block written next to every artifact: tool version, seed,
// config hash and the sha256 of each input. No timestamps, so reruns with
// the same inputs produce identical files.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace medeval {

inline constexpr const char* kToolVersion = "0.3.0";

// inputs: (label, path). Directories hash their sorted regular files.
nlohmann::json make_provenance(const std::string& command, std::uint64_t seed, const std::string& config_hash,
                               const std::vector<std::pair<std::string, std::filesystem::path>>& inputs);

std::string hash_path(const std::filesystem::path& path);

}  // namespace medeval
