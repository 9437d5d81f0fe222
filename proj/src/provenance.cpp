#include "medeval/provenance.hpp"

#include <algorithm>

#include "medeval/error.hpp"
#include "medeval/util.hpp"

namespace medeval {

std::string hash_path(const std::filesystem::path& path) {
  if (!std::filesystem::is_directory(path)) return sha256_file(path);
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(path)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& f : files) {
    listing += std::filesystem::relative(f, path).generic_string() + " " + sha256_file(f) + "\n";
  }
  return sha256_hex(listing);
}

nlohmann::json make_provenance(const std::string& command, std::uint64_t seed, const std::string& config_hash,
                               const std::vector<std::pair<std::string, std::filesystem::path>>& inputs) {
  nlohmann::json in = nlohmann::json::object();
  for (const auto& [label, path] : inputs) {
    in[label] = {{"file", path.filename().string()}, {"sha256", hash_path(path)}};
  }
  return {{"tool", "medeval"}, {"version", kToolVersion}, {"command", command},
          {"seed", seed},      {"config_sha256", config_hash}, {"inputs", in}};
}

}  // namespace medeval
