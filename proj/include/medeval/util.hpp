#pragma once
// Small shared helpers: deterministic RNG, hashing, text and file utilities.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace medeval {

// Seeded RNG with platform-independent draws. std::mt19937_64's raw output
// is fixed by the standard; the distributions in <random> are not, so we
// derive every draw from the raw stream.
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, n), rejection-sampled. n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  // Uniform in [0, 1) with 53 random bits.
  double uniform01();

  // Fisher-Yates, iterating from the back.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);
// FNV-1a 64-bit, used for feature hashing.
std::uint64_t fnv1a64(std::string_view data) noexcept;

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool is_blank(std::string_view s) noexcept;
std::vector<std::string> split_words(std::string_view s);
std::string join(std::span<const std::string> parts, std::string_view sep);

std::string read_file(const std::filesystem::path& path);
std::vector<std::string> read_lines(const std::filesystem::path& path);
// Write via a temp file + rename so readers never observe a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
void append_line_durable(const std::filesystem::path& path, std::string_view line);

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results land in
// their own slot, so output order never depends on scheduling.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, std::size_t workers, Fn fn) {
  std::vector<T> out(n);
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          out[i] = fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace medeval
