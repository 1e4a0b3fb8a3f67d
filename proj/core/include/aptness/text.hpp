#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace aptness {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Lowercases, trims and collapses internal whitespace runs to one space.
std::string normalize_key(std::string_view s);

bool starts_with_icase(std::string_view s, std::string_view prefix);

// Splits on any of the given delimiter characters; empty pieces are dropped
// after trimming.
std::vector<std::string> split_any(std::string_view s, std::string_view delims);

// FNV-1a, 64 bit. Stable across platforms and processes.
std::uint64_t fnv1a64(std::string_view data,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

// SplitMix64: tiny portable generator; unlike std:: distributions its output
// is identical on every standard library.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  // Uniform in [0, 1).
  double next_unit();
  // Uniform in [0, bound), bound > 0. Uses rejection to avoid modulo bias.
  std::uint64_t next_below(std::uint64_t bound);

 private:
  std::uint64_t state_;
};

// Replaces `{name}` occurrences for names present in `slots`. Unknown braces
// are left untouched. Single pass: substituted text is never re-scanned.
std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& slots);

std::string read_file(const std::filesystem::path& path);
// Writes through a sibling temp file and renames.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// One JSON value per non-blank line. Errors name the 1-based line number.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path,
                 const std::vector<nlohmann::json>& rows);

}  // namespace aptness
