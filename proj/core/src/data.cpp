#include "aptness/data.hpp"

#include <cstdlib>
#include <map>

#include "aptness/error.hpp"
#include "aptness/text.hpp"

namespace aptness::data {

namespace detail {
const std::map<std::string, std::string_view, std::less<>>& embedded_files();
}

namespace {
std::string strip_comment_header(std::string_view text) {
  std::size_t pos = 0;
  while (pos < text.size() && text.substr(pos, 2) == "//") {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) return {};
    pos = nl + 1;
  }
  return std::string(text.substr(pos));
}
}  // namespace

std::string load(std::string_view relative_path, const std::filesystem::path& override_dir) {
  std::vector<std::filesystem::path> dirs;
  if (!override_dir.empty()) dirs.push_back(override_dir);
  if (const char* env = std::getenv("APTNESS_DATA_DIR"); env && *env) dirs.emplace_back(env);
  for (const auto& dir : dirs) {
    const auto candidate = dir / std::filesystem::path(std::string(relative_path));
    if (std::filesystem::is_regular_file(candidate)) return read_file(candidate);
  }
  const auto& files = detail::embedded_files();
  if (auto it = files.find(relative_path); it != files.end()) {
    return std::string(it->second);
  }
  throw Error(ErrorKind::kConfig, "no data file '" + std::string(relative_path) + "'");
}

std::string load_template(std::string_view name, const std::filesystem::path& override_dir) {
  return strip_comment_header(load("templates/" + std::string(name) + ".txt", override_dir));
}

std::vector<std::string> embedded_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : detail::embedded_files()) names.push_back(name);
  return names;
}

}  // namespace aptness::data
