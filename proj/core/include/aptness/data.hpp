#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

// Shipped data files: the emotion palette, strategy catalogs and prompt
// templates. A copy of core/data is compiled into the library; a file with
// the same relative path under an override directory (argument, or the
// APTNESS_DATA_DIR environment variable) takes precedence.
namespace aptness::data {

std::string load(std::string_view relative_path,
                 const std::filesystem::path& override_dir = {});

// Loads templates/<name>.txt and strips the leading `//` comment block.
std::string load_template(std::string_view name,
                          const std::filesystem::path& override_dir = {});

std::vector<std::string> embedded_names();

}  // namespace aptness::data
