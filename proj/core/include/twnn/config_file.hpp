#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <utility>
#include <vector>

namespace twnn {

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

/// Flat `key = value` lines. Blank lines and `#` comments are skipped; keys
/// may use `-` or `_`. Throws InvalidArgument on a malformed line.
std::vector<ConfigEntry> parse_config(std::istream& in, const std::string& source = "<config>");
std::vector<ConfigEntry> load_config(const std::filesystem::path& path);

/// `--key=value` arguments for each entry, keys normalized to `-` spelling.
std::vector<std::string> config_arguments(const std::vector<ConfigEntry>& entries);

}  // namespace twnn
