#include "twnn/config_file.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "twnn/error.hpp"

namespace twnn {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool valid_key(const std::string& key) {
  return !key.empty() && std::all_of(key.begin(), key.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-';
  });
}

}  // namespace

std::vector<ConfigEntry> parse_config(std::istream& in, const std::string& source) {
  std::vector<ConfigEntry> out;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string text = trim(raw);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    const std::string where = source + ":" + std::to_string(line);
    if (eq == std::string::npos) throw Error(ErrorKind::InvalidArgument, where + ": expected `key = value`");
    ConfigEntry e{trim(text.substr(0, eq)), trim(text.substr(eq + 1)), line};
    if (!valid_key(e.key)) throw Error(ErrorKind::InvalidArgument, where + ": bad key '" + e.key + "'");
    if (e.value.empty()) throw Error(ErrorKind::InvalidArgument, where + ": no value for '" + e.key + "'");
    std::replace(e.key.begin(), e.key.end(), '_', '-');
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ConfigEntry> load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  return parse_config(in, path.string());
}

std::vector<std::string> config_arguments(const std::vector<ConfigEntry>& entries) {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back("--" + e.key + "=" + e.value);
  return out;
}

}  // namespace twnn
