#include "stripereid/cli/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace stripereid::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

std::string flag_name(const std::string& key) {
  std::string f = "--" + key;
  std::replace(f.begin(), f.end(), '_', '-');
  return f;
}

RunConfig::RunConfig(std::vector<Setting> schema) : schema_(std::move(schema)) {
  for (const auto& s : schema_) {
    if (!s.required) values_[s.key] = s.default_value;
  }
}

const Setting& RunConfig::find(const std::string& key) const {
  for (const auto& s : schema_) {
    if (s.key == key) return s;
  }
  throw ConfigError("unknown setting '" + key + "'");
}

void RunConfig::merge_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    try {
      set(key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& s = find(key);
  if (s.is_flag && value != "true" && value != "false") {
    throw ConfigError("setting '" + key + "' must be true or false, got '" + value + "'");
  }
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const {
  find(key);
  const auto it = values_.find(key);
  return it != values_.end() && !it->second.empty();
}

std::string RunConfig::get(const std::string& key) const {
  find(key);
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required setting '" + key + "' (" + flag_name(key) + ")");
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const auto v = get(key);
  std::size_t used = 0;
  std::int64_t out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) throw ConfigError("setting '" + key + "' must be an integer, got '" + v + "'");
  return out;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const auto v = get_int(key);
  if (v < 0) throw ConfigError("setting '" + key + "' must be >= 0");
  return static_cast<std::uint64_t>(v);
}

double RunConfig::get_double(const std::string& key) const {
  const auto v = get(key);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) throw ConfigError("setting '" + key + "' must be a number, got '" + v + "'");
  return out;
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto v = get(key);
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("setting '" + key + "' must be true or false, got '" + v + "'");
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get(key))) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigError("setting '" + key + "' has a non-numeric entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::uint64_t> RunConfig::get_u64_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(get(key))) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.front() == '-') {
      throw ConfigError("setting '" + key + "' has an invalid entry '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

void RunConfig::require_complete() const {
  for (const auto& s : schema_) {
    if (s.required && !has(s.key)) throw ConfigError("missing required setting '" + s.key + "' (" + flag_name(s.key) + ")");
  }
}

std::string RunConfig::echo(const std::string& command) const {
  std::string out = "# resolved configuration for: stripereid " + command + "\n";
  for (const auto& s : schema_) {
    const auto it = values_.find(s.key);
    out += s.key + " = " + (it == values_.end() ? std::string() : it->second) + "\n";
  }
  return out;
}

}  // namespace stripereid::cli
