#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace stripereid::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Setting {
  std::string key;            // snake_case; the flag is --key with dashes
  std::string default_value;  // empty means "required" when required is set
  std::string help;
  bool is_flag = false;       // boolean switch taking no value on the command line
  bool required = false;
};

/// Command-scoped settings merged from a `key = value` file and flags.
///
/// Every key must be declared in the schema. Later sources override earlier
/// ones, so applying the file first and the flags second makes flags win.
class RunConfig {
 public:
  explicit RunConfig(std::vector<Setting> schema);

  const std::vector<Setting>& schema() const noexcept { return schema_; }

  /// Parses UTF-8 `key = value` lines; `#` starts a comment.
  void merge_text(const std::string& text, const std::string& source = "<config>");
  void merge_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key) const;

  /// Throws if a required setting has no value.
  void require_complete() const;

  /// Every setting in schema order, suitable for merge_text().
  std::string echo(const std::string& command) const;

 private:
  const Setting& find(const std::string& key) const;

  std::vector<Setting> schema_;
  std::map<std::string, std::string> values_;
};

std::string flag_name(const std::string& key);

}  // namespace stripereid::cli
