#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "stripereid/tensor.hpp"

namespace stripereid {

/// Named-array container persisted as
///
///     stripereid-checkpoint v1
///     <name> <d0>x<d1>x... <f64|u64> <byte offset>
///     ...
///     <blank line>
///     <little-endian payload, entries in header order>
///
/// Offsets are relative to the first payload byte. Names may not contain
/// whitespace.
class Checkpoint {
 public:
  static constexpr const char* kMagic = "stripereid-checkpoint";
  static constexpr int kVersion = 1;

  void put(const std::string& name, const Tensor& tensor);
  void put_u64(const std::string& name, std::vector<std::uint64_t> values);
  void put_u64(const std::string& name, std::uint64_t value) { put_u64(name, std::vector<std::uint64_t>{value}); }

  bool contains(const std::string& name) const;
  Tensor tensor(const std::string& name) const;
  /// Copies a stored f64 entry into `target`, which must have the same shape.
  void load_into(const std::string& name, Tensor& target) const;
  const std::vector<std::uint64_t>& u64(const std::string& name) const;
  std::uint64_t u64_scalar(const std::string& name) const;
  std::vector<std::string> names() const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  bool operator==(const Checkpoint&) const = default;

 private:
  struct Entry {
    std::string name;
    Shape shape;
    std::variant<std::vector<double>, std::vector<std::uint64_t>> data;
    bool operator==(const Entry&) const = default;
  };
  const Entry& find(const std::string& name) const;
  void insert(Entry entry);

  std::vector<Entry> entries_;
};

}  // namespace stripereid
