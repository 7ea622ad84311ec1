#include "stripereid/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stripereid {

namespace {

void write_le64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

std::uint64_t read_le64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return v;
}

std::string shape_token(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

Shape parse_shape_token(const std::string& token) {
  Shape shape;
  std::stringstream ss(token);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    if (part.empty() || !std::all_of(part.begin(), part.end(), ::isdigit)) {
      throw std::runtime_error("checkpoint: malformed shape '" + token + "'");
    }
    shape.push_back(std::stoll(part));
  }
  if (shape.empty()) throw std::runtime_error("checkpoint: empty shape");
  return shape;
}

}  // namespace

void Checkpoint::insert(Entry entry) {
  if (entry.name.empty() || entry.name.find_first_of(" \t\r\n") != std::string::npos) {
    throw std::invalid_argument("checkpoint: invalid entry name '" + entry.name + "'");
  }
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == entry.name; });
  if (it != entries_.end()) {
    *it = std::move(entry);
  } else {
    entries_.push_back(std::move(entry));
  }
}

void Checkpoint::put(const std::string& name, const Tensor& tensor) {
  const auto v = tensor.values();
  insert(Entry{name, tensor.shape(), std::vector<double>(v.begin(), v.end())});
}

void Checkpoint::put_u64(const std::string& name, std::vector<std::uint64_t> values) {
  if (values.empty()) throw std::invalid_argument("checkpoint: empty u64 entry '" + name + "'");
  const auto n = static_cast<std::int64_t>(values.size());
  insert(Entry{name, Shape{n}, std::move(values)});
}

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

const Checkpoint::Entry& Checkpoint::find(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
  if (it == entries_.end()) throw std::runtime_error("checkpoint: missing entry '" + name + "'");
  return *it;
}

Tensor Checkpoint::tensor(const std::string& name) const {
  const auto& e = find(name);
  const auto* values = std::get_if<std::vector<double>>(&e.data);
  if (values == nullptr) throw std::runtime_error("checkpoint: entry '" + name + "' is not f64");
  return Tensor(e.shape, *values);
}

void Checkpoint::load_into(const std::string& name, Tensor& target) const {
  const auto& e = find(name);
  const auto* values = std::get_if<std::vector<double>>(&e.data);
  if (values == nullptr) throw std::runtime_error("checkpoint: entry '" + name + "' is not f64");
  if (e.shape != target.shape()) {
    throw std::runtime_error("checkpoint: entry '" + name + "' has shape " + shape_to_string(e.shape) +
                             ", expected " + shape_to_string(target.shape()));
  }
  std::copy(values->begin(), values->end(), target.mutable_values().begin());
}

const std::vector<std::uint64_t>& Checkpoint::u64(const std::string& name) const {
  const auto& e = find(name);
  const auto* values = std::get_if<std::vector<std::uint64_t>>(&e.data);
  if (values == nullptr) throw std::runtime_error("checkpoint: entry '" + name + "' is not u64");
  return *values;
}

std::uint64_t Checkpoint::u64_scalar(const std::string& name) const {
  const auto& v = u64(name);
  if (v.size() != 1) throw std::runtime_error("checkpoint: entry '" + name + "' is not a scalar");
  return v[0];
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::string header = std::string(kMagic) + " v" + std::to_string(kVersion) + "\n";
  std::string payload;
  for (const auto& e : entries_) {
    const bool is_f64 = std::holds_alternative<std::vector<double>>(e.data);
    header += e.name + " " + shape_token(e.shape) + (is_f64 ? " f64 " : " u64 ") + std::to_string(payload.size()) + "\n";
    if (is_f64) {
      for (const double v : std::get<std::vector<double>>(e.data)) write_le64(payload, std::bit_cast<std::uint64_t>(v));
    } else {
      for (const auto v : std::get<std::vector<std::uint64_t>>(e.data)) write_le64(payload, v);
    }
  }
  header += "\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path.string() + "' for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for '" + path.string() + "'");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  const std::string expected = std::string(kMagic) + " v" + std::to_string(kVersion);
  if (line != expected) throw std::runtime_error("checkpoint: bad header '" + line + "' in " + path.string());

  struct Pending {
    std::string name;
    Shape shape;
    bool f64;
    std::uint64_t offset;
  };
  std::vector<Pending> pending;
  while (std::getline(in, line) && !line.empty()) {
    std::istringstream fields(line);
    Pending p;
    std::string shape, dtype;
    if (!(fields >> p.name >> shape >> dtype >> p.offset) || (dtype != "f64" && dtype != "u64")) {
      throw std::runtime_error("checkpoint: malformed header line '" + line + "'");
    }
    p.shape = parse_shape_token(shape);
    p.f64 = dtype == "f64";
    pending.push_back(std::move(p));
  }
  const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());

  Checkpoint ckpt;
  for (const auto& p : pending) {
    const auto count = static_cast<std::uint64_t>(shape_numel(p.shape));
    if (p.offset + 8 * count > payload.size()) throw std::runtime_error("checkpoint: truncated payload for '" + p.name + "'");
    if (p.f64) {
      std::vector<double> v(count);
      for (std::uint64_t i = 0; i < count; ++i) v[i] = std::bit_cast<double>(read_le64(bytes + p.offset + 8 * i));
      ckpt.insert(Entry{p.name, p.shape, std::move(v)});
    } else {
      std::vector<std::uint64_t> v(count);
      for (std::uint64_t i = 0; i < count; ++i) v[i] = read_le64(bytes + p.offset + 8 * i);
      ckpt.insert(Entry{p.name, p.shape, std::move(v)});
    }
  }
  return ckpt;
}

}  // namespace stripereid
