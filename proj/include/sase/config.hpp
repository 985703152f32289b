#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sase {

// Flat sectioned key=value configuration:
//
//   # comment
//   [train]
//   steps = 500
//   lr = 0.01
//
// Keys are addressed as "section.key"; keys before any section header live
// in the unnamed section and are addressed by their bare name.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>");
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated integers.
  std::vector<std::int64_t> get_int_list(const std::string& key,
                                         const std::vector<std::int64_t>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  // Renders back to the sectioned form, keys sorted.
  std::string to_string() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace sase
