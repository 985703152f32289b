#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sase/tensor.hpp"

namespace sase {

struct CostEntry {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  Shape output_shape;
};

// Ordered per-layer parameter and FLOP counts. Totals are always the sum of
// the entries.
class CostReport {
 public:
  void add(CostEntry entry) { entries_.push_back(std::move(entry)); }
  void add(std::string name, std::uint64_t params, std::uint64_t flops, Shape output_shape) {
    entries_.push_back({std::move(name), params, flops, std::move(output_shape)});
  }
  void append(const CostReport& other);

  const std::vector<CostEntry>& entries() const { return entries_; }
  std::uint64_t total_params() const;
  std::uint64_t total_flops() const;

  // Sum of entries whose name starts with `prefix`.
  std::uint64_t params_under(const std::string& prefix) const;
  std::uint64_t flops_under(const std::string& prefix) const;

  // Entries whose name contains `needle`.
  CostReport filter(const std::string& needle) const;

  std::string to_json(int indent = 2) const;
  // Columns: layer,params,flops,output_shape
  std::string to_csv() const;

 private:
  std::vector<CostEntry> entries_;
};

// Joins a dotted layer path.
std::string join_name(const std::string& prefix, const std::string& name);

}  // namespace sase
