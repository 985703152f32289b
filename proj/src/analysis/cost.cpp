#include "sase/cost.hpp"

#include <sstream>

#include <json.hpp>

namespace sase {

void CostReport::append(const CostReport& other) {
  entries_.insert(entries_.end(), other.entries_.begin(), other.entries_.end());
}

std::uint64_t CostReport::total_params() const {
  std::uint64_t total = 0;
  for (const auto& e : entries_) total += e.params;
  return total;
}

std::uint64_t CostReport::total_flops() const {
  std::uint64_t total = 0;
  for (const auto& e : entries_) total += e.flops;
  return total;
}

std::uint64_t CostReport::params_under(const std::string& prefix) const {
  std::uint64_t total = 0;
  for (const auto& e : entries_) {
    if (e.name.starts_with(prefix)) total += e.params;
  }
  return total;
}

std::uint64_t CostReport::flops_under(const std::string& prefix) const {
  std::uint64_t total = 0;
  for (const auto& e : entries_) {
    if (e.name.starts_with(prefix)) total += e.flops;
  }
  return total;
}

CostReport CostReport::filter(const std::string& needle) const {
  CostReport out;
  for (const auto& e : entries_) {
    if (e.name.find(needle) != std::string::npos) out.add(e);
  }
  return out;
}

std::string CostReport::to_json(int indent) const {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& e : entries_) {
    nlohmann::ordered_json row;
    row["name"] = e.name;
    row["params"] = e.params;
    row["flops"] = e.flops;
    row["output_shape"] = e.output_shape.dims();
    layers.push_back(std::move(row));
  }
  nlohmann::ordered_json doc;
  doc["layers"] = std::move(layers);
  doc["total_params"] = total_params();
  doc["total_flops"] = total_flops();
  return doc.dump(indent);
}

std::string CostReport::to_csv() const {
  std::ostringstream os;
  os << "layer,params,flops,output_shape\n";
  for (const auto& e : entries_) {
    os << e.name << ',' << e.params << ',' << e.flops << ',';
    const auto& d = e.output_shape.dims();
    for (std::size_t i = 0; i < d.size(); ++i) os << (i ? "x" : "") << d[i];
    os << '\n';
  }
  return os.str();
}

std::string join_name(const std::string& prefix, const std::string& name) {
  if (prefix.empty()) return name;
  if (name.empty()) return prefix;
  return prefix + "." + name;
}

}  // namespace sase
