#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace lowres {

/// Per-stage accounting: how many items came in, how many left, and how many
/// each rule removed (in rule application order).
struct StageReport {
  std::string stage;
  std::size_t input = 0;
  std::size_t output = 0;
  std::vector<std::pair<std::string, std::size_t>> removed;

  std::size_t removed_by(const std::string& rule) const {
    for (const auto& [name, n] : removed)
      if (name == rule) return n;
    return 0;
  }

  std::size_t total_removed() const {
    std::size_t n = 0;
    for (const auto& r : removed) n += r.second;
    return n;
  }
};

/// Structured text block: one `key value` line per field, rules indented.
inline void print_report(std::ostream& os, const StageReport& r) {
  os << "[" << r.stage << "]\n";
  os << "input " << r.input << "\n";
  for (const auto& [rule, n] : r.removed) os << "  removed." << rule << " " << n << "\n";
  os << "output " << r.output << "\n";
}

}  // namespace lowres
