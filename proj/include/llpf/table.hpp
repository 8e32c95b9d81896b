#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace llpf {

// Rows of already-formatted cells under a fixed header.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  // Column index, or columns.size() when absent.
  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    return columns.size();
  }

  bool operator==(const Table&) const = default;
};

}  // namespace llpf
