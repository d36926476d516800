#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string_view>
#include <vector>

namespace esc {

/// Uniformly sampled record of every loop signal.  Channel 0 is speed,
/// channel 1 is sideslip (radians in memory).
struct SimTrace {
  static constexpr std::size_t kColumns = 19;
  static constexpr std::array<std::string_view, kColumns> kColumnNames = {
      "t",   "rhat_v", "rhat_beta", "r_v",    "r_beta", "v",      "beta",    "y",      "q_v",    "q_beta",
      "m_v", "m_beta", "g_v",       "g_beta", "eta_v",  "eta_beta", "p_e", "wind_x", "wind_y"};
  /// Columns that carry sideslip angles (converted to degrees on export).
  static constexpr std::array<std::size_t, 3> kAngleColumns = {2, 4, 6};

  std::array<std::vector<double>, kColumns> columns;
  double dt = 0.0;

  [[nodiscard]] std::size_t size() const { return columns[0].size(); }
  void reserve(std::size_t n) {
    for (auto& c : columns) c.reserve(n);
  }
  void push_row(const std::array<double, kColumns>& row) {
    for (std::size_t i = 0; i < kColumns; ++i) columns[i].push_back(row[i]);
  }
  [[nodiscard]] const std::vector<double>& col(std::size_t i) const { return columns[i]; }
  [[nodiscard]] const std::vector<double>& t() const { return columns[0]; }
  [[nodiscard]] const std::vector<double>& rhat(std::size_t ch) const { return columns[1 + ch]; }
  [[nodiscard]] const std::vector<double>& r(std::size_t ch) const { return columns[3 + ch]; }
  [[nodiscard]] const std::vector<double>& g(std::size_t ch) const { return columns[12 + ch]; }
  [[nodiscard]] const std::vector<double>& q(std::size_t ch) const { return columns[8 + ch]; }
  [[nodiscard]] const std::vector<double>& m(std::size_t ch) const { return columns[10 + ch]; }
  [[nodiscard]] const std::vector<double>& y() const { return columns[7]; }
  [[nodiscard]] const std::vector<double>& p_e() const { return columns[16]; }

  bool operator==(const SimTrace&) const = default;
};

/// Writes the trace as CSV in the fixed column order with 17 significant
/// digits.  With `angles_in_degrees` the sideslip columns are converted and
/// their header names gain a `_deg` suffix.
void export_trace(const SimTrace& trace, const std::filesystem::path& path, bool angles_in_degrees);
/// Reads a CSV written by export_trace; `_deg` columns are converted back.
SimTrace load_trace(const std::filesystem::path& path);

}  // namespace esc
