#include "esc/trace.hpp"

#include <algorithm>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

namespace esc {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

bool is_angle_column(std::size_t i) {
  return std::find(SimTrace::kAngleColumns.begin(), SimTrace::kAngleColumns.end(), i) !=
         SimTrace::kAngleColumns.end();
}

}  // namespace

void export_trace(const SimTrace& trace, const std::filesystem::path& path, bool angles_in_degrees) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_trace: cannot open " + path.string());
  for (std::size_t i = 0; i < SimTrace::kColumns; ++i) {
    if (i) out << ',';
    out << SimTrace::kColumnNames[i];
    if (angles_in_degrees && is_angle_column(i)) out << "_deg";
  }
  out << '\n';
  std::string line;
  for (std::size_t row = 0; row < trace.size(); ++row) {
    line.clear();
    for (std::size_t i = 0; i < SimTrace::kColumns; ++i) {
      double x = trace.columns[i][row];
      if (angles_in_degrees && is_angle_column(i)) x *= kRadToDeg;
      if (i) line += ',';
      line += fmt::format("{:.17g}", x);
    }
    out << line << '\n';
  }
}

SimTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_trace: cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::array<bool, SimTrace::kColumns> degrees{};
  {
    std::stringstream hs(header);
    std::string name;
    std::size_t i = 0;
    while (std::getline(hs, name, ',')) {
      if (i >= SimTrace::kColumns) throw std::runtime_error("load_trace: too many columns");
      std::string base(SimTrace::kColumnNames[i]);
      if (name == base + "_deg" && is_angle_column(i)) {
        degrees[i] = true;
      } else if (name != base) {
        throw std::runtime_error("load_trace: column " + std::to_string(i) + " is '" + name + "', expected '" +
                                 base + "'");
      }
      ++i;
    }
    if (i != SimTrace::kColumns) throw std::runtime_error("load_trace: expected 19 columns");
  }
  SimTrace trace;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<double, SimTrace::kColumns> row{};
    const char* p = line.c_str();
    for (std::size_t i = 0; i < SimTrace::kColumns; ++i) {
      char* end = nullptr;
      row[i] = std::strtod(p, &end);
      if (end == p) throw std::runtime_error("load_trace: malformed row " + std::to_string(trace.size() + 1));
      if (degrees[i]) row[i] /= kRadToDeg;
      p = (*end == ',') ? end + 1 : end;
    }
    trace.push_row(row);
  }
  if (trace.size() >= 2) trace.dt = trace.t()[1] - trace.t()[0];
  return trace;
}

}  // namespace esc
