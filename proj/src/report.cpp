#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "avgsde/error.hpp"
#include "avgsde/harness.hpp"

#ifndef AVGSDE_VERSION
#define AVGSDE_VERSION "0.1.0"
#endif

namespace avgsde {

std::string version_string() { return AVGSDE_VERSION; }

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", v);
}

std::string Report::csv_text() const {
  std::string out;
  const auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(csv_header);
  for (const auto& row : csv_rows) line(row);
  return out;
}

std::vector<std::filesystem::path> write_report(const Report& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(fmt::format("cannot create output directory '{}': {}", dir.string(), ec.message()));
  std::vector<std::filesystem::path> written;
  const auto put = [&](const std::string& name, const std::string& contents) {
    const auto path = dir / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(fmt::format("cannot write '{}'", path.string()));
    os << contents;
    written.push_back(path);
  };
  put(report.name + ".csv", report.csv_text());
  put(report.name + "_summary.json", report.summary.dump(2) + "\n");
  for (const auto& [name, contents] : report.attachments) put(name, contents);
  return written;
}

}  // namespace avgsde
