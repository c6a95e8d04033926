#include "samflow/report.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "samflow/types.h"

namespace samflow {

std::string format_real(double value) {
  if (!std::isfinite(value)) {
    throw Error(ErrorKind::kNonFinite, "cannot serialize a non-finite real");
  }
  if (value == 0.0) value = 0.0;  // drop the sign of -0
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return buf;
}

std::string format_report(const Report& report, ReportFormat format) {
  std::string out;
  if (format == ReportFormat::kCsv) {
    out = "name,value\n";
    for (const auto& [name, value] : report.fields) {
      out += name;
      out += ',';
      out += format_real(value);
      out += '\n';
    }
    return out;
  }
  out = "{";
  bool first = true;
  for (const auto& [name, value] : report.fields) {
    out += first ? "\n  " : ",\n  ";
    first = false;
    out += nlohmann::json(name).dump();
    out += ": ";
    out += format_real(value);
  }
  out += first ? "}\n" : "\n}\n";
  return out;
}

void write_report(const Report& report, const std::filesystem::path& path,
                  ReportFormat format) {
  const std::string text = format_report(report, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

ReportFormat report_format_for(const std::filesystem::path& path) {
  return path.extension() == ".json" ? ReportFormat::kJson : ReportFormat::kCsv;
}

}  // namespace samflow
