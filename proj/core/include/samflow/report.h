#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace samflow {

// Ordered name/value pairs; the order is the serialization order.
struct Report {
  std::vector<std::pair<std::string, double>> fields;

  void add(std::string name, double value) {
    fields.emplace_back(std::move(name), value);
  }
  bool empty() const noexcept { return fields.empty(); }
};

enum class ReportFormat { kCsv, kJson };

// Reals are printed with 9 significant digits.
std::string format_real(double value);

// CSV is long-form: a "name,value" header then one row per field, so an
// empty report is header-only. JSON is one object with the same keys in the
// same order. Throws kNonFinite for non-finite values.
std::string format_report(const Report& report, ReportFormat format);
void write_report(const Report& report, const std::filesystem::path& path,
                  ReportFormat format);

// Picks the format from the extension (.json -> JSON, anything else CSV).
ReportFormat report_format_for(const std::filesystem::path& path);

}  // namespace samflow
