#pragma once

#include <string>

#include "blockprune/pipeline.hpp"

namespace blockprune {

inline constexpr int kReportSchemaVersion = 1;

struct ReportOptions {
  /// Wall times differ between runs; leave them out for byte-identical reports.
  bool include_timings = true;
};

struct ReportTotals {
  std::size_t cells = 0;
  std::size_t pruned = 0;
  std::size_t zeros = 0;
  double loss_before = 0.0;
  double loss_after = 0.0;
  double seconds = 0.0;
  double sparsity() const { return cells == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(cells); }
};

ReportTotals report_totals(const PruneReport& report);

/// JSON document with a fixed key order: schema tag, config echo, per-layer
/// records, totals.
std::string emit_report(const PruneReport& report, const ReportOptions& options = {});
/// One header line plus one line per layer.
std::string emit_report_csv(const PruneReport& report, const ReportOptions& options = {});

/// Checks that a report document has the expected schema and that its totals
/// are the sums of its layers. Throws DataError describing the first problem.
void validate_report(const std::string& json_text);

/// Human-readable table of a report document.
std::string format_report(const std::string& json_text);

}  // namespace blockprune
