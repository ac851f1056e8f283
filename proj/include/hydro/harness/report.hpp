#pragma once

#include <string>

#include "hydro/harness/metrics.hpp"

namespace hydro::harness {

// Stable serialization (sorted keys, shortest-round-trip numbers), so two
// reports from identical runs compare byte for byte.
std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);

void save_report(const MetricsReport& report, const std::string& path);
MetricsReport load_report(const std::string& path);

// fixed-width human summary for the CLI
std::string render_table(const MetricsReport& report);

}  // namespace hydro::harness
