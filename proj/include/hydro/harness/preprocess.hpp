#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hydro/attack/scenario.hpp"
#include "hydro/nn/tensor.hpp"

namespace hydro::harness {

using nn::Matrix;
using nn::Vector;

// Column layout of a raw telemetry CSV. Every header column must be named
// here (timestamp, a sensor, or the label column); anything else is rejected
// so silent schema drift cannot leak into training data.
struct CsvSchema {
  std::string timestamp = "time";
  std::vector<std::string> sensors;  // value columns, in output order
  std::string label;                 // optional; empty means unlabeled
};

// Per-column normalization statistics. Stats are computed once on the train
// split and carried to validation/test ingests unchanged.
struct NormStats {
  std::vector<std::string> columns;
  Vector mean;
  Vector std_dev;
  std::string provenance = "train";  // where the stats were fitted
};

struct IngestResult {
  std::vector<double> times;  // 1 Hz grid, seconds
  Matrix values;              // rows on the grid, columns = schema.sensors, z-scored
  std::vector<attack::AttackClass> labels;  // empty when the schema has no label column
  NormStats stats;                          // the stats actually applied
};

// Resamples raw telemetry onto a 1 Hz grid (mean within each second), fills
// gaps (forward-fill when the gap between samples is under 5 s, linear
// interpolation otherwise), clips spikes beyond 5 rolling standard deviations
// over a trailing 300 s window, and z-scores each column. When `train_stats`
// is empty the stats are fitted on this data and returned; otherwise the
// supplied stats are applied as-is.
//
// Throws std::invalid_argument on timestamps that run backwards, header
// columns the schema does not name, schema columns missing from the header,
// unparseable labels, or stats whose columns do not match the schema.
IngestResult preprocess_ingest(std::istream& csv, const CsvSchema& schema,
                               const std::optional<NormStats>& train_stats = std::nullopt);
IngestResult preprocess_ingest(const std::string& csv_path, const CsvSchema& schema,
                               const std::optional<NormStats>& train_stats = std::nullopt);

}  // namespace hydro::harness
