#include "hydro/harness/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace hydro::harness {

namespace {

constexpr double kShortGap = 5.0;     // seconds; below this, forward-fill
constexpr double kClipWindow = 300.0;  // trailing despike window, seconds
constexpr double kClipSigma = 5.0;
constexpr double kStdFloor = 1e-12;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    size_t start = field.find_first_not_of(' ');
    out.push_back(start == std::string::npos ? "" : field.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

attack::AttackClass parse_label(const std::string& text) {
  if (text == "0") return attack::AttackClass::None;
  if (text == "1") return attack::AttackClass::Single;
  if (text == "2") return attack::AttackClass::Multi;
  return attack::class_from_name(text);
}

struct BinAccum {
  std::vector<double> sum;
  std::vector<long> count;
  attack::AttackClass label = attack::AttackClass::None;
  bool labeled = false;
};

// fills missing bins in place: gaps shorter than kShortGap seconds between
// known neighbors carry the last value forward, longer gaps interpolate;
// leading/trailing runs extend the nearest known value
void fill_column(std::vector<double>& col) {
  const long n = static_cast<long>(col.size());
  std::vector<long> known;
  for (long i = 0; i < n; ++i)
    if (!std::isnan(col[i])) known.push_back(i);
  if (known.empty()) throw std::invalid_argument("preprocess_ingest: column has no samples");

  for (long i = 0; i < known.front(); ++i) col[i] = col[known.front()];
  for (long i = known.back() + 1; i < n; ++i) col[i] = col[known.back()];
  for (size_t k = 0; k + 1 < known.size(); ++k) {
    const long a = known[k], b = known[k + 1];
    if (b == a + 1) continue;
    const double gap = static_cast<double>(b - a);
    for (long i = a + 1; i < b; ++i) {
      if (gap < kShortGap)
        col[i] = col[a];
      else
        col[i] = col[a] + (col[b] - col[a]) * static_cast<double>(i - a) / gap;
    }
  }
}

// clips each sample to the mean +/- 5 sigma of the preceding 300 s window;
// excluding the sample itself keeps a lone spike from shielding itself, and
// using the pre-clip series keeps one spike from shielding the next
void clip_column(std::vector<double>& col) {
  const long n = static_cast<long>(col.size());
  const long w = static_cast<long>(kClipWindow);
  std::vector<double> pre(n + 1, 0.0), pre2(n + 1, 0.0);
  for (long i = 0; i < n; ++i) {
    pre[i + 1] = pre[i] + col[i];
    pre2[i + 1] = pre2[i] + col[i] * col[i];
  }
  std::vector<double> out(col);
  for (long i = 1; i < n; ++i) {
    const long lo = std::max<long>(0, i - w);
    const long cnt = i - lo;
    if (cnt < 2) continue;
    const double mean = (pre[i] - pre[lo]) / cnt;
    const double var = std::max(0.0, (pre2[i] - pre2[lo]) / cnt - mean * mean);
    const double sd = std::sqrt(var);
    if (sd > kStdFloor)
      out[i] = std::clamp(col[i], mean - kClipSigma * sd, mean + kClipSigma * sd);
  }
  col = std::move(out);
}

}  // namespace

IngestResult preprocess_ingest(std::istream& csv, const CsvSchema& schema,
                               const std::optional<NormStats>& train_stats) {
  if (schema.sensors.empty())
    throw std::invalid_argument("preprocess_ingest: schema names no sensor columns");

  std::string line;
  if (!std::getline(csv, line)) throw std::invalid_argument("preprocess_ingest: empty input");
  const auto header = split_csv_line(line);

  // map every header column to its role; unknown names are an error
  long ts_col = -1, label_col = -1;
  std::vector<long> sensor_col(schema.sensors.size(), -1);
  for (long c = 0; c < static_cast<long>(header.size()); ++c) {
    const std::string& name = header[c];
    if (name == schema.timestamp) {
      ts_col = c;
      continue;
    }
    if (!schema.label.empty() && name == schema.label) {
      label_col = c;
      continue;
    }
    auto it = std::find(schema.sensors.begin(), schema.sensors.end(), name);
    if (it == schema.sensors.end())
      throw std::invalid_argument("preprocess_ingest: unknown column '" + name + "'");
    sensor_col[static_cast<size_t>(it - schema.sensors.begin())] = c;
  }
  if (ts_col < 0)
    throw std::invalid_argument("preprocess_ingest: timestamp column '" + schema.timestamp +
                                "' missing");
  if (!schema.label.empty() && label_col < 0)
    throw std::invalid_argument("preprocess_ingest: label column '" + schema.label + "' missing");
  for (size_t s = 0; s < schema.sensors.size(); ++s)
    if (sensor_col[s] < 0)
      throw std::invalid_argument("preprocess_ingest: sensor column '" + schema.sensors[s] +
                                  "' missing");

  // accumulate 1 Hz mean bins; timestamps must not run backwards
  std::map<long, BinAccum> bins;
  const size_t d = schema.sensors.size();
  double prev_t = -std::numeric_limits<double>::infinity();
  while (std::getline(csv, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::invalid_argument("preprocess_ingest: row width does not match header");
    const double t = std::stod(fields[static_cast<size_t>(ts_col)]);
    if (t < prev_t) throw std::invalid_argument("preprocess_ingest: timestamps run backwards");
    prev_t = t;

    auto& bin = bins[static_cast<long>(std::floor(t))];
    if (bin.sum.empty()) {
      bin.sum.assign(d, 0.0);
      bin.count.assign(d, 0);
    }
    for (size_t s = 0; s < d; ++s) {
      const std::string& cell = fields[static_cast<size_t>(sensor_col[s])];
      if (cell.empty()) continue;
      bin.sum[s] += std::stod(cell);
      bin.count[s] += 1;
    }
    if (label_col >= 0) {
      const std::string& cell = fields[static_cast<size_t>(label_col)];
      if (!cell.empty()) {
        bin.label = parse_label(cell);
        bin.labeled = true;
      }
    }
  }
  if (bins.empty()) throw std::invalid_argument("preprocess_ingest: no data rows");

  const long t0 = bins.begin()->first;
  const long t1 = bins.rbegin()->first;
  const long n = t1 - t0 + 1;

  std::vector<std::vector<double>> cols(d, std::vector<double>(static_cast<size_t>(n),
                                                              std::numeric_limits<double>::quiet_NaN()));
  std::vector<attack::AttackClass> labels;
  std::vector<char> label_known;
  if (label_col >= 0) {
    labels.assign(static_cast<size_t>(n), attack::AttackClass::None);
    label_known.assign(static_cast<size_t>(n), 0);
  }
  for (const auto& [bin_t, acc] : bins) {
    const size_t row = static_cast<size_t>(bin_t - t0);
    for (size_t s = 0; s < d; ++s)
      if (acc.count[s] > 0) cols[s][row] = acc.sum[s] / acc.count[s];
    if (label_col >= 0 && acc.labeled) {
      labels[row] = acc.label;
      label_known[row] = 1;
    }
  }

  for (auto& col : cols) {
    fill_column(col);
    clip_column(col);
  }
  if (label_col >= 0) {
    // labels carry forward over gaps; a leading gap inherits the first label
    long first = -1;
    for (long i = 0; i < n; ++i)
      if (label_known[static_cast<size_t>(i)]) {
        first = i;
        break;
      }
    if (first >= 0) {
      for (long i = 0; i < first; ++i) labels[static_cast<size_t>(i)] = labels[static_cast<size_t>(first)];
      for (long i = first + 1; i < n; ++i)
        if (!label_known[static_cast<size_t>(i)])
          labels[static_cast<size_t>(i)] = labels[static_cast<size_t>(i - 1)];
    }
  }

  IngestResult out;
  out.times.resize(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) out.times[static_cast<size_t>(i)] = static_cast<double>(t0 + i);
  out.labels = std::move(labels);

  if (train_stats) {
    if (train_stats->columns != schema.sensors)
      throw std::invalid_argument("preprocess_ingest: stats columns do not match the schema");
    if (train_stats->mean.size() != static_cast<Eigen::Index>(d) ||
        train_stats->std_dev.size() != static_cast<Eigen::Index>(d))
      throw std::invalid_argument("preprocess_ingest: stats dimensions do not match the schema");
    out.stats = *train_stats;
  } else {
    out.stats.columns = schema.sensors;
    out.stats.mean = Vector::Zero(static_cast<Eigen::Index>(d));
    out.stats.std_dev = Vector::Ones(static_cast<Eigen::Index>(d));
    out.stats.provenance = "train";
    for (size_t s = 0; s < d; ++s) {
      double m = 0.0;
      for (double v : cols[s]) m += v;
      m /= static_cast<double>(n);
      double var = 0.0;
      for (double v : cols[s]) var += (v - m) * (v - m);
      var /= static_cast<double>(n);
      out.stats.mean[static_cast<Eigen::Index>(s)] = m;
      out.stats.std_dev[static_cast<Eigen::Index>(s)] = std::max(std::sqrt(var), kStdFloor);
    }
  }

  out.values.resize(n, static_cast<Eigen::Index>(d));
  for (size_t s = 0; s < d; ++s) {
    const double m = out.stats.mean[static_cast<Eigen::Index>(s)];
    const double sd = out.stats.std_dev[static_cast<Eigen::Index>(s)];
    for (long i = 0; i < n; ++i)
      out.values(i, static_cast<Eigen::Index>(s)) = (cols[s][static_cast<size_t>(i)] - m) / sd;
  }
  return out;
}

IngestResult preprocess_ingest(const std::string& csv_path, const CsvSchema& schema,
                               const std::optional<NormStats>& train_stats) {
  std::ifstream in(csv_path);
  if (!in) throw std::invalid_argument("preprocess_ingest: cannot open '" + csv_path + "'");
  return preprocess_ingest(in, schema, train_stats);
}

}  // namespace hydro::harness
