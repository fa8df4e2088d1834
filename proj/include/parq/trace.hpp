#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace parq {

// Fixed CSV schemas. '.' decimal separator, '\n' line endings, shortest
// round-trip number formatting: reruns of the same seeded config are
// byte-identical and every stored double reads back exactly.
inline constexpr std::string_view kTraceHeader =
    "step,train_loss,eval_metric,objective_gap,quantized_fraction,gamma,eta,inv_slope,"
    "bound_value,q_values";
inline constexpr std::string_view kSummaryHeader =
    "step,n_seeds,train_loss_mean,train_loss_std,eval_metric_mean,eval_metric_std,"
    "objective_gap_mean,objective_gap_std,objective_gap_stderr,quantized_fraction_mean,"
    "quantized_fraction_std,gamma,eta,inv_slope,bound_value,q_max_mean";

struct TraceRecord {
  long step = 0;
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double eval_metric = std::numeric_limits<double>::quiet_NaN();
  double objective_gap = std::numeric_limits<double>::quiet_NaN();
  double quantized_fraction = std::numeric_limits<double>::quiet_NaN();
  double gamma = 0.0;
  double eta = 0.0;
  double inv_slope = std::numeric_limits<double>::quiet_NaN();
  double bound_value = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> q_values;  // positive grid values of the tracked group
};

struct ExperimentTrace {
  std::uint64_t seed = 0;
  bool aborted = false;  // a non-finite loss terminated the loop early
  std::vector<TraceRecord> records;
};

struct SummaryRow {
  long step = 0;
  int n_seeds = 0;
  double train_loss_mean = 0.0, train_loss_std = 0.0;
  double eval_metric_mean = 0.0, eval_metric_std = 0.0;
  double objective_gap_mean = 0.0, objective_gap_std = 0.0, objective_gap_stderr = 0.0;
  double quantized_fraction_mean = 0.0, quantized_fraction_std = 0.0;
  double gamma = 0.0, eta = 0.0, inv_slope = 0.0, bound_value = 0.0;
  double q_max_mean = 0.0;
};

namespace detail {

inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc{})
    throw std::runtime_error("csv: malformed number '" + std::string(s) + "'");
  return x;
}

inline long parse_long(std::string_view s) {
  long x = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc{})
    throw std::runtime_error("csv: malformed integer '" + std::string(s) + "'");
  return x;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

// Sample statistics over the seed axis; a single seed reports zero spread.
struct MeanStd {
  double mean = 0.0, std = 0.0, stderr_ = 0.0;
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd r;
  const double n = double(xs.size());
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / (n - 1.0));
    r.stderr_ = r.std / std::sqrt(n);
  }
  return r;
}

}  // namespace detail

inline void write_trace_csv(std::ostream& os, const ExperimentTrace& trace) {
  os << kTraceHeader << '\n';
  for (const TraceRecord& r : trace.records) {
    os << r.step << ',' << detail::format_double(r.train_loss) << ','
       << detail::format_double(r.eval_metric) << ','
       << detail::format_double(r.objective_gap) << ','
       << detail::format_double(r.quantized_fraction) << ','
       << detail::format_double(r.gamma) << ',' << detail::format_double(r.eta) << ','
       << detail::format_double(r.inv_slope) << ','
       << detail::format_double(r.bound_value) << ',';
    for (std::size_t i = 0; i < r.q_values.size(); ++i) {
      if (i) os << ';';
      os << detail::format_double(r.q_values[i]);
    }
    os << '\n';
  }
}

inline void write_trace_csv(const std::filesystem::path& path, const ExperimentTrace& trace) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  write_trace_csv(f, trace);
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline ExperimentTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != kTraceHeader)
    throw std::runtime_error("not a trace csv: " + path.string());
  ExperimentTrace trace;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto cols = detail::split(line, ',');
    if (cols.size() != 10) throw std::runtime_error("trace csv: bad column count");
    TraceRecord r;
    r.step = detail::parse_long(cols[0]);
    r.train_loss = detail::parse_double(cols[1]);
    r.eval_metric = detail::parse_double(cols[2]);
    r.objective_gap = detail::parse_double(cols[3]);
    r.quantized_fraction = detail::parse_double(cols[4]);
    r.gamma = detail::parse_double(cols[5]);
    r.eta = detail::parse_double(cols[6]);
    r.inv_slope = detail::parse_double(cols[7]);
    r.bound_value = detail::parse_double(cols[8]);
    if (!cols[9].empty())
      for (const auto q : detail::split(cols[9], ';')) r.q_values.push_back(detail::parse_double(q));
    trace.records.push_back(std::move(r));
  }
  return trace;
}

// Per-step mean/spread across seeds. Columns identical across seeds by
// construction (gamma, eta, inv_slope, bound_value) are copied from the first
// trace. Aborted traces may be shorter; the summary covers the common prefix.
inline std::vector<SummaryRow> summarize(std::span<const ExperimentTrace> traces) {
  if (traces.empty()) return {};
  std::size_t common = traces[0].records.size();
  for (const auto& t : traces) common = std::min(common, t.records.size());
  std::vector<SummaryRow> rows;
  rows.reserve(common);
  std::vector<double> buf(traces.size());
  const auto gather = [&](std::size_t rec, auto&& get) {
    for (std::size_t s = 0; s < traces.size(); ++s) buf[s] = get(traces[s].records[rec]);
    return detail::mean_std(buf);
  };
  for (std::size_t rec = 0; rec < common; ++rec) {
    const TraceRecord& first = traces[0].records[rec];
    for (const auto& t : traces)
      if (t.records[rec].step != first.step)
        throw std::runtime_error("summarize: traces disagree on logged steps");
    SummaryRow row;
    row.step = first.step;
    row.n_seeds = int(traces.size());
    auto ms = gather(rec, [](const TraceRecord& r) { return r.train_loss; });
    row.train_loss_mean = ms.mean;
    row.train_loss_std = ms.std;
    ms = gather(rec, [](const TraceRecord& r) { return r.eval_metric; });
    row.eval_metric_mean = ms.mean;
    row.eval_metric_std = ms.std;
    ms = gather(rec, [](const TraceRecord& r) { return r.objective_gap; });
    row.objective_gap_mean = ms.mean;
    row.objective_gap_std = ms.std;
    row.objective_gap_stderr = ms.stderr_;
    ms = gather(rec, [](const TraceRecord& r) { return r.quantized_fraction; });
    row.quantized_fraction_mean = ms.mean;
    row.quantized_fraction_std = ms.std;
    row.gamma = first.gamma;
    row.eta = first.eta;
    row.inv_slope = first.inv_slope;
    row.bound_value = first.bound_value;
    ms = gather(rec, [](const TraceRecord& r) {
      if (r.q_values.empty()) return std::numeric_limits<double>::quiet_NaN();
      double qmax = 0.0;
      for (double q : r.q_values) qmax = std::max(qmax, std::fabs(q));
      return qmax;
    });
    row.q_max_mean = ms.mean;
    rows.push_back(row);
  }
  return rows;
}

inline void write_summary_csv(std::ostream& os, std::span<const SummaryRow> rows) {
  os << kSummaryHeader << '\n';
  for (const SummaryRow& r : rows) {
    os << r.step << ',' << r.n_seeds << ',' << detail::format_double(r.train_loss_mean)
       << ',' << detail::format_double(r.train_loss_std) << ','
       << detail::format_double(r.eval_metric_mean) << ','
       << detail::format_double(r.eval_metric_std) << ','
       << detail::format_double(r.objective_gap_mean) << ','
       << detail::format_double(r.objective_gap_std) << ','
       << detail::format_double(r.objective_gap_stderr) << ','
       << detail::format_double(r.quantized_fraction_mean) << ','
       << detail::format_double(r.quantized_fraction_std) << ','
       << detail::format_double(r.gamma) << ',' << detail::format_double(r.eta) << ','
       << detail::format_double(r.inv_slope) << ','
       << detail::format_double(r.bound_value) << ','
       << detail::format_double(r.q_max_mean) << '\n';
  }
}

inline void write_summary_csv(const std::filesystem::path& path,
                              std::span<const SummaryRow> rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  write_summary_csv(f, rows);
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != kSummaryHeader)
    throw std::runtime_error("not a summary csv: " + path.string());
  std::vector<SummaryRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto cols = detail::split(line, ',');
    if (cols.size() != 16) throw std::runtime_error("summary csv: bad column count");
    SummaryRow r;
    r.step = detail::parse_long(cols[0]);
    r.n_seeds = int(detail::parse_long(cols[1]));
    r.train_loss_mean = detail::parse_double(cols[2]);
    r.train_loss_std = detail::parse_double(cols[3]);
    r.eval_metric_mean = detail::parse_double(cols[4]);
    r.eval_metric_std = detail::parse_double(cols[5]);
    r.objective_gap_mean = detail::parse_double(cols[6]);
    r.objective_gap_std = detail::parse_double(cols[7]);
    r.objective_gap_stderr = detail::parse_double(cols[8]);
    r.quantized_fraction_mean = detail::parse_double(cols[9]);
    r.quantized_fraction_std = detail::parse_double(cols[10]);
    r.gamma = detail::parse_double(cols[11]);
    r.eta = detail::parse_double(cols[12]);
    r.inv_slope = detail::parse_double(cols[13]);
    r.bound_value = detail::parse_double(cols[14]);
    r.q_max_mean = detail::parse_double(cols[15]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace parq
