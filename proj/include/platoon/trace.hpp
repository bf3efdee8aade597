#pragma once

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "platoon/errors.hpp"

namespace platoon::signals {

// One sample of a recorded vehicle trace. Units: s, m, m, m, m/s, rad, deg,
// rad/s, m/s^2 (x3), m, m. swa is the steering wheel angle (road wheel angle
// times the steering ratio), the only channel recorded in degrees.
struct TraceRecord {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double elev = 0.0;
  double speed = 0.0;
  double heading = 0.0;
  double swa = 0.0;
  double yaw_rate = 0.0;
  double ax = 0.0;
  double ay = 0.0;
  double az = 0.0;
  double len = 0.0;
  double width = 0.0;
};

inline constexpr int kTraceColumns = 13;
inline constexpr const char* kTraceHeader =
    "t, x, y, elev, speed, heading, swa, yaw_rate, ax, ay, az, len, width";

// Samples farther apart than this are treated as a recording drop-out and
// the trace is split there.
inline constexpr double kDefaultMaxGap = 0.3;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline double parse_field(std::string_view field, int line_no, int col) {
  field = trim(field);
  double out = 0.0;
  const auto* begin = field.data();
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc{} || ptr != end) {
    throw FormatError("trace line " + std::to_string(line_no) + " column " +
                      std::to_string(col + 1) + ": cannot parse '" +
                      std::string(field) + "' as a number");
  }
  return out;
}

inline std::array<std::string_view, kTraceColumns> split_row(
    std::string_view line, int line_no) {
  std::array<std::string_view, kTraceColumns> out;
  int n = 0;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    const std::string_view field =
        comma == std::string_view::npos
            ? line.substr(start)
            : line.substr(start, comma - start);
    if (n >= kTraceColumns) {
      throw FormatError("trace line " + std::to_string(line_no) +
                        ": expected " + std::to_string(kTraceColumns) +
                        " columns, got more");
    }
    out[static_cast<std::size_t>(n++)] = field;
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (n != kTraceColumns) {
    throw FormatError("trace line " + std::to_string(line_no) + ": expected " +
                      std::to_string(kTraceColumns) + " columns, got " +
                      std::to_string(n));
  }
  return out;
}

}  // namespace detail

// Parses a whole trace CSV. The header row must carry exactly the canonical
// column names (surrounding whitespace per field is ignored). Time must be
// strictly increasing; gaps are legal and handled by split_on_gaps.
inline std::vector<TraceRecord> parse_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("trace: empty input");
  {
    const auto header = detail::split_row(line, 1);
    const auto expected = detail::split_row(kTraceHeader, 0);
    for (int c = 0; c < kTraceColumns; ++c) {
      if (detail::trim(header[static_cast<std::size_t>(c)]) !=
          detail::trim(expected[static_cast<std::size_t>(c)])) {
        throw FormatError(
            "trace header column " + std::to_string(c + 1) + ": expected '" +
            std::string(detail::trim(expected[static_cast<std::size_t>(c)])) +
            "', got '" +
            std::string(detail::trim(header[static_cast<std::size_t>(c)])) +
            "'");
      }
    }
  }

  std::vector<TraceRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_row(line, line_no);
    TraceRecord r;
    r.t = detail::parse_field(f[0], line_no, 0);
    r.x = detail::parse_field(f[1], line_no, 1);
    r.y = detail::parse_field(f[2], line_no, 2);
    r.elev = detail::parse_field(f[3], line_no, 3);
    r.speed = detail::parse_field(f[4], line_no, 4);
    r.heading = detail::parse_field(f[5], line_no, 5);
    r.swa = detail::parse_field(f[6], line_no, 6);
    r.yaw_rate = detail::parse_field(f[7], line_no, 7);
    r.ax = detail::parse_field(f[8], line_no, 8);
    r.ay = detail::parse_field(f[9], line_no, 9);
    r.az = detail::parse_field(f[10], line_no, 10);
    r.len = detail::parse_field(f[11], line_no, 11);
    r.width = detail::parse_field(f[12], line_no, 12);
    if (!records.empty() && r.t <= records.back().t) {
      throw SchemaError("trace line " + std::to_string(line_no) +
                        ": time must be strictly increasing (" +
                        std::to_string(records.back().t) + " -> " +
                        std::to_string(r.t) + ")");
    }
    records.push_back(r);
  }
  return records;
}

// Splits a record sequence into contiguous segments wherever consecutive
// timestamps differ by more than max_gap seconds.
inline std::vector<std::vector<TraceRecord>> split_on_gaps(
    const std::vector<TraceRecord>& records, double max_gap = kDefaultMaxGap) {
  std::vector<std::vector<TraceRecord>> segments;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i == 0 || records[i].t - records[i - 1].t > max_gap) {
      segments.emplace_back();
    }
    segments.back().push_back(records[i]);
  }
  return segments;
}

// Loads a trace file and returns its gap-free segments.
inline std::vector<std::vector<TraceRecord>> load_trace(
    const std::string& path, double max_gap = kDefaultMaxGap) {
  std::ifstream in(path);
  if (!in) throw FormatError("trace: cannot open '" + path + "'");
  return split_on_gaps(parse_trace_csv(in), max_gap);
}

inline void write_trace_csv(std::ostream& out,
                            const std::vector<TraceRecord>& records) {
  out << kTraceHeader << '\n';
  char buf[512];
  for (const TraceRecord& r : records) {
    std::snprintf(buf, sizeof buf,
                  "%.6f, %.6f, %.6f, %.6f, %.6f, %.6f, %.6f, %.6f, %.6f, "
                  "%.6f, %.6f, %.6f, %.6f\n",
                  r.t, r.x, r.y, r.elev, r.speed, r.heading, r.swa, r.yaw_rate,
                  r.ax, r.ay, r.az, r.len, r.width);
    out << buf;
  }
}

inline void write_trace_csv(const std::string& path,
                            const std::vector<TraceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw FormatError("trace: cannot open '" + path + "' for write");
  write_trace_csv(out, records);
}

}  // namespace platoon::signals
