#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mcgt/common.hpp"
#include "mcgt/solver.hpp"

namespace mcgt {

inline constexpr const char* kTraceColumns =
    "k,e_opt,e_cons,e_track,raw_consensus,mapping_norm";

namespace detail {

inline std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

/// Schema: header `k,e_opt,e_cons,e_track,raw_consensus,mapping_norm,
/// x_mean_0,...,x_mean_{q-1}`, one row per recorded iteration. e_opt is
/// `nan` when the run had no reference solution.
inline void write_trace_csv(std::ostream& os, const IterateTrace& trace) {
  const Eigen::Index q = trace.empty() ? 0 : trace.front().x_mean.size();
  os << kTraceColumns;
  for (Eigen::Index j = 0; j < q; ++j) os << ",x_mean_" << j;
  os << "\n";
  for (const TraceRow& r : trace) {
    os << r.k << "," << detail::fmt_double(r.e_opt) << ","
       << detail::fmt_double(r.e_cons) << "," << detail::fmt_double(r.e_track)
       << "," << detail::fmt_double(r.raw_consensus) << ","
       << detail::fmt_double(r.mapping_norm);
    for (Eigen::Index j = 0; j < r.x_mean.size(); ++j)
      os << "," << detail::fmt_double(r.x_mean[j]);
    os << "\n";
  }
}

inline IterateTrace read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line))
    throw ValidationError("trace: empty file");
  {
    std::string expect = kTraceColumns;
    if (line.rfind(expect, 0) != 0)
      throw ValidationError("trace: unrecognized header");
  }
  long q = std::count(line.begin(), line.end(), ',') - 5;
  if (q < 0) throw ValidationError("trace: malformed header");

  IterateTrace trace;
  long line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> fields;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t used = 0;
        fields.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ValidationError("trace: bad value `" + tok + "` on line " +
                              std::to_string(line_no));
      }
    }
    if (static_cast<long>(fields.size()) != 6 + q)
      throw ValidationError("trace: wrong field count on line " +
                            std::to_string(line_no));
    TraceRow r;
    r.k = static_cast<long>(fields[0]);
    r.e_opt = fields[1];
    r.e_cons = fields[2];
    r.e_track = fields[3];
    r.raw_consensus = fields[4];
    r.mapping_norm = fields[5];
    r.x_mean.resize(q);
    for (long j = 0; j < q; ++j) r.x_mean[j] = fields[6 + j];
    trace.push_back(std::move(r));
  }
  return trace;
}

inline void write_trace_csv_file(const std::string& path,
                                 const IterateTrace& trace) {
  std::ofstream os(path);
  if (!os) throw ValidationError("trace: cannot open " + path);
  write_trace_csv(os, trace);
}

inline IterateTrace read_trace_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("trace: cannot open " + path);
  return read_trace_csv(is);
}

}  // namespace mcgt
