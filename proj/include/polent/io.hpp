/**
 * @file io.hpp
 * @brief CSV and JSON formats.
 *
 *   tomography records  qwp_s,hwp_s,qwp_i,hwp_i,counts,duration_s
 *   power sweep         power_mw,rate_hz,rate_err_hz,car,car_err
 *   histogram           delay_s,counts
 *   density matrix      {"basis": ["HH","HV","VH","VV"], "re": 4x4, "im": 4x4}
 *
 * Numbers are written with std::to_chars (shortest round-trip, '.' decimal
 * separator whatever the locale) and parsed with std::from_chars.
 */

#pragma once

#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "polent/metrics.hpp"
#include "polent/photon_stats.hpp"
#include "polent/tomography.hpp"

namespace polent::io {

using nlohmann::json;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Header-checked CSV table; rows keep their 1-based source line numbers.
struct CsvTable {
  std::string source;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;

  double number(std::size_t row, std::size_t col) const {
    const std::string& cell = rows[row][col];
    double v = 0.0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
      throw ParseError(source, lines[row], "not a number: '" + cell + "'");
    }
    return v;
  }

  std::uint64_t count(std::size_t row, std::size_t col) const {
    const std::string& cell = rows[row][col];
    std::uint64_t v = 0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
      throw ParseError(source, lines[row], "not a non-negative integer: '" + cell + "'");
    }
    return v;
  }
};

inline CsvTable parse_csv(std::istream& in, const std::vector<std::string>& header,
                          const std::string& source = "<csv>") {
  CsvTable table;
  table.source = source;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      if (cells != header) {
        std::string expected;
        for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
        throw ParseError(source, lineno, "expected header '" + expected + "'");
      }
      have_header = true;
      continue;
    }
    if (cells.size() != header.size()) {
      throw ParseError(source, lineno,
                       "expected " + std::to_string(header.size()) + " columns, got " +
                           std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
    table.lines.push_back(lineno);
  }
  if (!have_header) throw ParseError(source, lineno, "missing header row");
  return table;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return in;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// --- tomography records ----------------------------------------------------

inline const std::vector<std::string> kRecordHeader{"qwp_s", "hwp_s", "qwp_i",
                                                    "hwp_i", "counts", "duration_s"};

inline std::string records_to_csv(std::span<const TomographyRecord> records) {
  std::string out = "qwp_s,hwp_s,qwp_i,hwp_i,counts,duration_s\n";
  for (const auto& r : records) {
    out += format_double(r.setting.signal_qwp) + "," + format_double(r.setting.signal_hwp) +
           "," + format_double(r.setting.idler_qwp) + "," +
           format_double(r.setting.idler_hwp) + "," + std::to_string(r.counts) + "," +
           format_double(r.duration) + "\n";
  }
  return out;
}

inline std::vector<TomographyRecord> records_from_csv(std::istream& in,
                                                      const std::string& source = "<csv>") {
  const CsvTable t = parse_csv(in, kRecordHeader, source);
  std::vector<TomographyRecord> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    TomographyRecord r;
    r.setting = {t.number(i, 0), t.number(i, 1), t.number(i, 2), t.number(i, 3)};
    r.counts = t.count(i, 4);
    r.duration = t.number(i, 5);
    if (!(r.duration > 0.0)) throw ParseError(source, t.lines[i], "duration_s must be > 0");
    out.push_back(r);
  }
  return out;
}

inline std::vector<TomographyRecord> read_records(const std::string& path) {
  auto in = open_input(path);
  return records_from_csv(in, path);
}

// --- power sweeps and histograms -------------------------------------------

inline const std::vector<std::string> kSweepHeader{"power_mw", "rate_hz", "rate_err_hz", "car",
                                                   "car_err"};

inline std::string sweep_to_csv(std::span<const PowerSweepPoint> points) {
  std::string out = "power_mw,rate_hz,rate_err_hz,car,car_err\n";
  for (const auto& p : points) {
    out += format_double(p.power) + "," + format_double(p.pair_rate) + "," +
           format_double(p.pair_rate_err) + "," + format_double(p.car) + "," +
           format_double(p.car_err) + "\n";
  }
  return out;
}

inline std::vector<PowerSweepPoint> sweep_from_csv(std::istream& in,
                                                   const std::string& source = "<csv>") {
  const CsvTable t = parse_csv(in, kSweepHeader, source);
  std::vector<PowerSweepPoint> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    PowerSweepPoint p{t.number(i, 0), t.number(i, 1), t.number(i, 2), t.number(i, 3),
                      t.number(i, 4)};
    if (!(p.power > 0.0)) throw ParseError(source, t.lines[i], "power_mw must be > 0");
    if (p.pair_rate_err < 0.0 || p.car_err < 0.0) {
      throw ParseError(source, t.lines[i], "errors must be >= 0");
    }
    out.push_back(p);
  }
  return out;
}

inline std::vector<PowerSweepPoint> read_sweep(const std::string& path) {
  auto in = open_input(path);
  return sweep_from_csv(in, path);
}

inline std::string histogram_to_csv(const CoincidenceHistogram& h) {
  std::string out = "delay_s,counts\n";
  for (std::size_t i = 0; i < h.bins.size(); ++i) {
    out += format_double(h.delay(i)) + "," + std::to_string(h.bins[i]) + "\n";
  }
  return out;
}

// --- density matrix and metrics --------------------------------------------

inline json density_to_json(const DensityMatrix& rho) {
  json re = json::array(), im = json::array();
  for (int r = 0; r < 4; ++r) {
    json rr = json::array(), ri = json::array();
    for (int c = 0; c < 4; ++c) {
      rr.push_back(rho(r, c).real());
      ri.push_back(rho(r, c).imag());
    }
    re.push_back(rr);
    im.push_back(ri);
  }
  return json{{"basis", {"HH", "HV", "VH", "VV"}}, {"re", re}, {"im", im}};
}

/// Validates shape, basis labels and the density-matrix invariants.
inline DensityMatrix density_from_json(const json& j) {
  if (!j.is_object() || !j.contains("basis") || !j.contains("re") || !j.contains("im")) {
    throw DomainError("density matrix JSON needs basis, re and im");
  }
  if (j.at("basis") != json{"HH", "HV", "VH", "VV"}) {
    throw DomainError("density matrix JSON basis must be [HH, HV, VH, VV]");
  }
  Mat4 m;
  for (const char* part : {"re", "im"}) {
    const json& a = j.at(part);
    if (!a.is_array() || a.size() != 4) throw DomainError("density matrix JSON: 4 rows expected");
    for (int r = 0; r < 4; ++r) {
      const json& row = a.at(static_cast<std::size_t>(r));
      if (!row.is_array() || row.size() != 4) {
        throw DomainError("density matrix JSON: 4 columns expected");
      }
      for (int c = 0; c < 4; ++c) {
        const json& cell = row.at(static_cast<std::size_t>(c));
        if (!cell.is_number()) throw DomainError("density matrix JSON: non-numeric entry");
        const double v = cell.get<double>();
        if (part[0] == 'r') {
          m(r, c) = Complex{v, 0.0};
        } else {
          m(r, c) += Complex{0.0, v};
        }
      }
    }
  }
  return DensityMatrix(m);
}

inline json metrics_to_json(const MetricsReport& m) {
  json fid = json::object(), fid_err = json::object();
  for (const auto& [k, v] : m.fidelities) fid[k] = v;
  for (const auto& [k, v] : m.fidelity_errs) fid_err[k] = v;
  return json{{"concurrence", m.concurrence},
              {"concurrence_err", m.concurrence_err},
              {"fidelities", fid},
              {"fidelity_errs", fid_err},
              {"purity", m.purity},
              {"purity_err", m.purity_err},
              {"samples_used", m.samples_used},
              {"samples_failed", m.samples_failed}};
}

inline json pure_state_to_json(const TwoQubitPureState& psi) {
  json amps = json::object();
  for (int i = 0; i < 4; ++i) {
    amps[kBasisLabels[static_cast<std::size_t>(i)]] = {psi.amplitudes()(i).real(),
                                                       psi.amplitudes()(i).imag()};
  }
  return amps;
}

}  // namespace polent::io
