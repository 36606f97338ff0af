#include "panoscan/scanpath_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "panoscan/errors.hpp"

namespace panoscan {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string encode_scanpaths(std::span<const Scanpath> paths) {
  std::string out;
  for (std::size_t id = 0; id < paths.size(); ++id) {
    const auto& p = paths[id];
    for (std::size_t i = 0; i < p.points.size(); ++i) {
      out += "{\"path_id\": " + std::to_string(id) + ", \"t\": " + format_double(static_cast<double>(i) / p.rate_hz) +
             ", \"phi\": " + format_double(p.points[i].phi) + ", \"theta\": " + format_double(p.points[i].theta) +
             "}\n";
    }
  }
  return out;
}

void write_scanpaths(std::span<const Scanpath> paths, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << encode_scanpaths(paths);
  if (!out) throw IoError("failed writing " + file.string());
}

std::vector<Scanpath> decode_scanpaths(std::istream& in, const std::string& source) {
  struct Record {
    double t, phi, theta;
    int line;
  };
  std::map<long, std::vector<Record>> by_id;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      const Record r{j.at("t").get<double>(), j.at("phi").get<double>(), j.at("theta").get<double>(), line_no};
      const Viewpoint vp{r.phi, r.theta};
      if (!vp.valid()) throw FormatError(where + ": viewpoint out of range");
      by_id[j.at("path_id").get<long>()].push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  std::vector<Scanpath> paths;
  for (const auto& [id, records] : by_id) {
    Scanpath p;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (i > 0 && !(records[i].t > records[i - 1].t)) {
        throw FormatError(source + ":" + std::to_string(records[i].line) + ": records of path " + std::to_string(id) +
                          " are not sorted by t");
      }
      p.points.push_back({records[i].phi, records[i].theta});
    }
    if (records.size() >= 2) {
      const double dt = records[1].t - records[0].t;
      for (std::size_t i = 2; i < records.size(); ++i) {
        const double step = records[i].t - records[i - 1].t;
        if (std::abs(step - dt) > 1e-9 * std::max(1.0, dt)) {
          throw FormatError(source + ":" + std::to_string(records[i].line) + ": non-uniform time spacing");
        }
      }
      p.rate_hz = (records.size() - 1) / (records.back().t - records.front().t);
      // Snap rates that are integers up to rounding in the stored timestamps.
      if (std::abs(p.rate_hz - std::round(p.rate_hz)) < 1e-9) p.rate_hz = std::round(p.rate_hz);
    }
    paths.push_back(std::move(p));
  }
  return paths;
}

std::vector<Scanpath> read_scanpaths(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  return decode_scanpaths(in, file.string());
}

}  // namespace panoscan
