#pragma once

#include <complex>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ehmg/grid.hpp"

namespace ehmg {

using Json = nlohmann::json;

inline Json load_json(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw std::runtime_error("cannot open " + p.string());
  return Json::parse(f);
}

inline void save_json(const std::filesystem::path& p, const Json& j) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << j.dump(2) << "\n";
}

// Comma-separated output with a header row; numbers are written with enough
// digits to round-trip.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& p, const std::vector<std::string>& columns)
      : f_(p), ncol_(columns.size()) {
    if (!f_) throw std::runtime_error("cannot write " + p.string());
    write_row_(columns);
  }

  template <class... Ts> void row(const Ts&... vals) {
    std::vector<std::string> cells{to_cell_(vals)...};
    if (cells.size() != ncol_) throw std::logic_error("csv row width mismatch");
    write_row_(cells);
  }

 private:
  static std::string to_cell_(const std::string& s) { return s; }
  static std::string to_cell_(const char* s) { return s; }
  static std::string to_cell_(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  }
  static std::string to_cell_(int v) { return std::to_string(v); }
  static std::string to_cell_(long v) { return std::to_string(v); }
  static std::string to_cell_(long long v) { return std::to_string(v); }
  static std::string to_cell_(std::size_t v) { return std::to_string(v); }

  void write_row_(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) f_ << (i ? "," : "") << cells[i];
    f_ << "\n";
  }

  std::ofstream f_;
  size_t ncol_;
};

// Raw little-endian dump of a staggered field: all components concatenated as
// interleaved (re, im) float64 pairs, plus a JSON sidecar describing the
// layout. Component index Dim is the cell-centered pressure.
template <class Real, int Dim>
void dump_field(const std::filesystem::path& dir, const std::string& name,
                const StaggeredGrid<Dim>& g, const FieldVector<Real, Dim>& x) {
  std::filesystem::create_directories(dir);
  std::ofstream bin(dir / (name + ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write field dump");
  Json comps = Json::array();
  std::int64_t offset = 0;
  for (int c = 0; c <= Dim; ++c) {
    Box<Dim> b = c < Dim ? g.face_box(c) : g.cell_box();
    for (const auto& z : x.comp[size_t(c)]) {
      double re = double(z.real()), im = double(z.imag());
      bin.write(reinterpret_cast<const char*>(&re), sizeof(double));
      bin.write(reinterpret_cast<const char*>(&im), sizeof(double));
    }
    Json jc;
    jc["name"] = c < Dim ? ("u" + std::to_string(c)) : "p";
    jc["dims"] = std::vector<int>(b.dims.begin(), b.dims.end());
    jc["offset_bytes"] = offset;
    jc["count"] = b.size();
    comps.push_back(jc);
    offset += b.size() * std::int64_t(2 * sizeof(double));
  }
  Json hdr;
  hdr["dtype"] = "complex128";
  hdr["byte_order"] = "little";
  hdr["index_order"] = "axis0_fastest";
  hdr["spacing"] = g.h;
  hdr["grid_dims"] = std::vector<int>(g.dims.begin(), g.dims.end());
  hdr["components"] = comps;
  hdr["data_file"] = name + ".bin";
  save_json(dir / (name + ".json"), hdr);
}

}  // namespace ehmg
