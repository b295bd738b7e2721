#pragma once

#include "egflow/ac0.hpp"
#include "egflow/common.hpp"
#include "egflow/fem.hpp"
#include "egflow/mesh.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace egflow {

// ---------------------------------------------------------------------------
// VTK (legacy ASCII) snapshots
// ---------------------------------------------------------------------------

/// Vertex values of the EG velocity, averaged over the cells sharing the vertex.
inline std::vector<Vec2> vertex_velocities(const Mesh& mesh, const EGVelocityField& u) {
  std::vector<Vec2> sum(mesh.num_vertices(), Vec2::Zero());
  std::vector<int> count(mesh.num_vertices(), 0);
  for (int c = 0; c < mesh.num_cells(); ++c)
    for (int i = 0; i < 4; ++i) {
      const int v = mesh.cell(c)[i];
      sum[v] += evaluate_eg_ref(mesh, u, c, Vec2(q1::kXi[i], q1::kEta[i]));
      ++count[v];
    }
  for (int v = 0; v < mesh.num_vertices(); ++v) sum[v] /= std::max(count[v], 1);
  return sum;
}

inline void write_vtk(std::ostream& out, const Mesh& mesh, const State& s, bool reconstructed) {
  out << std::setprecision(12);
  out << "# vtk DataFile Version 3.0\negflow t=" << s.time << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.num_vertices() << " double\n";
  for (const auto& v : mesh.vertices()) out << v.x() << ' ' << v.y() << " 0\n";
  out << "CELLS " << mesh.num_cells() << ' ' << 5 * mesh.num_cells() << '\n';
  for (const auto& c : mesh.cells()) out << "4 " << c[0] << ' ' << c[1] << ' ' << c[2] << ' ' << c[3] << '\n';
  out << "CELL_TYPES " << mesh.num_cells() << '\n';
  for (int c = 0; c < mesh.num_cells(); ++c) out << "9\n";

  out << "POINT_DATA " << mesh.num_vertices() << "\nSCALARS temperature double 1\nLOOKUP_TABLE default\n";
  for (int v = 0; v < mesh.num_vertices(); ++v) out << s.temperature[v] << '\n';
  out << "VECTORS velocity double\n";
  for (const Vec2& u : vertex_velocities(mesh, s.velocity)) out << u.x() << ' ' << u.y() << " 0\n";

  out << "CELL_DATA " << mesh.num_cells() << "\nSCALARS pressure double 1\nLOOKUP_TABLE default\n";
  for (int c = 0; c < mesh.num_cells(); ++c) out << s.pressure[c] << '\n';
  out << "VECTORS velocity_centroid double\n";
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const Vec2 u = evaluate_eg_ref(mesh, s.velocity, c, Vec2::Zero());
    out << u.x() << ' ' << u.y() << " 0\n";
  }
  if (!reconstructed) return;
  const ReconstructionOperator op(mesh);
  const ReconstructedField r = op.apply(s.velocity);
  out << "VECTORS velocity_reconstructed double\n";
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const Vec2 u = op.value_ref(r, c, Vec2::Zero());
    out << u.x() << ' ' << u.y() << " 0\n";
  }
  out << "SCALARS divergence_reconstructed double 1\nLOOKUP_TABLE default\n";
  for (int c = 0; c < mesh.num_cells(); ++c) out << op.divergence(r, c) << '\n';
}

inline void write_vtk_file(const std::string& path, const Mesh& mesh, const State& s, bool reconstructed) {
  std::ofstream f(path);
  require(static_cast<bool>(f), "cannot write '" + path + "'");
  write_vtk(f, mesh, s, reconstructed);
}

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

/// Appends rows as they are produced, so partial results survive a failed run.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
    require(static_cast<bool>(out_), "cannot write '" + path + "'");
    out_ << std::setprecision(12);
    row_strings(header);
  }

  template <class... T>
  void row(const T&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cells, first = false), ...);
    out_ << '\n' << std::flush;
  }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Flat key = value configuration
// ---------------------------------------------------------------------------

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Parses `key = value` lines; `#` starts a comment. Later keys win.
inline std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source = "config") {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    require(eq != std::string::npos, where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!key.empty(), where + ": empty key");
    require(!value.empty(), where + ": empty value for '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

inline std::map<std::string, std::string> read_key_value_file(const std::string& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), "cannot read config '" + path + "'");
  return parse_key_values(f, path);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == v.size() && pos > 0, "'" + key + "': expected a number, got '" + v + "'");
  return x;
}

inline int parse_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  int x = 0;
  try {
    x = std::stoi(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == v.size() && pos > 0, "'" + key + "': expected an integer, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error("'" + key + "': expected true or false, got '" + v + "'");
}

/// Whitespace-separated numbers.
inline std::vector<double> parse_numbers(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) out.push_back(parse_double(key, tok));
  return out;
}

inline Vec2 parse_vec2(const std::string& key, const std::string& v) {
  const auto x = parse_numbers(key, v);
  require(x.size() == 2, "'" + key + "': expected two numbers");
  return Vec2(x[0], x[1]);
}

/// Holes as `x y r; x y r; ...`.
inline std::vector<Hole> parse_holes(const std::string& key, const std::string& v) {
  std::vector<Hole> holes;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (trim(item).empty()) continue;
    const auto x = parse_numbers(key, item);
    require(x.size() == 3, "'" + key + "': each hole needs 'x y r'");
    holes.push_back(Hole{Vec2(x[0], x[1]), x[2]});
  }
  return holes;
}

inline std::string format_holes(const std::vector<Hole>& holes) {
  std::ostringstream s;
  s << std::setprecision(12);
  for (std::size_t i = 0; i < holes.size(); ++i)
    s << (i ? "; " : "") << holes[i].center.x() << ' ' << holes[i].center.y() << ' ' << holes[i].radius;
  return s.str();
}

inline std::string prepare_output_dir(const std::string& dir) {
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace egflow
