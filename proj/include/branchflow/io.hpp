#pragma once
// File formats:
//   bgrid v1   : "bgrid <scalar|field> <nx> <ny> <Lx> <Ly>" header line, then
//                whitespace-separated values row-major (fields: all ux, then
//                all uy). Round trips bit-exactly through %.17g.
//   atoms CSV  : lines "x,y,mass", '#' comments allowed.
//   PGM (P5)   : 8-bit grayscale |u| snapshots.
//   config     : flat "key = value" lines, '#' comments; FNV-1a hash of the
//                raw bytes names the run in output headers.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"

namespace branchflow {

// ------------------------------------------------------------------ bgrid

inline std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_bgrid(std::ostream& os, const ScalarGrid& g) {
  os << "bgrid scalar " << g.nx << ' ' << g.ny << ' ' << format_g17(g.Lx)
     << ' ' << format_g17(g.Ly) << '\n';
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i)
      os << format_g17(g.at(i, j)) << (i + 1 == g.nx ? '\n' : ' ');
  }
}

inline void write_bgrid(std::ostream& os, const GridField& u) {
  os << "bgrid field " << u.nx << ' ' << u.ny << ' ' << format_g17(u.Lx)
     << ' ' << format_g17(u.Ly) << '\n';
  for (int j = 0; j < u.ny; ++j)
    for (int i = 0; i <= u.nx; ++i)
      os << format_g17(u.ux_at(i, j)) << (i == u.nx ? '\n' : ' ');
  for (int j = 0; j <= u.ny; ++j)
    for (int i = 0; i < u.nx; ++i)
      os << format_g17(u.uy_at(i, j)) << (i + 1 == u.nx ? '\n' : ' ');
}

inline void write_bgrid_file(const std::string& path, const ScalarGrid& g) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  write_bgrid(f, g);
}
inline void write_bgrid_file(const std::string& path, const GridField& u) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  write_bgrid(f, u);
}

struct BgridHeader {
  std::string kind;
  int nx = 0, ny = 0;
  double Lx = 0.0, Ly = 0.0;
};

inline BgridHeader read_bgrid_header(std::istream& is) {
  std::string magic;
  BgridHeader h;
  if (!(is >> magic >> h.kind >> h.nx >> h.ny >> h.Lx >> h.Ly) ||
      magic != "bgrid" || (h.kind != "scalar" && h.kind != "field") ||
      h.nx <= 0 || h.ny <= 0 || !(h.Lx > 0.0) || !(h.Ly > 0.0))
    throw std::runtime_error("bgrid: malformed header");
  return h;
}

inline ScalarGrid read_bgrid_scalar(std::istream& is) {
  const BgridHeader h = read_bgrid_header(is);
  if (h.kind != "scalar") throw std::runtime_error("bgrid: expected scalar");
  ScalarGrid g(h.nx, h.ny, h.Lx, h.Ly);
  for (auto& x : g.v)
    if (!(is >> x)) throw std::runtime_error("bgrid: truncated scalar data");
  return g;
}

inline GridField read_bgrid_field(std::istream& is) {
  const BgridHeader h = read_bgrid_header(is);
  if (h.kind != "field") throw std::runtime_error("bgrid: expected field");
  GridField u(h.nx, h.ny, h.Lx, h.Ly);
  for (auto& x : u.ux)
    if (!(is >> x)) throw std::runtime_error("bgrid: truncated ux data");
  for (auto& x : u.uy)
    if (!(is >> x)) throw std::runtime_error("bgrid: truncated uy data");
  return u;
}

inline ScalarGrid read_bgrid_scalar_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return read_bgrid_scalar(f);
}
inline GridField read_bgrid_field_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return read_bgrid_field(f);
}

// -------------------------------------------------------------- atoms CSV

inline AtomicMeasure read_atoms_csv(std::istream& is) {
  AtomicMeasure m;
  std::string line;
  while (std::getline(is, line)) {
    std::size_t k = line.find('#');
    if (k != std::string::npos) line.erase(k);
    bool blank = true;
    for (char c : line)
      if (!std::isspace((unsigned char)c)) blank = false;
    if (blank) continue;
    for (auto& c : line)
      if (c == ',') c = ' ';
    std::istringstream ls(line);
    Atom a;
    if (!(ls >> a.p.x >> a.p.y >> a.mass))
      throw std::runtime_error("atoms csv: malformed line: " + line);
    m.atoms.push_back(a);
  }
  return m;
}

inline AtomicMeasure read_atoms_csv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return read_atoms_csv(f);
}

inline void write_atoms_csv(std::ostream& os, const AtomicMeasure& m) {
  for (const auto& a : m.atoms)
    os << format_g17(a.p.x) << ',' << format_g17(a.p.y) << ','
       << format_g17(a.mass) << '\n';
}

// ------------------------------------------------------------------- PGM

// Linear |u| snapshot at cell centers; the field max maps to 255, a zero
// field renders all black. The comment line carries the config hash.
inline void write_pgm(const std::string& path, const GridField& u,
                      const std::string& comment = "") {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  double mx = 0.0;
  for (int j = 0; j < u.ny; ++j)
    for (int i = 0; i < u.nx; ++i)
      mx = std::max(mx, std::hypot(u.cx(i, j), u.cy(i, j)));
  f << "P5\n";
  if (!comment.empty()) f << "# " << comment << '\n';
  f << u.nx << ' ' << u.ny << "\n255\n";
  std::vector<unsigned char> row(u.nx);
  for (int j = u.ny - 1; j >= 0; --j) {  // top row first
    for (int i = 0; i < u.nx; ++i) {
      const double m = std::hypot(u.cx(i, j), u.cy(i, j));
      row[i] = (unsigned char)(mx > 0.0 ? std::min(255.0, 255.0 * m / mx)
                                        : 0.0);
    }
    f.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
}

// ----------------------------------------------------------------- config

struct Config {
  std::map<std::string, std::string> kv;
  std::string raw;

  bool has(const std::string& k) const { return kv.count(k) != 0; }
  std::string get(const std::string& k, const std::string& dflt) const {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : it->second;
  }
  double get_num(const std::string& k, double dflt) const {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : std::stod(it->second);
  }
  int get_int(const std::string& k, int dflt) const {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : std::stoi(it->second);
  }
  std::string require(const std::string& k) const {
    auto it = kv.find(k);
    if (it == kv.end())
      throw std::runtime_error("config: missing required key '" + k + "'");
    return it->second;
  }
};

inline std::string strip(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace((unsigned char)s[a])) ++a;
  while (b > a && std::isspace((unsigned char)s[b - 1])) --b;
  return s.substr(a, b - a);
}

inline Config parse_config(std::istream& is) {
  Config c;
  std::ostringstream rawbuf;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    rawbuf << line << '\n';
    std::size_t k = line.find('#');
    if (k != std::string::npos) line.erase(k);
    const std::string t = strip(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(lineno) +
                               ": expected key = value");
    const std::string key = strip(t.substr(0, eq));
    const std::string val = strip(t.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config: line " + std::to_string(lineno) +
                               ": empty key");
    c.kv[key] = val;
  }
  c.raw = rawbuf.str();
  return c;
}

inline Config parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return parse_config(f);
}

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string config_hash(const Config& c) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                (unsigned long long)fnv1a64(c.raw));
  return buf;
}

}  // namespace branchflow
