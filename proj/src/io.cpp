#include "aqbias/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "aqbias/csv.hpp"
#include "aqbias/error.hpp"

namespace aqbias {

namespace {

constexpr const char* kMagic = "aqbias-grid 1";

std::uint64_t byteswap64(std::uint64_t v) {
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r = (r << 8) | ((v >> (8 * i)) & 0xffu);
  return r;
}

void put_le(std::ostream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = byteswap64(bits);
  char buf[8];
  std::memcpy(buf, &bits, 8);
  out.write(buf, 8);
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, p, 8);
  if constexpr (std::endian::native == std::endian::big) bits = byteswap64(bits);
  return std::bit_cast<double>(bits);
}

std::size_t to_size(const std::string& text, const std::string& context) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || text.empty() || text.front() == '-')
    throw FormatError(context + ": not a count: '" + text + "'");
  return static_cast<std::size_t>(v);
}

Hour parse_timestamp(const std::string& text, const std::string& context) {
  try {
    return parse_hour(text);
  } catch (const Error& e) {
    throw FormatError(context + ": " + e.what());
  }
}

}  // namespace

const char* to_string(GridEncoding e) { return e == GridEncoding::ascii ? "ascii" : "binary"; }

GridEncoding parse_grid_encoding(const std::string& text) {
  if (text == "ascii") return GridEncoding::ascii;
  if (text == "binary") return GridEncoding::binary;
  throw FormatError("unknown grid encoding '" + text + "'");
}

void write_grid(const ConcentrationGrid& grid, std::ostream& out, GridEncoding encoding) {
  grid.validate();
  const GridGeometry& g = grid.geometry;
  out << kMagic << '\n'
      << "nx " << g.nx << '\n'
      << "ny " << g.ny << '\n'
      << "origin_x " << csv::format_double(g.origin_x) << '\n'
      << "origin_y " << csv::format_double(g.origin_y) << '\n'
      << "cell_size " << csv::format_double(g.cell_size) << '\n'
      << "timestamp " << format_hour(grid.timestamp) << '\n'
      << "nodata " << csv::format_double(grid.nodata) << '\n'
      << "clamped " << grid.clamped << '\n'
      << "format " << to_string(encoding) << '\n'
      << "data\n";
  if (encoding == GridEncoding::ascii) {
    for (std::size_t j = 0; j < g.ny; ++j) {
      for (std::size_t i = 0; i < g.nx; ++i) {
        if (i) out << ' ';
        out << csv::format_double(grid.values[g.index(i, j)]);
      }
      out << '\n';
    }
  } else {
    for (double v : grid.values) put_le(out, v);
  }
}

ConcentrationGrid read_grid(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw FormatError(source + ": not a grid file (bad first line)");
  std::map<std::string, std::string> header;
  bool have_data = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == "data") {
      have_data = true;
      break;
    }
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw FormatError(source + ": malformed header line '" + line + "'");
    const std::string key = line.substr(0, sp);
    static const std::set<std::string> known{"nx", "ny", "origin_x", "origin_y", "cell_size",
                                             "timestamp", "nodata", "clamped", "format"};
    if (!known.count(key)) throw FormatError(source + ": unknown header key '" + key + "'");
    if (!header.emplace(key, line.substr(sp + 1)).second)
      throw FormatError(source + ": duplicate header key '" + key + "'");
  }
  if (!have_data) throw FormatError(source + ": header not closed by a data line");
  auto field = [&](const std::string& key) -> const std::string& {
    const auto it = header.find(key);
    if (it == header.end()) throw FormatError(source + ": missing header key '" + key + "'");
    return it->second;
  };

  ConcentrationGrid grid;
  GridGeometry& g = grid.geometry;
  g.nx = to_size(field("nx"), source + " nx");
  g.ny = to_size(field("ny"), source + " ny");
  g.origin_x = csv::to_double(field("origin_x"), source + " origin_x");
  g.origin_y = csv::to_double(field("origin_y"), source + " origin_y");
  g.cell_size = csv::to_double(field("cell_size"), source + " cell_size");
  grid.nodata = csv::to_double(field("nodata"), source + " nodata");
  grid.timestamp = header.count("timestamp") ? parse_timestamp(field("timestamp"), source) : 0;
  grid.clamped = header.count("clamped") ? to_size(field("clamped"), source + " clamped") : 0;
  const GridEncoding encoding = parse_grid_encoding(field("format"));
  if (!(g.cell_size > 0.0) || g.nx == 0 || g.ny == 0)
    throw FormatError(source + ": empty or invalid grid geometry");

  const std::size_t n = g.size();
  grid.values.reserve(n);
  if (encoding == GridEncoding::ascii) {
    std::string token;
    while (in >> token) {
      if (grid.values.size() == n)
        throw FormatError(source + ": payload longer than nx * ny = " + std::to_string(n));
      grid.values.push_back(csv::to_double(token, source));
    }
  } else {
    std::vector<char> buf(n * 8);
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size())
      throw FormatError(source + ": binary payload shorter than nx * ny = " + std::to_string(n));
    if (in.peek() != std::char_traits<char>::eof())
      throw FormatError(source + ": payload longer than nx * ny = " + std::to_string(n));
    for (std::size_t i = 0; i < n; ++i) grid.values.push_back(get_le(buf.data() + 8 * i));
  }
  if (grid.values.size() != n)
    throw FormatError(source + ": payload has " + std::to_string(grid.values.size()) +
                      " values, header says " + std::to_string(n));
  return grid;
}

void write_grid(const ConcentrationGrid& grid, const std::string& path, GridEncoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  write_grid(grid, out, encoding);
  if (!out) throw FormatError("write failed: " + path);
}

ConcentrationGrid read_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_grid(in, path);
}

ConcentrationGrid resample_elevation(const ConcentrationGrid& coarse, const GridGeometry& target) {
  coarse.validate();
  const GridGeometry& c = coarse.geometry;
  if (!(target.cell_size > 0.0) || target.size() == 0)
    throw ConfigError("resampling target geometry is empty");
  constexpr double kEps = 1e-9;

  // Fractional coarse index of a coordinate, checked against the hull of
  // the coarse cell centres.
  auto locate = [&](double v, double origin, std::size_t count, const char* axis) {
    double u = (v - origin) / c.cell_size - 0.5;
    const double hi = static_cast<double>(count - 1);
    if (u < -kEps || u > hi + kEps)
      throw DataError(std::string("coarse grid does not cover the target extent along ") + axis);
    u = std::clamp(u, 0.0, hi);
    std::size_t i0 = static_cast<std::size_t>(std::floor(u));
    if (i0 + 1 >= count) i0 = count > 1 ? count - 2 : 0;
    double f = u - static_cast<double>(i0);
    if (std::abs(f) < 1e-12) f = 0.0;
    if (std::abs(f - 1.0) < 1e-12) f = 1.0;
    if (count == 1) f = 0.0;
    return std::pair<std::size_t, double>(i0, f);
  };

  ConcentrationGrid out;
  out.geometry = target;
  out.timestamp = coarse.timestamp;
  out.nodata = coarse.nodata;
  out.values.resize(target.size());
  for (std::size_t j = 0; j < target.ny; ++j) {
    const auto [j0, fy] = locate(target.center_y(j), c.origin_y, c.ny, "y");
    const std::size_t j1 = std::min(j0 + 1, c.ny - 1);
    for (std::size_t i = 0; i < target.nx; ++i) {
      const auto [i0, fx] = locate(target.center_x(i), c.origin_x, c.nx, "x");
      const std::size_t i1 = std::min(i0 + 1, c.nx - 1);
      const double w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      const std::size_t idx[4] = {c.index(i0, j0), c.index(i1, j0), c.index(i0, j1),
                                  c.index(i1, j1)};
      double v = 0.0;
      bool missing = false;
      for (int a = 0; a < 4; ++a) {
        if (w[a] == 0.0) continue;
        const double cv = coarse.values[idx[a]];
        if (coarse.is_nodata(cv) || !std::isfinite(cv)) missing = true;
        v += w[a] * cv;
      }
      out.values[target.index(i, j)] = missing ? out.nodata : v;
    }
  }
  return out;
}

std::vector<std::uint8_t> traffic_hours_filter(const std::vector<Hour>& hours,
                                               const TrafficWindow& window) {
  window.validate();
  std::vector<std::uint8_t> mask(hours.size());
  for (std::size_t t = 0; t < hours.size(); ++t) mask[t] = window.contains(hours[t]) ? 1 : 0;
  return mask;
}

DeviceTable read_device_csv(const std::string& path, const std::vector<std::string>& columns) {
  const csv::Table t = csv::read_file(path);
  const std::size_t ts = t.column("timestamp"), vc = t.column("value");
  std::vector<std::size_t> cc;
  for (const auto& name : columns) {
    try {
      cc.push_back(t.column(name));
    } catch (const FormatError&) {
      throw FormatError(path + ": missing channel column '" + name + "'");
    }
  }
  DeviceTable out;
  out.columns = columns;
  std::set<Hour> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string ctx = path + " row " + std::to_string(r + 1);
    const Hour h = parse_timestamp(row[ts], ctx);
    if (!seen.insert(h).second)
      throw DataError(path + ": duplicate timestamp " + format_hour(h));
    out.hours.push_back(h);
    out.value.push_back(csv::to_double(row[vc], ctx));
    for (std::size_t c : cc) out.channels.push_back(csv::to_double(row[c], ctx));
  }
  return out;
}

void write_device_csv(const DeviceTable& table, const std::string& path) {
  const std::size_t q = table.columns.size();
  if (table.value.size() != table.hours.size() || table.channels.size() != table.hours.size() * q)
    throw ConfigError("device table columns differ in length");
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << "timestamp,value";
  for (const auto& c : table.columns) out << ',' << c;
  out << '\n';
  for (std::size_t t = 0; t < table.hours.size(); ++t) {
    out << format_hour(table.hours[t]) << ',' << csv::format_double(table.value[t]);
    for (std::size_t c = 0; c < q; ++c) out << ',' << csv::format_double(table.channels[t * q + c]);
    out << '\n';
  }
  if (!out) throw FormatError("write failed: " + path);
}

TemporalTable read_temporal_csv(const std::string& path, const std::vector<std::string>& names) {
  const csv::Table t = csv::read_file(path);
  const std::size_t ts = t.column("timestamp");
  std::vector<std::size_t> cols;
  for (const auto& n : names) cols.push_back(t.column(n));
  TemporalTable out;
  out.names = names;
  std::set<Hour> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string ctx = path + " row " + std::to_string(r + 1);
    const Hour h = parse_timestamp(t.rows[r][ts], ctx);
    if (!seen.insert(h).second) throw DataError(path + ": duplicate timestamp " + format_hour(h));
    out.hours.push_back(h);
    for (std::size_t c : cols) out.values.push_back(csv::to_double(t.rows[r][c], ctx));
  }
  return out;
}

void write_temporal_csv(const TemporalTable& table, const std::string& path) {
  const std::size_t l = table.names.size();
  if (table.values.size() != table.hours.size() * l)
    throw ConfigError("temporal table columns differ in length");
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << "timestamp";
  for (const auto& n : table.names) out << ',' << n;
  out << '\n';
  for (std::size_t t = 0; t < table.hours.size(); ++t) {
    out << format_hour(table.hours[t]);
    for (std::size_t i = 0; i < l; ++i) out << ',' << csv::format_double(table.values[t * l + i]);
    out << '\n';
  }
  if (!out) throw FormatError("write failed: " + path);
}

}  // namespace aqbias
