#pragma once

// Flat array files for feature and probability tables.
//
// Binary layout, all integers and floats little-endian:
//   bytes 0-7   magic "MSIMARR1"
//   uint64      rank
//   uint64[rank] dims
//   float64[prod(dims)] values, row-major
//
// CSV: one row per line, comma separated; a first line that does not parse as
// numbers is a header and is skipped. Every row has the same column count.

#include <Eigen/Dense>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "microsim/numeric/tensor.hpp"

namespace microsim::metrics {

inline constexpr char kArrayMagic[8] = {'M', 'S', 'I', 'M', 'A', 'R', 'R', '1'};

namespace io_detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
T swap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T>
void put(std::ostream& os, T v) {
  v = swap_if_big(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ConfigError("read_array: truncated file " + path);
  return swap_if_big(v);
}

inline bool parse_row(const std::string& line, std::vector<double>& out) {
  out.clear();
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t end = line.find(',', pos);
    if (end == std::string::npos) end = line.size();
    std::size_t a = pos, b = end;
    while (a < b && (line[a] == ' ' || line[a] == '\t')) ++a;
    while (b > a && (line[b - 1] == ' ' || line[b - 1] == '\t' || line[b - 1] == '\r')) --b;
    double v = 0.0;
    const auto res = std::from_chars(line.data() + a, line.data() + b, v);
    if (a == b || res.ec != std::errc() || res.ptr != line.data() + b) return false;
    out.push_back(v);
    pos = end + 1;
  }
  return true;
}

}  // namespace io_detail

inline void write_array(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("write_array: cannot open " + path);
  os.write(kArrayMagic, sizeof(kArrayMagic));
  io_detail::put<std::uint64_t>(os, t.rank());
  for (std::size_t d : t.shape()) io_detail::put<std::uint64_t>(os, d);
  for (double v : t.values()) io_detail::put<double>(os, v);
  if (!os) throw ConfigError("write_array: write failed for " + path);
}

inline Tensor read_array(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("read_array: cannot open " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kArrayMagic, 8) != 0) {
    throw ConfigError("read_array: " + path + " does not start with the MSIMARR1 magic");
  }
  const auto rank = io_detail::get<std::uint64_t>(is, path);
  if (rank > 16) throw ConfigError("read_array: implausible rank " + std::to_string(rank) + " in " + path);
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = std::size_t(io_detail::get<std::uint64_t>(is, path));
    n *= d;
  }
  std::vector<double> values(n);
  for (auto& v : values) v = io_detail::get<double>(is, path);
  if (is.peek() != std::char_traits<char>::eof()) throw ConfigError("read_array: trailing bytes in " + path);
  return Tensor(shape, std::move(values));
}

inline void write_csv(const std::string& path, const Tensor& t, const std::vector<std::string>& header = {}) {
  if (t.rank() != 2) throw ShapeError("write_csv: expects a [rows, cols] array, got " + shape_string(t.shape()));
  std::ofstream os(path);
  if (!os) throw ConfigError("write_csv: cannot open " + path);
  os.precision(17);
  for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
  if (!header.empty()) os << '\n';
  const std::size_t rows = t.dim(0), cols = t.dim(1);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) os << (j ? "," : "") << t[i * cols + j];
    os << '\n';
  }
}

inline Tensor read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("read_csv: cannot open " + path);
  std::string line;
  std::vector<double> row, values;
  std::size_t cols = 0, rows = 0, line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!io_detail::parse_row(line, row)) {
      if (rows == 0 && line_no == 1) continue;
      throw ConfigError("read_csv: " + path + ":" + std::to_string(line_no) + " is not a numeric row");
    }
    if (rows == 0) cols = row.size();
    if (row.size() != cols) {
      throw ConfigError("read_csv: " + path + ":" + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                        " columns, expected " + std::to_string(cols));
    }
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw ConfigError("read_csv: " + path + " has no data rows");
  return Tensor({rows, cols}, std::move(values));
}

/// Reads `.csv` files as CSV and anything else as the binary layout.
inline Tensor load_table(const std::string& path) {
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  return csv ? read_csv(path) : read_array(path);
}

inline Eigen::MatrixXd to_matrix(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("to_matrix: expects [rows, cols], got " + shape_string(t.shape()));
  Eigen::MatrixXd m(t.dim(0), t.dim(1));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m(Eigen::Index(i), Eigen::Index(j)) = t[i * t.dim(1) + j];
  return m;
}

}  // namespace microsim::metrics
