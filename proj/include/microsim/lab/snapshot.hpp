#pragma once

// Versioned parameter snapshots.
//
// Layout, little-endian:
//   bytes 0-7  magic "MSIMSNAP"
//   uint32     version (1)
//   uint64     seed
//   uint64     tensor count
//   per tensor: uint64 rank, uint64[rank] dims, float64[prod(dims)] values
//
// The snapshot id is the FNV-1a 64-bit hash of these bytes, in hex.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "microsim/metrics/array_io.hpp"
#include "microsim/numeric/tensor.hpp"

namespace microsim::lab {

inline constexpr char kSnapshotMagic[8] = {'M', 'S', 'I', 'M', 'S', 'N', 'A', 'P'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

struct Snapshot {
  std::uint32_t version = kSnapshotVersion;
  std::uint64_t seed = 0;
  std::vector<Tensor> tensors;
};

inline std::string snapshot_bytes(std::uint64_t seed, const std::vector<Tensor>& tensors) {
  std::ostringstream os(std::ios::binary);
  os.write(kSnapshotMagic, 8);
  metrics::io_detail::put<std::uint32_t>(os, kSnapshotVersion);
  metrics::io_detail::put<std::uint64_t>(os, seed);
  metrics::io_detail::put<std::uint64_t>(os, tensors.size());
  for (const auto& t : tensors) {
    metrics::io_detail::put<std::uint64_t>(os, t.rank());
    for (std::size_t d : t.shape()) metrics::io_detail::put<std::uint64_t>(os, d);
    for (double v : t.values()) metrics::io_detail::put<double>(os, v);
  }
  return os.str();
}

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string snapshot_id(std::uint64_t seed, const std::vector<Tensor>& tensors) {
  return fnv1a_hex(snapshot_bytes(seed, tensors));
}

/// Writes the snapshot and returns its id.
inline std::string write_snapshot(const std::string& path, std::uint64_t seed, const std::vector<Tensor>& tensors) {
  const std::string bytes = snapshot_bytes(seed, tensors);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("write_snapshot: cannot open " + path);
  os.write(bytes.data(), std::streamsize(bytes.size()));
  if (!os) throw ConfigError("write_snapshot: write failed for " + path);
  return fnv1a_hex(bytes);
}

inline Snapshot read_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("read_snapshot: cannot open " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::string(magic, 8) != std::string(kSnapshotMagic, 8)) {
    throw ConfigError("read_snapshot: " + path + " does not start with the MSIMSNAP magic");
  }
  Snapshot s;
  s.version = metrics::io_detail::get<std::uint32_t>(is, path);
  if (s.version != kSnapshotVersion) {
    throw ConfigError("read_snapshot: unsupported version " + std::to_string(s.version) + " in " + path);
  }
  s.seed = metrics::io_detail::get<std::uint64_t>(is, path);
  const auto count = metrics::io_detail::get<std::uint64_t>(is, path);
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto rank = metrics::io_detail::get<std::uint64_t>(is, path);
    if (rank > 16) throw ConfigError("read_snapshot: implausible rank in " + path);
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) n *= (d = std::size_t(metrics::io_detail::get<std::uint64_t>(is, path)));
    std::vector<double> v(n);
    for (auto& x : v) x = metrics::io_detail::get<double>(is, path);
    s.tensors.emplace_back(shape, std::move(v));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw ConfigError("read_snapshot: trailing bytes in " + path);
  return s;
}

/// Id of a snapshot file as stored on disk.
inline std::string snapshot_file_id(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("snapshot_file_id: cannot open " + path);
  return fnv1a_hex(std::string(std::istreambuf_iterator<char>(is), {}));
}

}  // namespace microsim::lab
