#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace lama {

/// Named numeric arrays with ranks and dimensions, round-trippable through
/// the binary container format below.
struct TensorEntry {
  std::vector<std::uint32_t> dims;   // empty for rank-0 scalars
  std::vector<double> data;          // row-major, size = product of dims

  std::size_t element_count() const;
};

/// Ordered name -> entry map; order is preserved on write.
struct Container {
  std::vector<std::pair<std::string, TensorEntry>> entries;

  bool has(const std::string& name) const;
  const TensorEntry& at(const std::string& name) const;
  void add(const std::string& name, TensorEntry entry);

  // Convenience wrappers for the common shapes.
  void add_scalar(const std::string& name, double value);
  void add_matrix(const std::string& name, const Eigen::MatrixXd& m);
  double scalar(const std::string& name) const;
  Eigen::MatrixXd matrix(const std::string& name) const;
};

// Distinct error kinds so callers can tell malformed input apart.
struct ContainerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadMagic : ContainerError {
  using ContainerError::ContainerError;
};
struct VersionMismatch : ContainerError {
  using ContainerError::ContainerError;
};
struct Truncated : ContainerError {
  using ContainerError::ContainerError;
};
struct DuplicateName : ContainerError {
  using ContainerError::ContainerError;
};

// Binary layout, all integers little-endian: magic "LAMA", version u16 (1),
// entry count u32, then per entry: name length u32, name bytes, rank u32,
// rank u32 dims, payload of 8-byte IEEE-754 little-endian doubles in
// row-major order.
std::vector<std::uint8_t> serialize(const Container& c);
Container deserialize(const std::uint8_t* bytes, std::size_t size);

void save_container(const Container& c, const std::string& path);
Container load_container(const std::string& path);

/// Writes a matrix as a binary 16-bit PGM (P5, maxval 65535, big-endian
/// samples), clamping values to [min_value, min_value + range].
void save_pgm(const Eigen::MatrixXd& image, const std::string& path,
              double min_value, double range);

}  // namespace lama
