#include "lama/container_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace lama {

namespace {

static_assert(std::numeric_limits<double>::is_iec559,
              "container format stores IEEE-754 binary64 payloads");

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

/// Bounds-checked little-endian reader over an external byte range.
struct Reader {
  const std::uint8_t* p;
  std::size_t remaining;

  void need(std::size_t n) const {
    if (remaining < n) throw Truncated("container data ends mid-field");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    remaining -= 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    remaining -= 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    remaining -= 8;
    return std::bit_cast<double>(bits);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    remaining -= n;
    return s;
  }
};

constexpr std::uint8_t kMagic[4] = {'L', 'A', 'M', 'A'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

std::size_t TensorEntry::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

bool Container::has(const std::string& name) const {
  for (const auto& [n, e] : entries)
    if (n == name) return true;
  return false;
}

const TensorEntry& Container::at(const std::string& name) const {
  for (const auto& [n, e] : entries)
    if (n == name) return e;
  throw ContainerError("no entry named '" + name + "'");
}

void Container::add(const std::string& name, TensorEntry entry) {
  if (has(name)) throw DuplicateName("entry '" + name + "' already present");
  if (entry.data.size() != entry.element_count())
    throw ContainerError("entry '" + name + "' data does not match its dims");
  entries.emplace_back(name, std::move(entry));
}

void Container::add_scalar(const std::string& name, double value) {
  add(name, TensorEntry{{}, {value}});
}

void Container::add_matrix(const std::string& name, const Eigen::MatrixXd& m) {
  TensorEntry e;
  e.dims = {static_cast<std::uint32_t>(m.rows()),
            static_cast<std::uint32_t>(m.cols())};
  e.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) e.data.push_back(m(i, j));
  add(name, std::move(e));
}

double Container::scalar(const std::string& name) const {
  const auto& e = at(name);
  if (!e.dims.empty() || e.data.size() != 1)
    throw ContainerError("entry '" + name + "' is not a scalar");
  return e.data[0];
}

Eigen::MatrixXd Container::matrix(const std::string& name) const {
  const auto& e = at(name);
  if (e.dims.size() != 2)
    throw ContainerError("entry '" + name + "' is not rank 2");
  Eigen::MatrixXd m(e.dims[0], e.dims[1]);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = e.data[k++];
  return m;
}

std::vector<std::uint8_t> serialize(const Container& c) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u16(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(c.entries.size()));
  for (const auto& [name, e] : c.entries) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) put_u32(out, d);
    for (double v : e.data) put_f64(out, v);
  }
  return out;
}

Container deserialize(const std::uint8_t* bytes, std::size_t size) {
  Reader r{bytes, size};
  r.need(4);
  if (std::memcmp(r.p, kMagic, 4) != 0)
    throw BadMagic("container does not start with the expected magic");
  r.p += 4;
  r.remaining -= 4;
  std::uint16_t version = r.u16();
  if (version != kVersion)
    throw VersionMismatch("unsupported container version " +
                          std::to_string(version));
  std::uint32_t count = r.u32();
  Container c;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    std::uint32_t rank = r.u32();
    TensorEntry e;
    e.dims.resize(rank);
    for (auto& d : e.dims) d = r.u32();
    std::size_t n = e.element_count();
    e.data.resize(n);
    for (auto& v : e.data) v = r.f64();
    if (c.has(name))
      throw DuplicateName("entry '" + name + "' appears twice");
    c.entries.emplace_back(std::move(name), std::move(e));
  }
  return c;
}

void save_container(const Container& c, const std::string& path) {
  auto bytes = serialize(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContainerError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ContainerError("write to '" + path + "' failed");
}

Container load_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError("cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes.data(), bytes.size());
}

void save_pgm(const Eigen::MatrixXd& image, const std::string& path,
              double min_value, double range) {
  if (range <= 0.0) throw std::invalid_argument("pgm range must be positive");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContainerError("cannot open '" + path + "' for writing");
  out << "P5\n" << image.cols() << " " << image.rows() << "\n65535\n";
  for (Eigen::Index i = 0; i < image.rows(); ++i) {
    for (Eigen::Index j = 0; j < image.cols(); ++j) {
      double t = (image(i, j) - min_value) / range;
      if (t < 0.0) t = 0.0;
      if (t > 1.0) t = 1.0;
      auto v = static_cast<std::uint16_t>(t * 65535.0 + 0.5);
      // samples are big-endian per the format
      out.put(static_cast<char>(v >> 8));
      out.put(static_cast<char>(v & 0xff));
    }
  }
  if (!out) throw ContainerError("write to '" + path + "' failed");
}

}  // namespace lama
