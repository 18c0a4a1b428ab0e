#include "c2t/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace c2t {

namespace {

template <class T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw Error("container: truncated file");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get_le<std::uint32_t>(in);
  if (n > (1u << 24)) throw Error("container: implausible string length");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw Error("container: truncated file");
  return s;
}

}  // namespace

void Container::add(const std::string& name, const nn::Matrix& m) {
  NamedArray a;
  a.name = name;
  a.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  a.data.resize(static_cast<std::size_t>(m.size()));
  for (nn::Index i = 0; i < m.size(); ++i) a.data[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  add(std::move(a));
}

void Container::add(NamedArray array) {
  std::uint64_t n = 1;
  for (auto d : array.shape) n *= d;
  if (n != array.data.size()) throw Error("container: array '" + array.name + "' size does not match shape");
  if (index_.count(array.name)) throw Error("container: duplicate array '" + array.name + "'");
  index_[array.name] = arrays_.size();
  arrays_.push_back(std::move(array));
}

bool Container::contains(const std::string& name) const { return index_.count(name) != 0; }

const NamedArray& Container::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("container: missing array '" + name + "'");
  return arrays_[it->second];
}

nn::Matrix Container::matrix(const std::string& name) const {
  const auto& a = get(name);
  if (a.shape.size() != 2) throw Error("container: array '" + name + "' is not rank 2");
  nn::Matrix m(static_cast<nn::Index>(a.shape[0]), static_cast<nn::Index>(a.shape[1]));
  for (nn::Index i = 0; i < m.size(); ++i) m.data()[i] = a.data[static_cast<std::size_t>(i)];
  return m;
}

const std::string& Container::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) throw Error("container: missing metadata key '" + key + "'");
  return it->second;
}

void write_container(std::ostream& out, const Container& c) {
  out.write(kContainerMagic, sizeof(kContainerMagic));
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.metadata.size()));
  for (const auto& [k, v] : c.metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.arrays().size()));
  for (const auto& a : c.arrays()) {
    put_string(out, a.name);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put_le<std::uint64_t>(out, d);
    for (float f : a.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  if (!out) throw Error("container: write failed");
}

Container read_container(std::istream& in) {
  char magic[sizeof(kContainerMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kContainerMagic, sizeof(magic)) != 0) {
    throw Error("container: bad magic");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kContainerVersion) {
    throw Error("container: unsupported version " + std::to_string(version));
  }
  Container c;
  const auto nmeta = get_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    auto k = get_string(in);
    c.metadata[k] = get_string(in);
  }
  const auto narrays = get_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < narrays; ++i) {
    NamedArray a;
    a.name = get_string(in);
    const auto ndim = get_le<std::uint32_t>(in);
    if (ndim > 8) throw Error("container: implausible rank");
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      a.shape.push_back(get_le<std::uint64_t>(in));
      n *= a.shape.back();
    }
    if (n > (1ull << 32)) throw Error("container: implausible array size");
    a.data.resize(n);
    for (auto& f : a.data) f = std::bit_cast<float>(get_le<std::uint32_t>(in));
    c.add(std::move(a));
  }
  return c;
}

void save_container(const std::filesystem::path& path, const Container& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_container(out, c);
}

Container load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_container(in);
}

}  // namespace c2t
