#pragma once

// Flat binary container of named float32 arrays plus string metadata.
// Layout is documented in docs/container_format.md.

#include "c2t/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace c2t {

inline constexpr char kContainerMagic[8] = {'C', '2', 'T', 'A', 'R', 'R', 'A', 'Y'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;
};

class Container {
 public:
  std::map<std::string, std::string> metadata;

  void add(const std::string& name, const nn::Matrix& m);
  void add(NamedArray array);
  bool contains(const std::string& name) const;
  const NamedArray& get(const std::string& name) const;
  // Widens the stored float32 values; requires a rank-2 array.
  nn::Matrix matrix(const std::string& name) const;
  const std::vector<NamedArray>& arrays() const { return arrays_; }

  const std::string& meta(const std::string& key) const;

 private:
  std::vector<NamedArray> arrays_;
  std::map<std::string, std::size_t> index_;
};

void write_container(std::ostream& out, const Container& c);
Container read_container(std::istream& in);

void save_container(const std::filesystem::path& path, const Container& c);
Container load_container(const std::filesystem::path& path);

}  // namespace c2t
