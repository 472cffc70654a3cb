#pragma once

// Flat binary checkpoints: named float32 arrays plus named scalar and
// string metadata. Models serialize through their ParamRefs, so a load
// fails loudly on any missing tensor, size mismatch, or version skew
// rather than silently running with half-initialized weights.

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "picd/nn.hpp"

namespace picd {

struct Checkpoint {
  std::map<std::string, std::vector<float>> tensors;
  std::map<std::string, double> scalars;
  std::map<std::string, std::string> strings;

  template <typename T>
  void put_params(const nn::ParamRefs<T>& refs) {
    for (const auto& r : refs) {
      std::vector<float>& v = tensors[r.name];
      v.resize(size_t(r.size));
      for (Eigen::Index i = 0; i < r.size; ++i) v[size_t(i)] = float(r.w[i]);
    }
  }

  template <typename T>
  void get_params(nn::ParamRefs<T>& refs) const {
    for (auto& r : refs) {
      const auto it = tensors.find(r.name);
      if (it == tensors.end())
        throw std::runtime_error("checkpoint: missing tensor " + r.name);
      if (Eigen::Index(it->second.size()) != r.size)
        throw std::runtime_error("checkpoint: size mismatch for " + r.name);
      for (Eigen::Index i = 0; i < r.size; ++i) r.w[i] = T(it->second[size_t(i)]);
    }
  }

  double scalar(const std::string& name) const {
    const auto it = scalars.find(name);
    if (it == scalars.end())
      throw std::runtime_error("checkpoint: missing scalar " + name);
    return it->second;
  }

  std::string str(const std::string& name) const {
    const auto it = strings.find(name);
    if (it == strings.end())
      throw std::runtime_error("checkpoint: missing string " + name);
    return it->second;
  }

  // Throws when the stored value disagrees; models call this before
  // loading weights so stale files are rejected up front.
  void expect(const std::string& name, double value) const {
    if (scalar(name) != value)
      throw std::runtime_error("checkpoint: " + name + " mismatch (file has " +
                               std::to_string(scalar(name)) + ", model wants " +
                               std::to_string(value) + ")");
  }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

inline void Checkpoint::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  auto put32 = [&f](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  auto put_str = [&](const std::string& s) {
    put32(uint32_t(s.size()));
    f.write(s.data(), std::streamsize(s.size()));
  };
  f.write("PICDCKPT", 8);
  put32(1);  // format version
  put32(uint32_t(tensors.size()));
  for (const auto& [name, data] : tensors) {
    put_str(name);
    put32(uint32_t(data.size()));
    f.write(reinterpret_cast<const char*>(data.data()),
            std::streamsize(data.size() * sizeof(float)));
  }
  put32(uint32_t(scalars.size()));
  for (const auto& [name, v] : scalars) {
    put_str(name);
    f.write(reinterpret_cast<const char*>(&v), 8);
  }
  put32(uint32_t(strings.size()));
  for (const auto& [name, v] : strings) {
    put_str(name);
    put_str(v);
  }
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::string(magic, 8) != "PICDCKPT")
    throw std::runtime_error("checkpoint: bad magic in " + path);
  auto get32 = [&f, &path]() {
    uint32_t v;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (!f) throw std::runtime_error("checkpoint: truncated " + path);
    return v;
  };
  auto get_str = [&]() {
    const uint32_t n = get32();
    std::string s(n, '\0');
    f.read(s.data(), n);
    if (!f) throw std::runtime_error("checkpoint: truncated " + path);
    return s;
  };
  if (get32() != 1) throw std::runtime_error("checkpoint: unsupported format version");
  Checkpoint c;
  const uint32_t nt = get32();
  for (uint32_t i = 0; i < nt; ++i) {
    const std::string name = get_str();
    std::vector<float> data(get32());
    f.read(reinterpret_cast<char*>(data.data()),
           std::streamsize(data.size() * sizeof(float)));
    if (!f) throw std::runtime_error("checkpoint: truncated " + path);
    c.tensors.emplace(name, std::move(data));
  }
  const uint32_t ns = get32();
  for (uint32_t i = 0; i < ns; ++i) {
    const std::string name = get_str();
    double v;
    f.read(reinterpret_cast<char*>(&v), 8);
    if (!f) throw std::runtime_error("checkpoint: truncated " + path);
    c.scalars.emplace(name, v);
  }
  const uint32_t nstr = get32();
  for (uint32_t i = 0; i < nstr; ++i) {
    const std::string name = get_str();
    c.strings.emplace(name, get_str());
  }
  return c;
}

}  // namespace picd
