#pragma once

// Binary tensor archive used for checkpoints and backbone weight files:
// a magic header with a format version, a JSON metadata blob, and a list of
// named double-precision matrices.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "d2e2s/autograd.hpp"
#include "d2e2s/common.hpp"
#include "d2e2s/nn.hpp"

namespace d2e2s {

class TensorArchive {
 public:
  static constexpr char kMagic[8] = {'D', '2', 'E', '2', 'S', 'A', 'R', 1};

  nlohmann::json meta = nlohmann::json::object();

  void add(const std::string& name, const ag::Mat& m) {
    tensors_.emplace_back(name, m);
  }

  const std::vector<std::pair<std::string, ag::Mat>>& tensors() const {
    return tensors_;
  }

  const ag::Mat* find(const std::string& name) const {
    for (const auto& [n, m] : tensors_)
      if (n == name) return &m;
    return nullptr;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const std::string meta_str = meta.dump();
    write_u64(out, meta_str.size());
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    write_u64(out, tensors_.size());
    for (const auto& [name, m] : tensors_) {
      write_u32(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_i64(out, m.rows());
      write_i64(out, m.cols());
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
    if (!out) throw Error("write failed for " + path.string());
  }

  static TensorArchive load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, 7) != 0)
      throw CheckpointVersionMismatchError(path.string() +
                                           " is not a tensor archive");
    if (magic[7] != kMagic[7])
      throw CheckpointVersionMismatchError(
          path.string() + " has format version " +
          std::to_string(static_cast<int>(magic[7])) + ", expected " +
          std::to_string(static_cast<int>(kMagic[7])));
    TensorArchive a;
    const std::uint64_t meta_len = read_u64(in);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw Error("truncated archive " + path.string());
    try {
      a.meta = nlohmann::json::parse(meta_str);
    } catch (const nlohmann::json::exception& e) {
      throw Error("bad archive metadata: " + std::string(e.what()));
    }
    const std::uint64_t count = read_u64(in);
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint32_t name_len = read_u32(in);
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      const std::int64_t rows = read_i64(in);
      const std::int64_t cols = read_i64(in);
      if (!in || rows < 0 || cols < 0)
        throw Error("truncated archive " + path.string());
      ag::Mat m(rows, cols);
      in.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
      if (!in) throw Error("truncated archive " + path.string());
      a.tensors_.emplace_back(std::move(name), std::move(m));
    }
    return a;
  }

 private:
  static void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_i64(std::ofstream& out, std::int64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }
  static std::uint64_t read_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }
  static std::int64_t read_i64(std::ifstream& in) {
    std::int64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }

  std::vector<std::pair<std::string, ag::Mat>> tensors_;
};

inline void save_parameters(const nn::ParamRegistry& reg, TensorArchive& a) {
  for (const auto& [name, v] : reg.entries()) a.add(name, v.value());
}

// Copies archive tensors into same-named registry parameters. When prefix is
// non-empty only parameters under that prefix are touched, but every selected
// parameter must be present with the right shape.
inline int load_parameters(nn::ParamRegistry& reg, const TensorArchive& a,
                           const std::string& prefix = "") {
  int loaded = 0;
  for (const auto& [name, v] : reg.entries()) {
    if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
    const ag::Mat* m = a.find(name);
    if (m == nullptr)
      throw CheckpointVersionMismatchError("archive lacks parameter " + name);
    if (m->rows() != v.value().rows() || m->cols() != v.value().cols())
      throw CheckpointVersionMismatchError(
          "parameter " + name + " has shape " + std::to_string(m->rows()) +
          "x" + std::to_string(m->cols()) + ", model expects " +
          std::to_string(v.value().rows()) + "x" +
          std::to_string(v.value().cols()));
    ag::Var target = v;  // shallow copy shares the underlying node
    target.mutable_value() = *m;
    ++loaded;
  }
  return loaded;
}

}  // namespace d2e2s
