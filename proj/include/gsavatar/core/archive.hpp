#pragma once

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <vector>

#include "gsavatar/core/tensor.hpp"

namespace gsavatar {

using json = nlohmann::json;

// Single-file container for named numeric arrays plus a JSON metadata block.
// Layout: magic, u64 manifest length, manifest JSON, raw little-endian blobs.
// Entries are serialized sorted by name and the manifest is emitted with
// sorted keys, so equal content always produces identical bytes.
class Archive {
 public:
  static constexpr char kMagic[8] = {'G', 'S', 'A', 'R', '0', '1', '\n', '\0'};

  struct Entry {
    std::string dtype;  // f64 | f32 | i64 | u8
    std::vector<long> shape;
    std::vector<char> data;
  };

  json meta = json::object();

  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
  }

  void add_f64(const std::string& name, const std::vector<real>& v, std::vector<long> shape) {
    put(name, "f64", std::move(shape), v.data(), v.size() * sizeof(real));
  }

  void add_tensor(const std::string& name, const Tensor& t) { add_f64(name, t.v, t.shape); }

  void add_f32(const std::string& name, const std::vector<float>& v, std::vector<long> shape) {
    put(name, "f32", std::move(shape), v.data(), v.size() * sizeof(float));
  }

  void add_i64(const std::string& name, const std::vector<int64_t>& v, std::vector<long> shape) {
    put(name, "i64", std::move(shape), v.data(), v.size() * sizeof(int64_t));
  }

  void add_u8(const std::string& name, const std::vector<uint8_t>& v, std::vector<long> shape) {
    put(name, "u8", std::move(shape), v.data(), v.size());
  }

  std::vector<real> get_f64(const std::string& name) const {
    const Entry& e = at(name, "f64");
    std::vector<real> out(e.data.size() / sizeof(real));
    std::memcpy(out.data(), e.data.data(), e.data.size());
    return out;
  }

  Tensor get_tensor(const std::string& name) const {
    const Entry& e = at(name, "f64");
    Tensor t(e.shape);
    GS_CHECK(size_t(t.numel()) * sizeof(real) == e.data.size(), "tensor size mismatch: " + name);
    std::memcpy(t.v.data(), e.data.data(), e.data.size());
    return t;
  }

  std::vector<float> get_f32(const std::string& name) const {
    const Entry& e = at(name, "f32");
    std::vector<float> out(e.data.size() / sizeof(float));
    std::memcpy(out.data(), e.data.data(), e.data.size());
    return out;
  }

  std::vector<int64_t> get_i64(const std::string& name) const {
    const Entry& e = at(name, "i64");
    std::vector<int64_t> out(e.data.size() / sizeof(int64_t));
    std::memcpy(out.data(), e.data.data(), e.data.size());
    return out;
  }

  std::vector<uint8_t> get_u8(const std::string& name) const {
    const Entry& e = at(name, "u8");
    std::vector<uint8_t> out(e.data.size());
    std::memcpy(out.data(), e.data.data(), e.data.size());
    return out;
  }

  std::vector<long> shape(const std::string& name) const {
    auto it = entries_.find(name);
    GS_CHECK(it != entries_.end(), "archive: missing entry " + name);
    return it->second.shape;
  }

  void save(const std::string& path) const {
    json manifest;
    manifest["meta"] = meta;
    manifest["arrays"] = json::array();
    std::vector<std::string> sorted = names();
    std::sort(sorted.begin(), sorted.end());
    uint64_t offset = 0;
    for (const auto& name : sorted) {
      const Entry& e = entries_.at(name);
      json a;
      a["name"] = name;
      a["dtype"] = e.dtype;
      a["shape"] = e.shape;
      a["offset"] = offset;
      a["bytes"] = e.data.size();
      manifest["arrays"].push_back(a);
      offset += e.data.size();
    }
    std::string mstr = manifest.dump();
    std::ofstream f(path, std::ios::binary);
    GS_CHECK(f.good(), "archive: cannot open for write: " + path);
    f.write(kMagic, 8);
    uint64_t mlen = mstr.size();
    f.write(reinterpret_cast<const char*>(&mlen), 8);
    f.write(mstr.data(), long(mstr.size()));
    for (const auto& name : sorted) {
      const Entry& e = entries_.at(name);
      f.write(e.data.data(), long(e.data.size()));
    }
    GS_CHECK(f.good(), "archive: write failed: " + path);
  }

  static Archive load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    GS_CHECK(f.good(), "archive: cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    GS_CHECK(f.good() && std::memcmp(magic, kMagic, 8) == 0, "archive: bad magic: " + path);
    uint64_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), 8);
    std::string mstr(mlen, '\0');
    f.read(mstr.data(), long(mlen));
    GS_CHECK(f.good(), "archive: truncated manifest: " + path);
    json manifest = json::parse(mstr);
    Archive ar;
    ar.meta = manifest.value("meta", json::object());
    uint64_t base = 16 + mlen;
    for (const auto& a : manifest["arrays"]) {
      Entry e;
      e.dtype = a["dtype"].get<std::string>();
      e.shape = a["shape"].get<std::vector<long>>();
      uint64_t off = a["offset"].get<uint64_t>();
      uint64_t bytes = a["bytes"].get<uint64_t>();
      e.data.resize(bytes);
      f.seekg(std::streamoff(base + off));
      f.read(e.data.data(), long(bytes));
      GS_CHECK(f.good(), "archive: truncated blob: " + path);
      ar.entries_[a["name"].get<std::string>()] = std::move(e);
    }
    return ar;
  }

 private:
  std::map<std::string, Entry> entries_;

  void put(const std::string& name, const char* dtype, std::vector<long> shape, const void* src,
           size_t bytes) {
    Entry e;
    e.dtype = dtype;
    e.shape = std::move(shape);
    e.data.resize(bytes);
    std::memcpy(e.data.data(), src, bytes);
    entries_[name] = std::move(e);
  }

  const Entry& at(const std::string& name, const char* dtype) const {
    auto it = entries_.find(name);
    GS_CHECK(it != entries_.end(), "archive: missing entry " + name);
    GS_CHECK(it->second.dtype == dtype,
             "archive: dtype mismatch for " + name + " (have " + it->second.dtype + ")");
    return it->second;
  }
};

}  // namespace gsavatar
