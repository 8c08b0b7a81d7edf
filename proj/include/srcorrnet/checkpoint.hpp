// Copyright 2026 srcorrnet authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Checkpoint container: a JSON index header followed by flat little-endian
// tensor records. Model weights are float32; training-state records may be
// stored as float64 so a resumed run continues the exact trajectory.

#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "srcorrnet/common.hpp"
#include "srcorrnet/tensor.hpp"

namespace srcorrnet {

struct CheckpointRecord {
  Shape shape;
  std::vector<double> data;
  bool f64 = false;
};

struct Checkpoint {
  std::map<std::string, CheckpointRecord> records;
  nlohmann::json extra;  // scalar state: step, epoch, rng, ...

  void put(const std::string& name, const Shape& shape, const std::vector<double>& data,
           bool f64 = false) {
    records[name] = CheckpointRecord{shape, data, f64};
  }

  const CheckpointRecord& get(const std::string& name) const {
    auto it = records.find(name);
    check(it != records.end(), "checkpoint: missing record " + name);
    return it->second;
  }
};

inline constexpr char kCkptMagic[8] = {'S', 'R', 'C', 'K', 'P', 'T', '0', '1'};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["version"] = 1;
  header["byte_order"] = "little";
  header["extra"] = ckpt.extra;
  header["records"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, rec] : ckpt.records) {
    nlohmann::json r;
    r["name"] = name;
    r["shape"] = rec.shape;
    r["dtype"] = rec.f64 ? "f64" : "f32";
    r["offset"] = offset;
    r["count"] = rec.data.size();
    header["records"].push_back(r);
    offset += rec.data.size() * (rec.f64 ? 8 : 4);
  }
  std::string hs = header.dump();
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "save_checkpoint: cannot open " + path);
  os.write(kCkptMagic, 8);
  uint64_t hlen = hs.size();
  os.write(reinterpret_cast<const char*>(&hlen), 8);
  os.write(hs.data(), std::streamsize(hs.size()));
  for (const auto& [name, rec] : ckpt.records) {
    if (rec.f64) {
      os.write(reinterpret_cast<const char*>(rec.data.data()),
               std::streamsize(rec.data.size() * 8));
    } else {
      std::vector<float> f(rec.data.begin(), rec.data.end());
      os.write(reinterpret_cast<const char*>(f.data()), std::streamsize(f.size() * 4));
    }
  }
  check(os.good(), "save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "load_checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  check(is.good() && std::memcmp(magic, kCkptMagic, 8) == 0,
        "load_checkpoint: bad magic in " + path);
  uint64_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  is.read(hs.data(), std::streamsize(hlen));
  check(is.good(), "load_checkpoint: truncated header");
  nlohmann::json header = nlohmann::json::parse(hs);
  Checkpoint ckpt;
  ckpt.extra = header.value("extra", nlohmann::json::object());
  for (const auto& r : header["records"]) {
    CheckpointRecord rec;
    rec.shape = r["shape"].get<Shape>();
    rec.f64 = r.value("dtype", "f32") == "f64";
    size_t count = r["count"].get<size_t>();
    rec.data.resize(count);
    if (rec.f64) {
      is.read(reinterpret_cast<char*>(rec.data.data()), std::streamsize(count * 8));
    } else {
      std::vector<float> f(count);
      is.read(reinterpret_cast<char*>(f.data()), std::streamsize(count * 4));
      std::copy(f.begin(), f.end(), rec.data.begin());
    }
    check(is.good(), "load_checkpoint: truncated data for " + r["name"].get<std::string>());
    ckpt.records[r["name"].get<std::string>()] = std::move(rec);
  }
  return ckpt;
}

inline void store_params(Checkpoint& ckpt, const ParamStore& ps, bool f64 = false) {
  for (const auto& [name, t] : ps.params) ckpt.put(name, t.shape(), t.val(), f64);
}

inline void load_params(const Checkpoint& ckpt, ParamStore& ps) {
  for (auto& [name, t] : ps.params) {
    const auto& rec = ckpt.get(name);
    check(rec.shape == t.shape(), "checkpoint: shape mismatch for " + name);
    t.val() = rec.data;
  }
}

}  // namespace srcorrnet
