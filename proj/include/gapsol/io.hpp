#pragma once

#include "gapsol/common.hpp"
#include "gapsol/hash.hpp"

#include "json.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace gapsol {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal that round-trips.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const fs::path& p, const std::string& data) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, p);
}

inline std::string file_hash(const fs::path& p) { return hex64(fnv1a64(read_file(p))); }

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(const std::vector<double>& row) {
    if (row.size() != header_.size()) throw std::invalid_argument("CsvTable: row width differs from header");
    rows_.push_back(row);
  }
  size_t rows() const { return rows_.size(); }

  std::string str() const {
    std::string s;
    for (size_t i = 0; i < header_.size(); ++i) s += (i ? "," : "") + header_[i];
    s += '\n';
    for (const auto& r : rows_) {
      for (size_t i = 0; i < r.size(); ++i) {
        if (i) s += ',';
        s += format_double(r[i]);
      }
      s += '\n';
    }
    return s;
  }

  void write(const fs::path& p) const { write_file(p, str()); }

  static std::pair<std::vector<std::string>, std::vector<std::vector<double>>> parse(const std::string& text) {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    size_t pos = 0;
    bool first = true;
    while (pos < text.size()) {
      size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(pos, end - pos);
      pos = end + 1;
      if (line.empty()) continue;
      std::vector<std::string> cells;
      size_t a = 0;
      while (true) {
        const size_t b = line.find(',', a);
        cells.push_back(line.substr(a, b == std::string::npos ? std::string::npos : b - a));
        if (b == std::string::npos) break;
        a = b + 1;
      }
      if (first) {
        header = cells;
        first = false;
        continue;
      }
      std::vector<double> r;
      for (const auto& c : cells) {
        double v = 0.0;
        const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
        if (res.ec != std::errc()) throw IoError("CSV: cannot parse '" + c + "'");
        r.push_back(v);
      }
      rows.push_back(r);
    }
    return {header, rows};
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

// Binary complex128 (little-endian, interleaved re/im) with a JSON sidecar
// "<path>.json" carrying the shape and any metadata.
inline void write_complex_array(const fs::path& p, const std::vector<cdouble>& data, json meta) {
  static_assert(std::endian::native == std::endian::little, "binary arrays assume a little-endian host");
  std::string bytes(data.size() * sizeof(cdouble), '\0');
  std::memcpy(bytes.data(), data.data(), bytes.size());
  write_file(p, bytes);
  meta["dtype"] = "complex128";
  meta["byte_order"] = "little";
  meta["count"] = data.size();
  meta["data_hash"] = hex64(fnv1a64(bytes));
  write_file(p.string() + ".json", meta.dump(2) + "\n");
}

inline std::pair<std::vector<cdouble>, json> read_complex_array(const fs::path& p) {
  const json meta = json::parse(read_file(p.string() + ".json"));
  const std::string bytes = read_file(p);
  if (meta.value("dtype", "") != "complex128") throw IoError(p.string() + ": sidecar dtype is not complex128");
  const size_t count = meta.at("count").get<size_t>();
  if (bytes.size() != count * sizeof(cdouble)) throw IoError(p.string() + ": size differs from sidecar count");
  std::vector<cdouble> data(count);
  std::memcpy(data.data(), bytes.data(), bytes.size());
  return {data, meta};
}

// Flat float64 array with sidecar {shape: [n1, n2]}, column-major (first index fastest).
inline void write_real_array(const fs::path& p, const Eigen::ArrayXXd& a, json meta = json::object()) {
  std::string bytes(static_cast<size_t>(a.size()) * sizeof(double), '\0');
  std::memcpy(bytes.data(), a.data(), bytes.size());
  write_file(p, bytes);
  meta["dtype"] = "float64";
  meta["byte_order"] = "little";
  meta["shape"] = {a.rows(), a.cols()};
  write_file(p.string() + ".json", meta.dump(2) + "\n");
}

inline Eigen::ArrayXXd read_real_array(const fs::path& p) {
  const json meta = json::parse(read_file(p.string() + ".json"));
  if (meta.value("dtype", "") != "float64") throw IoError(p.string() + ": sidecar dtype is not float64");
  const auto shape = meta.at("shape");
  const Eigen::Index n1 = shape.at(0).get<Eigen::Index>(), n2 = shape.at(1).get<Eigen::Index>();
  const std::string bytes = read_file(p);
  if (bytes.size() != static_cast<size_t>(n1 * n2) * sizeof(double)) throw IoError(p.string() + ": size differs from shape");
  Eigen::ArrayXXd a(n1, n2);
  std::memcpy(a.data(), bytes.data(), bytes.size());
  return a;
}

// Per-directory record of stage inputs and artifact hashes. No timestamps, so
// identical runs leave identical manifests.
class Manifest {
 public:
  explicit Manifest(fs::path dir) : dir_(std::move(dir)) {
    const fs::path p = dir_ / "manifest.json";
    if (fs::exists(p)) {
      try {
        data_ = json::parse(read_file(p));
      } catch (const json::exception&) {
        data_ = json::object();
      }
    }
    if (!data_.is_object()) data_ = json::object();
  }

  const fs::path& dir() const { return dir_; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  void set_header(const std::string& version, const std::string& inputs_hash, const json& inputs) {
    data_["toolkit"] = "gapsol";
    data_["version"] = version;
    data_["inputs_hash"] = inputs_hash;
    data_["inputs"] = inputs;
    if (!data_.contains("stages")) data_["stages"] = json::object();
  }

  // A stage is fresh when it was produced from the same stage key and all of
  // its artifacts still hash to the recorded values.
  bool fresh(const std::string& stage, const std::string& key) const {
    if (!data_.contains("stages") || !data_["stages"].contains(stage)) return false;
    const json& s = data_["stages"][stage];
    if (s.value("key", "") != key) return false;
    for (const auto& [name, h] : s.at("artifacts").items()) {
      const fs::path p = dir_ / name;
      if (!fs::exists(p) || file_hash(p) != h.get<std::string>()) return false;
    }
    return true;
  }

  void record(const std::string& stage, const std::string& key, const std::vector<std::string>& artifacts,
              json extra = json::object()) {
    json a = json::object();
    for (const auto& n : artifacts) a[n] = file_hash(dir_ / n);
    json s = json::object();
    s["key"] = key;
    s["artifacts"] = a;
    for (const auto& [k, v] : extra.items()) s[k] = v;
    if (!data_.contains("stages")) data_["stages"] = json::object();
    data_["stages"][stage] = s;
  }

  const json& stage(const std::string& stage) const { return data_.at("stages").at(stage); }
  bool has_stage(const std::string& stage) const { return data_.contains("stages") && data_["stages"].contains(stage); }
  std::string key(const std::string& stage) const { return has_stage(stage) ? this->stage(stage).value("key", "") : ""; }

  void save() const { write_file(dir_ / "manifest.json", data_.dump(2) + "\n"); }
  const json& data() const { return data_; }

 private:
  fs::path dir_;
  json data_ = json::object();
};

}  // namespace gapsol
