// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ncvc/nn/checkpoint.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace ncvc::nn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_raw(const fs::path& path, const void* data, size_t bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!os) throw std::runtime_error("short write " + path.string());
}

std::vector<char> read_raw(const fs::path& path, size_t bytes) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::vector<char> buf(bytes);
  is.read(buf.data(), static_cast<std::streamsize>(bytes));
  if (static_cast<size_t>(is.gcount()) != bytes)
    throw std::runtime_error("truncated array file " + path.string());
  return buf;
}

void write_mat_f32(const fs::path& path, const Mat& m) {
  std::vector<float> buf(static_cast<size_t>(m.size()));
  for (long i = 0; i < m.size(); ++i)
    buf[static_cast<size_t>(i)] = static_cast<float>(m.data()[i]);
  write_raw(path, buf.data(), buf.size() * sizeof(float));
}

void write_mat_f64(const fs::path& path, const Mat& m) {
  write_raw(path, m.data(), static_cast<size_t>(m.size()) * sizeof(double));
}

void read_mat_f32(const fs::path& path, Mat& m) {
  auto buf = read_raw(path, static_cast<size_t>(m.size()) * sizeof(float));
  const float* src = reinterpret_cast<const float*>(buf.data());
  for (long i = 0; i < m.size(); ++i) m.data()[i] = src[i];
}

void read_mat_f64(const fs::path& path, Mat& m) {
  auto buf = read_raw(path, static_cast<size_t>(m.size()) * sizeof(double));
  const double* src = reinterpret_cast<const double*>(buf.data());
  for (long i = 0; i < m.size(); ++i) m.data()[i] = src[i];
}

std::string array_file(const char* prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04d.bin", prefix, index);
  return buf;
}

}  // namespace

std::string config_hash(const json& config) {
  const std::string dump = config.dump();
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const std::string& dir, const ParamStore& params,
                     const CheckpointMeta& meta, bool with_train_state) {
  fs::create_directories(dir);
  json index;
  index["format"] = "ncvc-checkpoint-v1";
  index["model_kind"] = meta.model_kind;
  index["step"] = meta.step;
  index["config_hash"] = meta.config_hash;
  index["config"] = meta.config;
  index["strings"] = meta.strings;
  index["has_train_state"] = with_train_state;

  json arrays = json::array();
  int ai = 0;
  for (const auto& p : params.all()) {
    const std::string file = array_file("a", ai++);
    write_mat_f32(fs::path(dir) / file, p->value);
    arrays.push_back({{"name", p->name},
                      {"rows", p->value.rows()},
                      {"cols", p->value.cols()},
                      {"dtype", "f32"},
                      {"file", file}});
  }
  index["params"] = arrays;

  if (with_train_state) {
    json tarrays = json::array();
    int ti = 0;
    for (const auto& p : params.all()) {
      const std::string vfile = array_file("t", ti++);
      write_mat_f64(fs::path(dir) / vfile, p->value);
      tarrays.push_back({{"name", p->name},
                         {"kind", "value"},
                         {"dtype", "f64"},
                         {"file", vfile},
                         {"adam_steps", p->adam_steps}});
      if (p->m.size() != 0) {
        const std::string mfile = array_file("t", ti++);
        const std::string ffile = array_file("t", ti++);
        write_mat_f64(fs::path(dir) / mfile, p->m);
        write_mat_f64(fs::path(dir) / ffile, p->v);
        tarrays.push_back({{"name", p->name},
                           {"kind", "adam_m"},
                           {"dtype", "f64"},
                           {"file", mfile}});
        tarrays.push_back({{"name", p->name},
                           {"kind", "adam_v"},
                           {"dtype", "f64"},
                           {"file", ffile}});
      }
    }
    index["train_state"] = tarrays;
  }

  // Write index last so a finished directory always has a complete set.
  std::ofstream os(fs::path(dir) / "index.json", std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint index in " + dir);
  os << index.dump(2) << "\n";
}

CheckpointMeta peek_checkpoint(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "index.json");
  if (!is) throw std::runtime_error("no checkpoint index in " + dir);
  json index = json::parse(is);
  CheckpointMeta meta;
  meta.model_kind = index.at("model_kind").get<std::string>();
  meta.step = index.at("step").get<long>();
  meta.config_hash = index.at("config_hash").get<std::string>();
  meta.config = index.at("config");
  meta.strings =
      index.at("strings").get<std::map<std::string, std::string>>();
  meta.has_train_state = index.value("has_train_state", false);
  return meta;
}

CheckpointMeta load_checkpoint(const std::string& dir, ParamStore& params,
                               bool load_train_state) {
  std::ifstream is(fs::path(dir) / "index.json");
  if (!is) throw std::runtime_error("no checkpoint index in " + dir);
  json index = json::parse(is);
  CheckpointMeta meta = peek_checkpoint(dir);

  size_t matched = 0;
  for (const auto& a : index.at("params")) {
    const std::string name = a.at("name").get<std::string>();
    Parameter* p = params.find(name);
    if (!p) throw std::runtime_error("checkpoint has unknown parameter " + name);
    if (p->value.rows() != a.at("rows").get<long>() ||
        p->value.cols() != a.at("cols").get<long>())
      throw std::runtime_error("shape mismatch for parameter " + name);
    read_mat_f32(fs::path(dir) / a.at("file").get<std::string>(), p->value);
    ++matched;
  }
  if (matched != params.all().size())
    throw std::runtime_error("checkpoint missing parameters");

  if (load_train_state && meta.has_train_state) {
    for (const auto& a : index.at("train_state")) {
      const std::string name = a.at("name").get<std::string>();
      Parameter* p = params.find(name);
      if (!p) throw std::runtime_error("train state for unknown param " + name);
      const std::string kind = a.at("kind").get<std::string>();
      const fs::path file = fs::path(dir) / a.at("file").get<std::string>();
      if (kind == "value") {
        read_mat_f64(file, p->value);
      } else if (kind == "adam_m") {
        p->m.resize(p->value.rows(), p->value.cols());
        read_mat_f64(file, p->m);
      } else if (kind == "adam_v") {
        p->v.resize(p->value.rows(), p->value.cols());
        read_mat_f64(file, p->v);
      }
      if (a.contains("adam_steps"))
        p->adam_steps = a.at("adam_steps").get<long>();
    }
  }
  return meta;
}

}  // namespace ncvc::nn
