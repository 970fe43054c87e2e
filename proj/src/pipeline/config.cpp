// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "ncvc/pipeline.hpp"

namespace ncvc::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

json RunConfig::to_json() const {
  return {{"corpus_manifest", corpus_manifest},
          {"seed", seed},
          {"steps", steps},
          {"flow_steps", flow_steps},
          {"checkpoint_every", checkpoint_every},
          {"tiny", tiny},
          {"exclude_speakers", exclude_speakers},
          {"temperature", temperature},
          {"holdout_every", holdout_every},
          {"flow_train_on_samples", flow_train_on_samples},
          {"ncwavegan", ncwavegan.to_json()},
          {"flowvc", flowvc.to_json()}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  const json defaults = cfg.to_json();
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key))
      throw std::invalid_argument("unknown config field: " + key);

  cfg.tiny = j.value("tiny", false);
  if (cfg.tiny) {
    cfg.ncwavegan = wavegan::WaveganConfig::tiny();
    cfg.flowvc = flow::FlowConfig::tiny();
    cfg.steps = 600;
    cfg.flow_steps = 400;
    cfg.checkpoint_every = 300;
  }
  cfg.corpus_manifest = j.value("corpus_manifest", cfg.corpus_manifest);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.steps = j.value("steps", cfg.steps);
  cfg.flow_steps = j.value("flow_steps", cfg.flow_steps);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  cfg.exclude_speakers = j.value("exclude_speakers", cfg.exclude_speakers);
  cfg.temperature = j.value("temperature", cfg.temperature);
  cfg.holdout_every = j.value("holdout_every", cfg.holdout_every);
  cfg.flow_train_on_samples =
      j.value("flow_train_on_samples", cfg.flow_train_on_samples);
  if (j.contains("ncwavegan"))
    cfg.ncwavegan =
        wavegan::WaveganConfig::from_json(j.at("ncwavegan"), cfg.ncwavegan);
  if (j.contains("flowvc"))
    cfg.flowvc = flow::FlowConfig::from_json(j.at("flowvc"), cfg.flowvc);
  if (cfg.checkpoint_every <= 0)
    throw std::invalid_argument("invalid config field: checkpoint_every");
  if (cfg.holdout_every < 2)
    throw std::invalid_argument("invalid config field: holdout_every");
  if (cfg.temperature < 0.0 || cfg.temperature > 1.0)
    throw std::invalid_argument("invalid config field: temperature");
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config parse error: " + std::string(e.what()));
  }
  return from_json(j);
}

int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  n = std::min(n, 4);
  if (const char* env = std::getenv("NCVC_NUM_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

DirLock::DirLock(const std::string& dir) {
  fs::create_directories(dir);
  path_ = (fs::path(dir) / ".lock").string();
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw std::runtime_error("checkpoint directory is locked: " + dir);
  ::close(fd);
}

DirLock::~DirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

LoadedWavegan load_wavegan_checkpoint(const std::string& dir) {
  const auto meta = nn::peek_checkpoint(dir);
  if (meta.model_kind != "ncwavegan")
    throw std::runtime_error("checkpoint " + dir + " is not an ncwavegan model");
  LoadedWavegan out;
  const auto cfg = wavegan::WaveganConfig::from_json(meta.config);
  out.model = std::make_unique<wavegan::WaveganModel>(cfg, 0);
  out.meta = nn::load_checkpoint(dir, out.model->params(), false);
  return out;
}

LoadedFlow load_flow_checkpoint(const std::string& dir) {
  const auto meta = nn::peek_checkpoint(dir);
  if (meta.model_kind != "flowvc")
    throw std::runtime_error("checkpoint " + dir + " is not a flowvc model");
  LoadedFlow out;
  const auto cfg = flow::FlowConfig::from_json(meta.config);
  std::vector<std::string> speakers;
  {
    const auto it = meta.strings.find("speakers");
    if (it == meta.strings.end())
      throw std::runtime_error("flow checkpoint lacks a speaker table");
    std::string buf;
    for (char c : it->second) {
      if (c == ',') {
        if (!buf.empty()) speakers.push_back(buf);
        buf.clear();
      } else {
        buf.push_back(c);
      }
    }
    if (!buf.empty()) speakers.push_back(buf);
  }
  out.model = std::make_unique<flow::FlowModel>(cfg, speakers, 0);
  out.meta = nn::load_checkpoint(dir, out.model->params(), false);
  out.model->set_ddi_done(out.meta.strings.count("ddi_done")
                              ? out.meta.strings.at("ddi_done") == "1"
                              : true);
  return out;
}

}  // namespace ncvc::pipeline
