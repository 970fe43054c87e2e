// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "ncvc/pipeline.hpp"

namespace ncvc::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

corpus::CorpusManifest load_training_manifest(const RunConfig& cfg) {
  auto manifest = corpus::load_manifest(cfg.corpus_manifest);
  if (!cfg.exclude_speakers.empty()) {
    std::vector<corpus::Utterance> kept;
    for (auto& u : manifest.entries) {
      const bool excluded =
          std::find(cfg.exclude_speakers.begin(), cfg.exclude_speakers.end(),
                    u.speaker_id) != cfg.exclude_speakers.end();
      if (!excluded) kept.push_back(std::move(u));
    }
    manifest.entries = std::move(kept);
  }
  return manifest;
}

std::string format_loss(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

uint64_t fnv1a_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot hash " + path);
  uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!is) break;
  }
  return h;
}

std::string join_speakers(const std::vector<std::string>& speakers) {
  std::string out;
  for (const auto& s : speakers) {
    if (!out.empty()) out.push_back(',');
    out += s;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stage 1
// ---------------------------------------------------------------------------

std::string train_ncwavegan(const RunConfig& cfg, const std::string& out_dir,
                            const std::string& resume_from) {
  DirLock lock(out_dir);
  const auto manifest = load_training_manifest(cfg);

  corpus::PairReport pair_report;
  const auto pair_refs = corpus::make_training_pairs(manifest, &pair_report);
  if (pair_report.skipped_missing_twin > 0)
    throw std::runtime_error(
        "missing twins: " + std::to_string(pair_report.skipped_missing_twin) +
        " utterances lack an opposite-attribute pair");
  if (pair_refs.empty()) throw std::runtime_error("no training pairs");

  std::vector<corpus::TrainingPair> pairs;
  pairs.resize(pair_refs.size());
  parallel_for(static_cast<int>(pair_refs.size()), [&](int i) {
    pairs[static_cast<size_t>(i)] = corpus::load_pair(manifest, pair_refs[i]);
  });

  wavegan::WaveganModel model(cfg.ncwavegan, cfg.seed);
  Rng rng(cfg.seed + 1);
  long start_step = 0;
  if (!resume_from.empty()) {
    const auto meta = nn::load_checkpoint(resume_from, model.params(), true);
    start_step = meta.step;
    if (meta.strings.count("train_rng"))
      rng.deserialize(meta.strings.at("train_rng"));
  }

  const json config_echo = cfg.to_json();
  const std::string hash = nn::config_hash(config_echo);
  auto save = [&](long step, const std::string& name) {
    nn::CheckpointMeta meta;
    meta.model_kind = "ncwavegan";
    meta.step = step;
    meta.config = cfg.ncwavegan.to_json();
    meta.config_hash = hash;
    meta.strings["train_rng"] = rng.serialize();
    meta.strings["run_config"] = config_echo.dump();
    save_checkpoint((fs::path(out_dir) / name).string(), model.params(), meta,
                    true);
  };

  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::string csv;
  csv += "step,l_recon,l_kl,l_pitch,d_loss,g_loss,feat_match,wav_l1,total\n";
  int consecutive_divergence = 0;
  wavegan::StepReport last;
  for (long step = start_step; step < cfg.steps; ++step) {
    const size_t slot = static_cast<size_t>(step) % pairs.size();
    if (slot == 0) {  // reshuffle each epoch
      for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1],
                  order[static_cast<size_t>(rng.uniform_int(
                      0, static_cast<int>(i) - 1))]);
    }
    const auto report = model.training_step(pairs[order[slot]], rng);
    if (report.diverged) {
      if (++consecutive_divergence >= 10)
        throw std::runtime_error("divergence: 10 consecutive non-finite steps");
      continue;
    }
    consecutive_divergence = 0;
    last = report;
    csv += std::to_string(step) + "," + format_loss(report.l_recon) + "," +
           format_loss(report.l_kl) + "," + format_loss(report.l_pitch) + "," +
           format_loss(report.d_loss) + "," + format_loss(report.g_loss) +
           "," + format_loss(report.feat_match) + "," +
           format_loss(report.wav_l1) + "," + format_loss(report.total) + "\n";
    if ((step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps)
      save(step + 1, "step_" + std::to_string(step + 1));
  }
  save(cfg.steps, "final");

  std::ofstream(fs::path(out_dir) / "loss_curve.csv", std::ios::trunc) << csv;
  json summary = {{"steps", cfg.steps},
                  {"pairs", pairs.size()},
                  {"final_l_recon", last.l_recon},
                  {"final_total", last.total},
                  {"loss_curve", "loss_curve.csv"}};
  std::ofstream(fs::path(out_dir) / "train_report.json", std::ios::trunc)
      << summary.dump(2) << "\n";
  return (fs::path(out_dir) / "final").string();
}

// ---------------------------------------------------------------------------
// Stage 2
// ---------------------------------------------------------------------------

std::string train_flowvc(const RunConfig& cfg,
                         const std::string& ncwavegan_ckpt,
                         const std::string& out_dir) {
  DirLock lock(out_dir);
  const auto manifest = load_training_manifest(cfg);
  auto loaded = load_wavegan_checkpoint(ncwavegan_ckpt);
  const wavegan::WaveganModel& encoder = *loaded.model;  // frozen

  // Utterances with PPGs; speaker table from the training set.
  std::vector<const corpus::Utterance*> utts;
  std::vector<std::string> speakers;
  for (const auto& u : manifest.entries) {
    if (!u.ppg_path) continue;
    utts.push_back(&u);
    speakers.push_back(u.speaker_id);
  }
  if (utts.empty()) throw std::runtime_error("no utterances with PPGs");

  flow::FlowConfig flow_cfg = cfg.flowvc;
  flow_cfg.latent_channels = encoder.config().latent_channels;
  flow_cfg.n_ppg_classes =
      corpus::load_ppg(manifest.resolve_ppg(*utts[0])).classes();
  flow::FlowModel model(flow_cfg, speakers, cfg.seed + 2);

  // Extract z (posterior means by default) and PPGs once, in parallel.
  struct Item {
    Eigen::MatrixXd z;
    corpus::PPGSequence ppg;
    std::string speaker;
    std::string id;
    bool heldout = false;
  };
  std::vector<Item> items(utts.size());
  Rng sample_rng(cfg.seed + 3);
  std::vector<uint64_t> sample_seeds(utts.size());
  for (auto& s : sample_seeds) s = sample_rng.next_u64();
  parallel_for(static_cast<int>(utts.size()), [&](int i) {
    const auto& u = *utts[static_cast<size_t>(i)];
    Item& item = items[static_cast<size_t>(i)];
    const auto wav = corpus::load_wav(manifest.resolve_wav(u));
    const auto post = encoder.encode(wav);
    if (cfg.flow_train_on_samples) {
      Rng r(sample_seeds[static_cast<size_t>(i)]);
      item.z = encoder.sample_latent(post, &r);
    } else {
      item.z = encoder.sample_latent(post, nullptr);
    }
    item.ppg = corpus::load_ppg(manifest.resolve_ppg(u));
    if (std::abs(item.z.cols() - item.ppg.frames()) > 1)
      throw std::runtime_error("frame mismatch ppg vs z for utterance " + u.id);
    item.speaker = u.speaker_id;
    item.id = u.id;
    item.heldout = (i % cfg.holdout_every) == cfg.holdout_every - 1;
  });

  std::vector<size_t> train_idx, held_idx;
  for (size_t i = 0; i < items.size(); ++i)
    (items[i].heldout ? held_idx : train_idx).push_back(i);
  if (train_idx.empty()) throw std::runtime_error("no flow training items");

  auto heldout_nll = [&]() {
    if (held_idx.empty()) return 0.0;
    double acc = 0.0;
    for (size_t i : held_idx)
      acc += model.nll(items[i].z, items[i].ppg, items[i].speaker);
    return acc / static_cast<double>(held_idx.size());
  };

  const json config_echo = cfg.to_json();
  Rng rng(cfg.seed + 4);
  std::vector<size_t> order = train_idx;
  std::string csv = "step,train_nll,heldout_nll\n";
  double last_heldout = 0.0;

  const long eval_every = std::max<long>(1, cfg.flow_steps / 10);
  for (long step = 0; step < cfg.flow_steps; ++step) {
    const size_t slot = static_cast<size_t>(step) % order.size();
    if (slot == 0) {
      for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1],
                  order[static_cast<size_t>(rng.uniform_int(
                      0, static_cast<int>(i) - 1))]);
    }
    const Item& item = items[order[slot]];
    const auto report = model.training_step(item.z, item.ppg, item.speaker);
    if (report.diverged)
      throw std::runtime_error("divergence in flow training at step " +
                               std::to_string(step));
    if ((step + 1) % eval_every == 0 || step + 1 == cfg.flow_steps) {
      last_heldout = heldout_nll();
      csv += std::to_string(step + 1) + "," + format_loss(report.nll) + "," +
             format_loss(last_heldout) + "\n";
    }
  }

  nn::CheckpointMeta meta;
  meta.model_kind = "flowvc";
  meta.step = cfg.flow_steps;
  meta.config = flow_cfg.to_json();
  meta.config_hash = nn::config_hash(config_echo);
  meta.strings["speakers"] = join_speakers(model.speakers().speakers());
  meta.strings["ddi_done"] = model.ddi_done() ? "1" : "0";
  meta.strings["run_config"] = config_echo.dump();
  meta.strings["heldout_nll"] = format_loss(last_heldout);
  const std::string final_dir = (fs::path(out_dir) / "final").string();
  save_checkpoint(final_dir, model.params(), meta, true);
  std::ofstream(fs::path(out_dir) / "flow_loss.csv", std::ios::trunc) << csv;
  return final_dir;
}

// ---------------------------------------------------------------------------
// Conversion (the 3-step inference procedure's step 3)
// ---------------------------------------------------------------------------

ConvertResult convert(const std::string& source, const std::string& speaker,
                      const std::string& ncwavegan_ckpt,
                      const std::string& flow_ckpt, const std::string& out_wav,
                      double temperature, uint64_t seed,
                      AttributeVector attribute) {
  std::string ppg_path = source;
  if (source.size() > 4 && source.substr(source.size() - 4) == ".wav") {
    ppg_path = source.substr(0, source.size() - 4) + ".ppg";
    if (!fs::exists(ppg_path))
      throw std::runtime_error("no PPG sidecar for " + source +
                               " (expected " + ppg_path + ")");
  }
  auto ppg = corpus::load_ppg(ppg_path);
  auto vocoder = load_wavegan_checkpoint(ncwavegan_ckpt);
  auto conv = load_flow_checkpoint(flow_ckpt);

  Rng rng(seed);
  const Eigen::MatrixXd z =
      conv.model->convert_sample(ppg, speaker, temperature, &rng);
  const auto wav = vocoder.model->vocode(z, attribute);
  if (!fs::path(out_wav).parent_path().empty())
    fs::create_directories(fs::path(out_wav).parent_path());
  corpus::save_wav(wav, out_wav);

  ConvertResult result;
  result.output_wav = out_wav;
  result.run_manifest = out_wav + ".json";
  char hash_buf[17];
  std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                static_cast<unsigned long long>(fnv1a_file(out_wav)));
  json run = {{"source", source},
              {"ppg", ppg_path},
              {"speaker", speaker},
              {"attribute", attribute.is_clean() ? "clean" : "noisy"},
              {"temperature", temperature},
              {"seed", seed},
              {"ncwavegan_ckpt", ncwavegan_ckpt},
              {"flow_ckpt", flow_ckpt},
              {"output", out_wav},
              {"output_fnv1a", hash_buf},
              {"frames", ppg.frames()},
              {"samples", wav.size()}};
  std::ofstream(result.run_manifest, std::ios::trunc) << run.dump(2) << "\n";
  return result;
}

}  // namespace ncvc::pipeline
