// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ncvc/pipeline.hpp"

using ncvc::pipeline::RunConfig;

namespace {

RunConfig load_config(const std::string& path, uint64_t* seed_override,
                      bool tiny_flag) {
  nlohmann::json j;
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config " + path);
    j = nlohmann::json::parse(is);
  } else {
    j = nlohmann::json::object();
  }
  if (tiny_flag) j["tiny"] = true;
  if (seed_override) j["seed"] = *seed_override;
  return RunConfig::from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-independent voice conversion: corpus building, two-stage "
               "training, conversion, evaluation and visualization"};
  app.require_subcommand(1);

  // ---- make-corpus
  auto* make_cmd = app.add_subcommand(
      "make-corpus", "Generate the synthetic paired clean/noisy desk corpus");
  int mc_speakers = 2, mc_utts = 4;
  uint64_t mc_seed = 0;
  std::string mc_out;
  double mc_lo = 5.0, mc_hi = 25.0;
  make_cmd->add_option("--speakers", mc_speakers, "Number of speakers");
  make_cmd->add_option("--utts", mc_utts, "Utterances per speaker");
  make_cmd->add_option("--seed", mc_seed, "RNG seed");
  make_cmd->add_option("--out", mc_out, "Output corpus directory")->required();
  make_cmd->add_option("--snr-lo", mc_lo, "Lower SNR bound (dB)");
  make_cmd->add_option("--snr-hi", mc_hi, "Upper SNR bound (dB)");

  // ---- train-ncwavegan
  auto* t1_cmd = app.add_subcommand("train-ncwavegan",
                                    "Stage 1: train the NC-WaveGAN");
  std::string t1_config, t1_out, t1_resume;
  uint64_t t1_seed = 0;
  bool t1_have_seed = false, t1_tiny = false;
  t1_cmd->add_option("--config", t1_config, "Run config JSON");
  t1_cmd->add_option("--out", t1_out, "Checkpoint directory")->required();
  t1_cmd->add_option("--resume", t1_resume, "Checkpoint to resume from");
  t1_cmd->add_option("--seed", t1_seed, "Seed override")
      ->each([&](const std::string&) { t1_have_seed = true; });
  t1_cmd->add_flag("--tiny", t1_tiny, "Use the tiny preset");

  // ---- train-flowvc
  auto* t2_cmd = app.add_subcommand(
      "train-flowvc", "Stage 2: train the flow conversion model");
  std::string t2_config, t2_out, t2_ckpt;
  uint64_t t2_seed = 0;
  bool t2_have_seed = false, t2_tiny = false;
  t2_cmd->add_option("--config", t2_config, "Run config JSON");
  t2_cmd->add_option("--ckpt", t2_ckpt, "Stage-1 checkpoint")->required();
  t2_cmd->add_option("--out", t2_out, "Checkpoint directory")->required();
  t2_cmd->add_option("--seed", t2_seed, "Seed override")
      ->each([&](const std::string&) { t2_have_seed = true; });
  t2_cmd->add_flag("--tiny", t2_tiny, "Use the tiny preset");

  // ---- convert
  auto* cv_cmd = app.add_subcommand(
      "convert", "Convert a source utterance to a target speaker");
  std::string cv_source, cv_speaker, cv_wavegan, cv_flow, cv_out;
  std::string cv_attribute = "clean";
  double cv_temperature = 0.667;
  uint64_t cv_seed = 0;
  cv_cmd->add_option("source", cv_source, "Source wav (with .ppg sidecar) or ppg file")
      ->required();
  cv_cmd->add_option("--speaker", cv_speaker, "Target speaker id")->required();
  cv_cmd->add_option("--ckpt", cv_wavegan, "NC-WaveGAN checkpoint")->required();
  cv_cmd->add_option("--flow-ckpt", cv_flow, "Flow checkpoint")->required();
  cv_cmd->add_option("--out", cv_out, "Output wav path")->required();
  cv_cmd->add_option("--temperature", cv_temperature, "Prior sampling temperature");
  cv_cmd->add_option("--seed", cv_seed, "Sampling seed");
  cv_cmd->add_option("--attribute", cv_attribute,
                     "FiLM control: clean (default) or noisy");

  // ---- eval
  auto* ev_cmd = app.add_subcommand("eval", "Objective evaluation report");
  std::string ev_config, ev_wavegan, ev_flow, ev_out;
  bool ev_tiny = false;
  ev_cmd->add_option("--config", ev_config, "Run config JSON");
  ev_cmd->add_option("--ckpt", ev_wavegan, "NC-WaveGAN checkpoint")->required();
  ev_cmd->add_option("--flow-ckpt", ev_flow, "Flow checkpoint")->required();
  ev_cmd->add_option("--out", ev_out, "Report directory")->required();
  ev_cmd->add_flag("--tiny", ev_tiny, "Use the tiny preset");

  // ---- visualize
  auto* vz_cmd = app.add_subcommand(
      "visualize", "Emit 2-D projections of speaker or latent spaces");
  std::string vz_config, vz_wavegan, vz_out, vz_what = "latent";
  std::string vz_projection = "pca", vz_embeddings;
  uint64_t vz_seed = 0;
  bool vz_tiny = false;
  vz_cmd->add_option("--config", vz_config, "Run config JSON");
  vz_cmd->add_option("--ckpt", vz_wavegan, "NC-WaveGAN checkpoint");
  vz_cmd->add_option("--out", vz_out, "Output directory")->required();
  vz_cmd->add_option("--what", vz_what, "speaker or latent");
  vz_cmd->add_option("--projection", vz_projection, "pca or tsne");
  vz_cmd->add_option("--seed", vz_seed, "Seed for tsne");
  vz_cmd->add_option("--embeddings", vz_embeddings,
                     "External embedding file (id v1 ... vd per line)");
  vz_cmd->add_flag("--tiny", vz_tiny, "Use the tiny preset");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*make_cmd) {
      ncvc::corpus::SynthConfig scfg;
      scfg.n_speakers = mc_speakers;
      scfg.n_utts_per_speaker = mc_utts;
      scfg.seed = mc_seed;
      scfg.out_dir = mc_out;
      scfg.snr_lo_db = mc_lo;
      scfg.snr_hi_db = mc_hi;
      const auto manifest = ncvc::corpus::synth_corpus(scfg);
      std::cout << "corpus: " << manifest.entries.size() << " utterances in "
                << mc_out << "\n";
    } else if (*t1_cmd) {
      auto cfg = load_config(t1_config, t1_have_seed ? &t1_seed : nullptr,
                             t1_tiny);
      const auto final_ckpt =
          ncvc::pipeline::train_ncwavegan(cfg, t1_out, t1_resume);
      std::cout << "ncwavegan checkpoint: " << final_ckpt << "\n";
    } else if (*t2_cmd) {
      auto cfg = load_config(t2_config, t2_have_seed ? &t2_seed : nullptr,
                             t2_tiny);
      const auto final_ckpt =
          ncvc::pipeline::train_flowvc(cfg, t2_ckpt, t2_out);
      std::cout << "flowvc checkpoint: " << final_ckpt << "\n";
    } else if (*cv_cmd) {
      ncvc::AttributeVector attr = ncvc::AttributeVector::clean();
      if (cv_attribute == "noisy") {
        attr = ncvc::AttributeVector::noisy();
      } else if (cv_attribute != "clean") {
        throw std::invalid_argument("attribute must be clean or noisy");
      }
      const auto result =
          ncvc::pipeline::convert(cv_source, cv_speaker, cv_wavegan, cv_flow,
                                  cv_out, cv_temperature, cv_seed, attr);
      std::cout << "wrote " << result.output_wav << " (manifest "
                << result.run_manifest << ")\n";
    } else if (*ev_cmd) {
      auto cfg = load_config(ev_config, nullptr, ev_tiny);
      const auto report =
          ncvc::pipeline::evaluate(cfg, ev_wavegan, ev_flow, ev_out);
      std::cout << "probe z: " << report.probe_accuracy_z
                << "  probe z~: " << report.probe_accuracy_z_tilde
                << "  heldout nll: " << report.heldout_nll
                << "  mean output snr (clean): "
                << report.mean_output_snr_clean_db << " dB\n";
    } else if (*vz_cmd) {
      auto cfg = load_config(vz_config, nullptr, vz_tiny);
      ncvc::pipeline::VisualizeWhat what;
      if (vz_what == "speaker") {
        what = ncvc::pipeline::VisualizeWhat::kSpeaker;
      } else if (vz_what == "latent") {
        what = ncvc::pipeline::VisualizeWhat::kLatent;
      } else {
        throw std::invalid_argument("--what must be speaker or latent");
      }
      const auto result = ncvc::pipeline::visualize(
          cfg, vz_wavegan, what, vz_out, vz_projection, vz_seed, vz_embeddings);
      std::cout << "wrote " << result.csv_path << " and " << result.svg_path
                << "\n";
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;  // configuration / argument problems
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
