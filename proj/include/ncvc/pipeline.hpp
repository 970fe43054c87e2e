// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NCVC_PIPELINE_HPP
#define NCVC_PIPELINE_HPP

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ncvc/corpus.hpp"
#include "ncvc/flow.hpp"
#include "ncvc/nn/checkpoint.hpp"
#include "ncvc/wavegan.hpp"

namespace ncvc::pipeline {

// Full run description; serialized into every checkpoint so a run is
// reproducible from (config, seed, corpus). Unknown JSON keys are errors.
struct RunConfig {
  std::string corpus_manifest;
  uint64_t seed = 0;
  long steps = 2000;
  long flow_steps = 1500;
  long checkpoint_every = 1000;
  bool tiny = false;
  std::vector<std::string> exclude_speakers;
  double temperature = 0.667;
  int holdout_every = 8;  // every k-th utterance held out of flow training
  bool flow_train_on_samples = false;
  wavegan::WaveganConfig ncwavegan;
  flow::FlowConfig flowvc;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
};

// Worker pool size: hardware concurrency capped by NCVC_NUM_THREADS.
int worker_count();
// Runs fn(0..n-1) on the pool; results must be written by index so the
// outcome is identical for any thread count.
void parallel_for(int n, const std::function<void(int)>& fn);

// Exclusive ownership of a checkpoint directory while training runs.
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
};

struct LoadedWavegan {
  std::unique_ptr<wavegan::WaveganModel> model;
  nn::CheckpointMeta meta;
};
struct LoadedFlow {
  std::unique_ptr<flow::FlowModel> model;
  nn::CheckpointMeta meta;
};
LoadedWavegan load_wavegan_checkpoint(const std::string& dir);
LoadedFlow load_flow_checkpoint(const std::string& dir);

// Stage 1: NC-WaveGAN training on opposite-attribute pairs. Writes
// checkpoints at the configured cadence plus `final/`, and loss_curve.csv.
// Returns the final checkpoint directory.
std::string train_ncwavegan(const RunConfig& cfg, const std::string& out_dir,
                            const std::string& resume_from = "");

// Stage 2: flow training on (PPG, speaker, z = posterior mean) triples with
// the stage-1 encoder frozen. Writes checkpoints and flow_loss.csv.
std::string train_flowvc(const RunConfig& cfg,
                         const std::string& ncwavegan_ckpt,
                         const std::string& out_dir);

// Step 3: PPG -> flow sample -> vocode. `source` is a wav (with a .ppg
// sidecar) or a ppg file. Writes the wav plus a JSON run manifest recording
// inputs, seeds and checksums.
struct ConvertResult {
  std::string output_wav;
  std::string run_manifest;
};
ConvertResult convert(const std::string& source, const std::string& speaker,
                      const std::string& ncwavegan_ckpt,
                      const std::string& flow_ckpt, const std::string& out_wav,
                      double temperature, uint64_t seed,
                      AttributeVector attribute = AttributeVector::clean());

// L2-regularized logistic regression, k-fold cross-validated accuracy.
// Deterministic for a fixed seed.
double logistic_probe_accuracy(const std::vector<Eigen::VectorXd>& xs,
                               const std::vector<int>& ys, int folds,
                               uint64_t seed);

struct UtteranceSnr {
  std::string id;
  double input_snr_db = 0.0;
  double output_snr_clean_db = 0.0;  // converted with c = clean
  double output_snr_noisy_db = 0.0;  // converted with c = noisy
};

struct EvalReport {
  std::vector<UtteranceSnr> snr_table;
  double mean_input_snr_db = 0.0;
  double mean_output_snr_clean_db = 0.0;
  double mean_output_snr_noisy_db = 0.0;
  double probe_accuracy_z = 0.0;        // clean/noisy probe on pooled z
  double probe_accuracy_z_tilde = 0.0;  // same probe after FiLM
  double heldout_nll = 0.0;
  int heldout_count = 0;
  std::vector<std::string> plot_paths;
  std::string checkpoint_used;
  std::string corpus_used;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

// Objective evaluation: SNR table over noisy utterances with clean twins
// (conversion at temperature 0), the Figure-3-style clean/noisy probes on
// pooled z and FiLM-modulated z-tilde, and held-out flow NLL. Writes
// report.json and snr_table.csv under out_dir.
EvalReport evaluate(const RunConfig& cfg, const std::string& ncwavegan_ckpt,
                    const std::string& flow_ckpt, const std::string& out_dir);

// 2-D projection emitters (Figure 2/3 analogs).
enum class VisualizeWhat { kSpeaker, kLatent };
struct VisualizeResult {
  std::string csv_path;
  std::string svg_path;
};
// `projection` is "pca" (deterministic) or "tsne" (seeded).
VisualizeResult visualize(const RunConfig& cfg,
                          const std::string& ncwavegan_ckpt,
                          VisualizeWhat what, const std::string& out_dir,
                          const std::string& projection = "pca",
                          uint64_t seed = 0,
                          const std::string& external_embeddings = "");

// Deterministic PCA to 2-D; the sign of each axis is fixed by making its
// largest-magnitude loading positive.
Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& rows);
// Exact t-SNE (quadratic), seeded; fine for a few hundred points.
Eigen::MatrixXd tsne_2d(const Eigen::MatrixXd& rows, uint64_t seed);

}  // namespace ncvc::pipeline

#endif  // NCVC_PIPELINE_HPP
