// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NCVC_FLOW_HPP
#define NCVC_FLOW_HPP

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ncvc/corpus.hpp"
#include "ncvc/nn/layers.hpp"

namespace ncvc::flow {

using nn::Mat;
using nn::Var;

struct FlowConfig {
  int latent_channels = 64;  // channels of the modeled latent z
  int n_ppg_classes = 6;
  int n_blocks = 12;
  int squeeze = 2;  // time squeeze at stack entry
  int coupling_hidden = 128;
  int coupling_layers = 2;  // dilated gated conv layers, dilation 2^i
  int coupling_kernel = 3;
  int d_spk = 64;
  int ppg_hidden = 96;
  int ppg_layers = 3;
  int ppg_kernel = 5;
  bool spk_in_prior = false;  // inject the speaker embedding into the prior net
  double logstd_clamp_lo = -9.0;
  double logstd_clamp_hi = 2.0;
  double temperature_default = 0.667;
  double lr = 2e-4;
  double adam_beta1 = 0.8;
  double adam_beta2 = 0.99;
  double grad_clip = 5.0;

  nlohmann::json to_json() const;
  static FlowConfig from_json(const nlohmann::json& j);
  static FlowConfig from_json(const nlohmann::json& j, const FlowConfig& base);
  static FlowConfig tiny();
};

// Per-frame Gaussian prior over the latent, predicted from PPG (+ speaker).
struct FlowPrior {
  Mat mean;     // C x T
  Mat log_std;  // C x T, clamped to [lo, hi]
  int frames() const { return static_cast<int>(mean.cols()); }
};

class SpeakerTable {
 public:
  SpeakerTable() = default;
  SpeakerTable(std::vector<std::string> speakers);
  int index(const std::string& id) const;  // unknown speaker -> error
  int size() const { return static_cast<int>(order_.size()); }
  const std::vector<std::string>& speakers() const { return order_; }

 private:
  std::vector<std::string> order_;
  std::map<std::string, int> by_id_;
};

struct FlowStepReport {
  double nll = 0.0;
  bool diverged = false;
};

// Glow-style stack: squeeze, then n_blocks of (activation normalization,
// LU-parameterized invertible channel mixing, affine coupling with gated
// dilated convs; the speaker embedding conditions only the couplings).
// Couplings are zero-initialized, so the whole stack starts as the identity.
class FlowModel {
 public:
  FlowModel(const FlowConfig& cfg, std::vector<std::string> speakers,
            uint64_t init_seed);

  const FlowConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const SpeakerTable& speakers() const { return speakers_; }
  nn::Adam& opt() { return opt_; }

  bool ddi_done() const { return ddi_done_; }
  void set_ddi_done(bool v) { ddi_done_ = v; }

  // Prior prediction; output frame count equals the PPG frame count exactly.
  FlowPrior ppg_encode(const corpus::PPGSequence& ppg,
                       const std::string& speaker) const;

  // e = flow(z); total log|det J| accounted over valid (unpadded) frames.
  // Frame counts not divisible by the squeeze factor are padded by frame
  // replication; the padded tail stays in e (masked from all likelihoods)
  // so that flow_inverse(flow_forward(z)) reproduces z exactly after
  // trimming back to z's frame count.
  std::pair<Mat, double> flow_forward(const Mat& z,
                                      const std::string& speaker) const;
  Mat flow_inverse(const Mat& e, const std::string& speaker) const;

  // Per-dimension negative log-likelihood in nats. Frame counts of z and the
  // prior may differ by one (trimmed); more is an error. With an odd frame
  // count the final frame is excluded from the likelihood (the squeeze pairs
  // it with padding).
  double nll(const Mat& z, const corpus::PPGSequence& ppg,
             const std::string& speaker) const;
  double nll_with_prior(const Mat& z, const FlowPrior& prior,
                        const std::string& speaker) const;

  // Sample e ~ N(mean, (temperature*std)^2) and invert; temperature 0 (or a
  // null rng) is the deterministic prior mean.
  Mat convert_sample(const corpus::PPGSequence& ppg, const std::string& speaker,
                     double temperature, Rng* rng) const;

  // Maximum-likelihood step on one (z, ppg, speaker) triple. Runs the
  // data-dependent actnorm init on the first call.
  FlowStepReport training_step(const Mat& z, const corpus::PPGSequence& ppg,
                               const std::string& speaker);

  // One-sided receptive field of the prior net, in frames.
  int prior_receptive_field_frames() const;

  // Data-dependent init of every actnorm from one batch of latents.
  void data_dependent_init(const Mat& z, const std::string& speaker);

 private:
  struct Block {
    nn::Parameter* act_log_s = nullptr;
    nn::Parameter* act_b = nullptr;
    nn::Parameter* lu_lower = nullptr;
    nn::Parameter* lu_upper = nullptr;
    nn::Parameter* lu_log_s = nullptr;
    nn::Conv1d pre;
    std::vector<nn::Conv1d> gates;      // h -> 2h dilated convs
    std::vector<nn::Affine> spk_projs;  // d_spk -> 2h bias
    std::vector<nn::Conv1d> residuals;  // h -> h 1x1
    nn::Conv1d post;                    // h -> 2*half, zero-init
    bool transform_top = false;         // which half the coupling rewrites
  };

  Var spk_embedding_v(int spk_index) const;
  // (log_s, t) for the transformed half, conditioned on the other half.
  std::pair<Var, Var> coupling_terms_v(const Block& b, const Var& cond,
                                       const Var& spk_emb) const;
  struct ForwardOut {
    Var e2;       // squeezed output (2C x Ts)
    Var logdet;   // scalar, masked to valid squeezed frames
  };
  ForwardOut forward_v(const Var& z2, const Var& spk_emb,
                       int valid_sq_frames) const;
  struct PriorV {
    Var mean, log_std;
  };
  PriorV prior_v(const Var& ppg, const Var* spk_emb) const;
  Var nll_v(const Var& z2, const PriorV& prior2, const Var& spk_emb,
            int valid_sq_frames) const;

  FlowConfig cfg_;
  SpeakerTable speakers_;
  nn::ParamStore store_;
  std::vector<Block> blocks_;
  nn::Conv1d ppg_pre_;
  std::vector<std::pair<nn::Conv1d, nn::Conv1d>> ppg_res_;
  nn::Conv1d ppg_mean_, ppg_logstd_;
  nn::Affine spk_prior_proj_;
  nn::Parameter* spk_table_ = nullptr;
  nn::Adam opt_;
  bool ddi_done_ = false;
};

// Time-squeeze helpers: (C x T) <-> (squeeze*C x T/squeeze), channel-stacking
// consecutive frames. T must be divisible by the factor.
Mat squeeze_time(const Mat& z, int factor);
Mat unsqueeze_time(const Mat& z2, int factor);

}  // namespace ncvc::flow

#endif  // NCVC_FLOW_HPP
