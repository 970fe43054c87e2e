// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NCVC_WAVEGAN_HPP
#define NCVC_WAVEGAN_HPP

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ncvc/attribute.hpp"
#include "ncvc/corpus.hpp"
#include "ncvc/nn/layers.hpp"
#include "ncvc/signals.hpp"

namespace ncvc::wavegan {

using nn::Mat;
using nn::Var;
using signals::Waveform;

// 160 samples per latent frame: 10 ms at 16 kHz.
constexpr int kHop = 160;

struct WaveganConfig {
  int latent_channels = 64;
  std::vector<int> encoder_channels = {24, 32, 48, 64, 96};
  std::vector<int> encoder_strides = {2, 2, 2, 4, 5};  // product 160
  std::vector<int> decoder_channels = {96, 64, 48, 32};
  std::vector<int> decoder_strides = {5, 4, 8};  // product 160
  int pitch_hidden = 32;
  std::vector<int> disc_channels = {16, 32, 32};
  std::vector<int> disc_strides = {2, 4, 4};
  int disc_kernel = 9;
  int n_disc_scales = 3;  // decimation factors 1, 2, 4
  double logvar_clamp = 14.0;

  // Loss weights: lambda1 * L_vae + lambda2 * L_pitch + lambda3 * L_adv.
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  double feat_match_weight = 2.0;
  // Auxiliary time-domain terms on the reconstruction; they keep desk-scale
  // training phase-aligned and keep pressure on the residual at every scale.
  // Reported separately from L_recon.
  double wav_l1_weight = 20.0;
  double wav_logmse_weight = 0.5;

  std::vector<signals::StftResolution> stft_resolutions =
      signals::default_resolutions();

  double lr = 2e-4;
  double adam_beta1 = 0.8;
  double adam_beta2 = 0.99;
  double grad_clip = 5.0;
  int crop_frames = 25;  // training crop length in latent frames
  bool pitch_stop_grad = false;  // stop pitch-loss gradient into the encoder

  nlohmann::json to_json() const;
  static WaveganConfig from_json(const nlohmann::json& j);
  static WaveganConfig from_json(const nlohmann::json& j,
                                 const WaveganConfig& base);
  static WaveganConfig tiny();
};

struct LatentPosterior {
  Mat mean;     // C x T
  Mat log_var;  // C x T, clamped to +/- logvar_clamp
  int frames() const { return static_cast<int>(mean.cols()); }
};

struct LossWeights {
  double lambda1 = 1.0, lambda2 = 1.0, lambda3 = 1.0;
};

// Exact weighted sum of Eq.-7 style parts; negative weights are an error.
double total_generator_loss(double l_vae, double l_pitch, double l_adv,
                            const LossWeights& w);

// Closed-form KL of a diagonal Gaussian against the standard normal prior,
// averaged over channels and frames.
double kl_divergence(const LatentPosterior& p);
Var kl_divergence_v(const Var& mean, const Var& log_var);

// Multi-resolution STFT loss between a fixed target and a generated (1 x N)
// graph node; value matches signals::mr_stft_loss on the same inputs.
Var mr_stft_loss_v(const Waveform& target, const Var& fake,
                   const std::vector<signals::StftResolution>& resolutions);

// L1 on log-f0 over voiced frames plus voicing BCE. pred is (2 x T):
// row 0 log-f0, row 1 voicing logit. Off-by-one frame counts are trimmed,
// larger mismatches are errors.
Var pitch_loss_v(const Var& pred, const signals::F0Track& target);

// Least-squares GAN terms from per-patch scores.
double lsgan_d_loss(const Mat& score_real, const Mat& score_fake);
double lsgan_g_loss(const Mat& score_fake);

class WaveganModel;

// LSGAN losses plus feature matching over the model's discriminator set,
// evaluated with the current parameters (no updates).
struct AdvValues {
  double d_loss = 0.0;
  double g_loss = 0.0;
  double feat_match = 0.0;
};
AdvValues adversarial_losses(const WaveganModel& m, const Waveform& real,
                             const Waveform& fake);

struct StepReport {
  double l_recon = 0.0;   // multi-resolution STFT value
  double l_kl = 0.0;
  double l_vae = 0.0;     // l_recon + l_kl
  double l_pitch = 0.0;
  double l_adv = 0.0;     // g_loss + feat_match_weight * feat_match
  double g_loss = 0.0;
  double feat_match = 0.0;
  double d_loss = 0.0;
  double wav_l1 = 0.0;
  double wav_mse = 0.0;
  double total = 0.0;
  bool diverged = false;
};

class WaveganModel {
 public:
  WaveganModel(const WaveganConfig& cfg, uint64_t init_seed);

  const WaveganConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  std::vector<nn::Parameter*> generator_params() const;
  std::vector<nn::Parameter*> discriminator_params() const;

  // Graph-building forwards (usable for training and inference).
  struct PosteriorV {
    Var mean, log_var;
  };
  PosteriorV encode_v(const Var& wav) const;
  Var film_modulate_v(const Var& z, const AttributeVector& c) const;
  Var decode_v(const Var& z_tilde) const;
  Var pitch_head_v(const Var& z) const;
  // Per scale: intermediate feature maps, then the score map last.
  std::vector<std::vector<Var>> discriminate_v(const Var& wav) const;

  // Value-level operations.
  LatentPosterior encode(const Waveform& w) const;
  Mat sample_latent(const LatentPosterior& p, Rng* rng) const;  // null: mean
  Mat film_modulate(const Mat& z, const AttributeVector& c) const;
  Waveform decode(const Mat& z_tilde) const;
  Waveform vocode(const Mat& z, const AttributeVector& c) const;

  // Eq.-5 opposite-attribute reconstruction step: discriminators update on
  // d_loss, then the generator on the weighted total. rng drives the latent
  // sample and the training crop.
  StepReport training_step(const corpus::TrainingPair& pair, Rng& rng);

  // One-sided receptive field of the encoder stack, in samples.
  int receptive_field_samples() const;

  nn::Adam& gen_opt() { return gen_opt_; }
  nn::Adam& disc_opt() { return disc_opt_; }

 private:
  struct ConvSpec {
    nn::Conv1d conv;
    nn::Conv1d res_a, res_b;
  };

  Var encoder_trunk(const Var& wav) const;
  Var disc_scale_input(const Var& wav, int scale) const;

  WaveganConfig cfg_;
  nn::ParamStore store_;
  nn::Conv1d enc_pre_;
  std::vector<ConvSpec> enc_stages_;
  nn::Conv1d enc_mean_, enc_logvar_;
  nn::Affine film_scale_, film_shift_;
  nn::Conv1d dec_pre_;
  std::vector<nn::ConvTranspose1d> dec_up_;
  std::vector<std::pair<nn::Conv1d, nn::Conv1d>> dec_res_;
  nn::Conv1d dec_post_;
  nn::Conv1d pitch_pre_, pitch_out_;
  struct DiscStack {
    std::vector<nn::Conv1d> layers;
    nn::Conv1d head;
  };
  std::vector<DiscStack> discs_;
  nn::Adam gen_opt_;
  nn::Adam disc_opt_;
};

// Pads with zeros to a whole number of latent frames.
Waveform pad_to_frames(const Waveform& w);

}  // namespace ncvc::wavegan

#endif  // NCVC_WAVEGAN_HPP
