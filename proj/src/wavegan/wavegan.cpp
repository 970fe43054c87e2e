// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ncvc/wavegan.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <stdexcept>

namespace ncvc::wavegan {

using nn::abs_;
using nn::add;
using nn::add_scalar;
using nn::bias_add;
using nn::clamp;
using nn::clamp_min;
using nn::colvec_mul;
using nn::constant;
using nn::detach;
using nn::div;
using nn::exp_;
using nn::frame_signal;
using nn::leaky_relu;
using nn::log_;
using nn::matmul;
using nn::max_with;
using nn::mean;
using nn::mul;
using nn::scale;
using nn::slice_cols;
using nn::slice_rows;
using nn::softplus;
using nn::sqrt_;
using nn::square;
using nn::sub;
using nn::sum;
using nn::tanh_;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

nlohmann::json resolutions_to_json(
    const std::vector<signals::StftResolution>& rs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rs)
    out.push_back({r.fft_size, r.hop_length, r.win_length});
  return out;
}

std::vector<signals::StftResolution> resolutions_from_json(
    const nlohmann::json& j) {
  std::vector<signals::StftResolution> out;
  for (const auto& r : j)
    out.push_back({r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>()});
  return out;
}

}  // namespace

nlohmann::json WaveganConfig::to_json() const {
  return {{"latent_channels", latent_channels},
          {"encoder_channels", encoder_channels},
          {"encoder_strides", encoder_strides},
          {"decoder_channels", decoder_channels},
          {"decoder_strides", decoder_strides},
          {"pitch_hidden", pitch_hidden},
          {"disc_channels", disc_channels},
          {"disc_strides", disc_strides},
          {"disc_kernel", disc_kernel},
          {"n_disc_scales", n_disc_scales},
          {"logvar_clamp", logvar_clamp},
          {"lambda1", lambda1},
          {"lambda2", lambda2},
          {"lambda3", lambda3},
          {"feat_match_weight", feat_match_weight},
          {"wav_l1_weight", wav_l1_weight},
          {"wav_logmse_weight", wav_logmse_weight},
          {"stft_resolutions", resolutions_to_json(stft_resolutions)},
          {"lr", lr},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"grad_clip", grad_clip},
          {"crop_frames", crop_frames},
          {"pitch_stop_grad", pitch_stop_grad}};
}

WaveganConfig WaveganConfig::from_json(const nlohmann::json& j) {
  return from_json(j, WaveganConfig());
}

WaveganConfig WaveganConfig::from_json(const nlohmann::json& j,
                                       const WaveganConfig& base) {
  WaveganConfig cfg = base;
  const nlohmann::json defaults = WaveganConfig().to_json();
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key))
      throw std::invalid_argument("unknown ncwavegan config field: " + key);
  cfg.latent_channels = j.value("latent_channels", cfg.latent_channels);
  cfg.encoder_channels = j.value("encoder_channels", cfg.encoder_channels);
  cfg.encoder_strides = j.value("encoder_strides", cfg.encoder_strides);
  cfg.decoder_channels = j.value("decoder_channels", cfg.decoder_channels);
  cfg.decoder_strides = j.value("decoder_strides", cfg.decoder_strides);
  cfg.pitch_hidden = j.value("pitch_hidden", cfg.pitch_hidden);
  cfg.disc_channels = j.value("disc_channels", cfg.disc_channels);
  cfg.disc_strides = j.value("disc_strides", cfg.disc_strides);
  cfg.disc_kernel = j.value("disc_kernel", cfg.disc_kernel);
  cfg.n_disc_scales = j.value("n_disc_scales", cfg.n_disc_scales);
  cfg.logvar_clamp = j.value("logvar_clamp", cfg.logvar_clamp);
  cfg.lambda1 = j.value("lambda1", cfg.lambda1);
  cfg.lambda2 = j.value("lambda2", cfg.lambda2);
  cfg.lambda3 = j.value("lambda3", cfg.lambda3);
  cfg.feat_match_weight = j.value("feat_match_weight", cfg.feat_match_weight);
  cfg.wav_l1_weight = j.value("wav_l1_weight", cfg.wav_l1_weight);
  cfg.wav_logmse_weight = j.value("wav_logmse_weight", cfg.wav_logmse_weight);
  if (j.contains("stft_resolutions"))
    cfg.stft_resolutions = resolutions_from_json(j.at("stft_resolutions"));
  cfg.lr = j.value("lr", cfg.lr);
  cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
  cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
  cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
  cfg.crop_frames = j.value("crop_frames", cfg.crop_frames);
  cfg.pitch_stop_grad = j.value("pitch_stop_grad", cfg.pitch_stop_grad);

  int enc_stride = 1, dec_stride = 1;
  for (int s : cfg.encoder_strides) enc_stride *= s;
  for (int s : cfg.decoder_strides) dec_stride *= s;
  if (enc_stride != kHop || dec_stride != kHop)
    throw std::invalid_argument("stride products must be 160");
  if (cfg.encoder_channels.size() != cfg.encoder_strides.size())
    throw std::invalid_argument("encoder channel/stride size mismatch");
  if (cfg.decoder_channels.size() != cfg.decoder_strides.size() + 1)
    throw std::invalid_argument("decoder wants strides+1 channel entries");
  if (cfg.lambda1 < 0 || cfg.lambda2 < 0 || cfg.lambda3 < 0)
    throw std::invalid_argument("negative loss weight");
  return cfg;
}

WaveganConfig WaveganConfig::tiny() {
  WaveganConfig cfg;
  cfg.latent_channels = 16;
  cfg.encoder_channels = {12, 16, 24, 32, 48};
  cfg.decoder_channels = {48, 32, 24, 12};
  cfg.pitch_hidden = 16;
  cfg.disc_channels = {12, 24, 24};
  cfg.stft_resolutions = {{512, 128, 512}, {1024, 256, 1024}};
  cfg.crop_frames = 10;
  cfg.lr = 1e-3;
  return cfg;
}

// ---------------------------------------------------------------------------
// Loss pieces
// ---------------------------------------------------------------------------

double total_generator_loss(double l_vae, double l_pitch, double l_adv,
                            const LossWeights& w) {
  if (w.lambda1 < 0 || w.lambda2 < 0 || w.lambda3 < 0)
    throw std::invalid_argument("negative loss weight");
  return w.lambda1 * l_vae + w.lambda2 * l_pitch + w.lambda3 * l_adv;
}

double kl_divergence(const LatentPosterior& p) {
  const auto mu = p.mean.array();
  const auto lv = p.log_var.array();
  return 0.5 * (mu.square() + lv.exp() - 1.0 - lv).mean();
}

Var kl_divergence_v(const Var& mean_v, const Var& log_var_v) {
  Var term = add(square(mean_v), exp_(log_var_v));
  term = sub(add_scalar(term, -1.0), log_var_v);
  return scale(mean(term), 0.5);
}

namespace {

struct DftPlan {
  Mat cos_mat;  // (bins x win), Hann window folded in
  Mat sin_mat;
};

const DftPlan& dft_plan(int fft_size, int win) {
  static std::map<std::pair<int, int>, DftPlan> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find({fft_size, win});
  if (it != cache.end()) return it->second;
  DftPlan plan;
  const int bins = fft_size / 2 + 1;
  const auto window = signals::hann_window(win);
  plan.cos_mat.resize(bins, win);
  plan.sin_mat.resize(bins, win);
  for (int b = 0; b < bins; ++b) {
    for (int i = 0; i < win; ++i) {
      const double ang = -2.0 * std::numbers::pi * b * i / fft_size;
      plan.cos_mat(b, i) = std::cos(ang) * window[i];
      plan.sin_mat(b, i) = std::sin(ang) * window[i];
    }
  }
  return cache.emplace(std::make_pair(fft_size, win), std::move(plan))
      .first->second;
}

Var stft_magnitude_v(const Var& wav, const signals::StftResolution& r) {
  const DftPlan& plan = dft_plan(r.fft_size, r.win_length);
  Var frames = frame_signal(wav, r.win_length, r.hop_length);
  Var re = matmul(constant(plan.cos_mat), frames);
  Var im = matmul(constant(plan.sin_mat), frames);
  return sqrt_(add_scalar(add(square(re), square(im)), 1e-24));
}

}  // namespace

Var mr_stft_loss_v(const Waveform& target, const Var& fake,
                   const std::vector<signals::StftResolution>& resolutions) {
  if (static_cast<long>(target.samples.size()) != fake->value.cols())
    throw std::invalid_argument("length mismatch");
  if (resolutions.empty()) throw std::invalid_argument("no resolutions");

  Mat target_row(1, target.size());
  for (long i = 0; i < target.size(); ++i)
    target_row(0, i) = static_cast<double>(target.samples[i]);
  Var target_v = constant(std::move(target_row));

  Var total;
  for (const auto& r : resolutions) {
    // Both magnitudes go through the identical framing + DFT path so the
    // loss vanishes exactly on identical signals.
    Var mag_t = stft_magnitude_v(target_v, r);
    Var mag_f = stft_magnitude_v(fake, r);
    Var diff = sub(mag_t, mag_f);
    Var num = sqrt_(add_scalar(sum(square(diff)), 1e-24));
    const double den = std::max(mag_t->value.norm(), 1e-7);
    Var sc = scale(num, 1.0 / den);
    Var logmag = mean(abs_(sub(log_(clamp_min(mag_t, 1e-7)),
                               log_(clamp_min(mag_f, 1e-7)))));
    Var res_loss = add(sc, logmag);
    total = total ? add(total, res_loss) : res_loss;
  }
  return scale(total, 1.0 / static_cast<double>(resolutions.size()));
}

Var pitch_loss_v(const Var& pred, const signals::F0Track& target) {
  if (pred->value.rows() != 2)
    throw std::invalid_argument("pitch head wants 2 rows");
  const int tp = static_cast<int>(pred->value.cols());
  const int tt = target.frames();
  if (std::abs(tp - tt) > 1)
    throw std::invalid_argument("pitch frame mismatch beyond one frame");
  const int t = std::min(tp, tt);

  Mat log_f0(1, t), voiced(1, t);
  double n_voiced = 0.0;
  for (int i = 0; i < t; ++i) {
    voiced(0, i) = target.voiced[i] ? 1.0 : 0.0;
    log_f0(0, i) = target.voiced[i] ? std::log(target.f0_hz[i]) : 0.0;
    n_voiced += voiced(0, i);
  }

  Var pred_t = tp == t ? pred : slice_cols(pred, 0, t);
  Var pred_f0 = slice_rows(pred_t, 0, 1);
  Var logits = slice_rows(pred_t, 1, 1);
  Var mask = constant(voiced);

  // L1 over voiced frames only; all-unvoiced targets contribute nothing.
  Var l1 = scale(sum(mul(abs_(sub(pred_f0, constant(log_f0))), mask)),
                 1.0 / std::max(1.0, n_voiced));
  // Stable binary cross-entropy with logits: softplus(x) - x*y.
  Var bce = mean(sub(softplus(logits), mul(logits, mask)));
  return add(l1, bce);
}

double lsgan_d_loss(const Mat& score_real, const Mat& score_fake) {
  return (score_real.array() - 1.0).square().mean() +
         score_fake.array().square().mean();
}

double lsgan_g_loss(const Mat& score_fake) {
  return (score_fake.array() - 1.0).square().mean();
}

AdvValues adversarial_losses(const WaveganModel& m, const Waveform& real,
                             const Waveform& fake) {
  if (real.size() != fake.size())
    throw std::invalid_argument("length mismatch");
  Mat real_row(1, real.size()), fake_row(1, fake.size());
  for (long i = 0; i < real.size(); ++i) {
    real_row(0, i) = static_cast<double>(real.samples[i]);
    fake_row(0, i) = static_cast<double>(fake.samples[i]);
  }
  const auto feats_real = m.discriminate_v(constant(real_row));
  const auto feats_fake = m.discriminate_v(constant(fake_row));

  AdvValues out;
  int n_feat = 0;
  double fm = 0.0;
  for (size_t k = 0; k < feats_real.size(); ++k) {
    out.d_loss += lsgan_d_loss(feats_real[k].back()->value,
                               feats_fake[k].back()->value);
    out.g_loss += lsgan_g_loss(feats_fake[k].back()->value);
    for (size_t l = 0; l + 1 < feats_real[k].size(); ++l) {
      fm += (feats_real[k][l]->value - feats_fake[k][l]->value)
                .cwiseAbs()
                .mean();
      ++n_feat;
    }
  }
  out.feat_match = fm / std::max(1, n_feat);
  return out;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

WaveganModel::WaveganModel(const WaveganConfig& cfg, uint64_t init_seed)
    : cfg_(cfg),
      gen_opt_({cfg.lr, cfg.adam_beta1, cfg.adam_beta2, 1e-8, cfg.grad_clip}),
      disc_opt_({cfg.lr, cfg.adam_beta1, cfg.adam_beta2, 1e-8, cfg.grad_clip}) {
  Rng rng(init_seed);
  const auto& ec = cfg_.encoder_channels;
  const auto& es = cfg_.encoder_strides;

  enc_pre_ = nn::Conv1d(store_, "enc.pre", 1, ec[0], 7, 1, 1, 3, rng);
  for (size_t i = 0; i < es.size(); ++i) {
    const int cin = ec[i == 0 ? 0 : i - 1];
    const int cout = ec[i];
    const int s = es[i];
    ConvSpec stage;
    const std::string base = "enc.stage" + std::to_string(i);
    stage.conv = nn::Conv1d(store_, base + ".down", cin, cout, 3 * s, s, 1, s, rng);
    stage.res_a = nn::Conv1d(store_, base + ".res_a", cout, cout, 3, 1, 1, 1, rng);
    stage.res_b = nn::Conv1d(store_, base + ".res_b", cout, cout, 3, 1, 3, 3, rng);
    enc_stages_.push_back(std::move(stage));
  }
  const int C = cfg_.latent_channels;
  enc_mean_ = nn::Conv1d(store_, "enc.mean", ec.back(), C, 1, 1, 1, 0, rng);
  enc_logvar_ = nn::Conv1d(store_, "enc.logvar", ec.back(), C, 1, 1, 1, 0, rng);

  // FiLM starts as the identity map: f(c) = 1, h(c) = 0 for every c.
  film_scale_ = nn::Affine(store_, "film.scale", 2, C, rng, true);
  film_scale_.b->value.setOnes();
  film_shift_ = nn::Affine(store_, "film.shift", 2, C, rng, true);

  const auto& dc = cfg_.decoder_channels;
  const auto& ds = cfg_.decoder_strides;
  dec_pre_ = nn::Conv1d(store_, "dec.pre", C, dc[0], 1, 1, 1, 0, rng);
  for (size_t i = 0; i < ds.size(); ++i) {
    const int s = ds[i];
    const std::string base = "dec.stage" + std::to_string(i);
    dec_up_.emplace_back(store_, base + ".up", dc[i], dc[i + 1], 3 * s, s, s,
                         rng);
    dec_res_.emplace_back(
        nn::Conv1d(store_, base + ".res_a", dc[i + 1], dc[i + 1], 3, 1, 1, 1, rng),
        nn::Conv1d(store_, base + ".res_b", dc[i + 1], dc[i + 1], 3, 1, 3, 3, rng));
  }
  dec_post_ = nn::Conv1d(store_, "dec.post", dc.back(), 1, 7, 1, 1, 3, rng);

  pitch_pre_ = nn::Conv1d(store_, "pitch.pre", C, cfg_.pitch_hidden, 5, 1, 1, 2, rng);
  pitch_out_ = nn::Conv1d(store_, "pitch.out", cfg_.pitch_hidden, 2, 1, 1, 1, 0, rng);

  for (int scale_i = 0; scale_i < cfg_.n_disc_scales; ++scale_i) {
    DiscStack d;
    const std::string base = "disc.s" + std::to_string(scale_i);
    int cin = 1;
    for (size_t l = 0; l < cfg_.disc_channels.size(); ++l) {
      const int cout = cfg_.disc_channels[l];
      d.layers.push_back(nn::Conv1d(store_, base + ".l" + std::to_string(l),
                                    cin, cout, cfg_.disc_kernel,
                                    cfg_.disc_strides[l], 1,
                                    cfg_.disc_kernel / 2, rng));
      cin = cout;
    }
    d.head = nn::Conv1d(store_, base + ".head", cin, 1, 3, 1, 1, 1, rng);
    discs_.push_back(std::move(d));
  }
}

std::vector<nn::Parameter*> WaveganModel::generator_params() const {
  std::vector<nn::Parameter*> out;
  for (const auto& p : store_.all())
    if (p->name.rfind("disc.", 0) != 0) out.push_back(p.get());
  return out;
}

std::vector<nn::Parameter*> WaveganModel::discriminator_params() const {
  std::vector<nn::Parameter*> out;
  for (const auto& p : store_.all())
    if (p->name.rfind("disc.", 0) == 0) out.push_back(p.get());
  return out;
}

Var WaveganModel::encoder_trunk(const Var& wav) const {
  Var h = leaky_relu(enc_pre_(wav));
  for (const auto& st : enc_stages_) {
    h = leaky_relu(st.conv(h));
    Var r = st.res_b(leaky_relu(st.res_a(h)));
    h = leaky_relu(add(h, r));
  }
  return h;
}

WaveganModel::PosteriorV WaveganModel::encode_v(const Var& wav) const {
  if (wav->value.rows() != 1 || wav->value.cols() == 0)
    throw std::invalid_argument("encode wants a nonempty 1 x N waveform");
  if (wav->value.cols() % kHop != 0)
    throw std::invalid_argument("encode wants a multiple of 160 samples");
  Var h = encoder_trunk(wav);
  PosteriorV p;
  p.mean = enc_mean_(h);
  p.log_var = clamp(enc_logvar_(h), -cfg_.logvar_clamp, cfg_.logvar_clamp);
  return p;
}

Var WaveganModel::film_modulate_v(const Var& z,
                                  const AttributeVector& c) const {
  Var cvec = constant(c.vec());
  Var f = film_scale_(cvec);  // C x 1
  Var h = film_shift_(cvec);
  if (f->value.rows() != z->value.rows())
    throw std::invalid_argument("film channel mismatch");
  return bias_add(colvec_mul(z, f), h);
}

Var WaveganModel::decode_v(const Var& z_tilde) const {
  if (z_tilde->value.rows() != cfg_.latent_channels)
    throw std::invalid_argument("decoder channel mismatch");
  Var h = dec_pre_(z_tilde);
  for (size_t i = 0; i < dec_up_.size(); ++i) {
    h = dec_up_[i](leaky_relu(h));
    Var r = dec_res_[i].second(leaky_relu(dec_res_[i].first(leaky_relu(h))));
    h = add(h, r);
  }
  return tanh_(dec_post_(leaky_relu(h)));
}

Var WaveganModel::pitch_head_v(const Var& z) const {
  return pitch_out_(leaky_relu(pitch_pre_(z)));
}

Var WaveganModel::disc_scale_input(const Var& wav, int scale_i) const {
  Var x = wav;
  for (int i = 0; i < scale_i; ++i) x = nn::avg_pool1d(x, 4, 2, 1);
  return x;
}

std::vector<std::vector<Var>> WaveganModel::discriminate_v(
    const Var& wav) const {
  std::vector<std::vector<Var>> out;
  for (size_t scale_i = 0; scale_i < discs_.size(); ++scale_i) {
    std::vector<Var> feats;
    Var h = disc_scale_input(wav, static_cast<int>(scale_i));
    for (const auto& layer : discs_[scale_i].layers) {
      h = leaky_relu(layer(h));
      feats.push_back(h);
    }
    feats.push_back(discs_[scale_i].head(h));
    out.push_back(std::move(feats));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Value-level operations
// ---------------------------------------------------------------------------

Waveform pad_to_frames(const Waveform& w) {
  Waveform out = w;
  const long rem = w.size() % kHop;
  if (rem != 0) out.samples.resize(w.size() + (kHop - rem), 0.0f);
  return out;
}

namespace {

Var waveform_to_var(const Waveform& w) {
  Mat row(1, w.size());
  for (long i = 0; i < w.size(); ++i)
    row(0, i) = static_cast<double>(w.samples[i]);
  return constant(std::move(row));
}

Waveform var_to_waveform(const Var& v, int sample_rate) {
  Waveform w;
  w.sample_rate_hz = sample_rate;
  w.samples.resize(v->value.cols());
  for (long i = 0; i < v->value.cols(); ++i)
    w.samples[i] = static_cast<float>(v->value(0, i));
  return w;
}

}  // namespace

LatentPosterior WaveganModel::encode(const Waveform& w) const {
  if (w.samples.empty()) throw std::invalid_argument("empty waveform");
  const Waveform padded = pad_to_frames(w);
  const auto p = encode_v(waveform_to_var(padded));
  return {p.mean->value, p.log_var->value};
}

Mat WaveganModel::sample_latent(const LatentPosterior& p, Rng* rng) const {
  if (!rng) return p.mean;
  Mat z = p.mean;
  for (long i = 0; i < z.size(); ++i)
    z.data()[i] += std::exp(0.5 * p.log_var.data()[i]) * rng->gaussian();
  return z;
}

Mat WaveganModel::film_modulate(const Mat& z, const AttributeVector& c) const {
  return film_modulate_v(constant(z), c)->value;
}

Waveform WaveganModel::decode(const Mat& z_tilde) const {
  return var_to_waveform(decode_v(constant(z_tilde)), 16000);
}

Waveform WaveganModel::vocode(const Mat& z, const AttributeVector& c) const {
  return decode(film_modulate(z, c));
}

int WaveganModel::receptive_field_samples() const {
  long rf = 1, cum = 1;
  auto grow = [&](int k, int s, int d) {
    rf += static_cast<long>(k - 1) * d * cum;
    cum *= s;
  };
  grow(7, 1, 1);  // pre
  for (size_t i = 0; i < cfg_.encoder_strides.size(); ++i) {
    const int s = cfg_.encoder_strides[i];
    grow(3 * s, s, 1);
    grow(3, 1, 1);
    grow(3, 1, 3);
  }
  return static_cast<int>(rf / 2 + 1);  // one-sided
}

// ---------------------------------------------------------------------------
// Training step
// ---------------------------------------------------------------------------

StepReport WaveganModel::training_step(const corpus::TrainingPair& pair,
                                       Rng& rng) {
  const Waveform input_full = pad_to_frames(pair.input_wav);
  const Waveform target_full = pad_to_frames(pair.target_wav);
  if (input_full.size() != target_full.size())
    throw std::invalid_argument("pair length mismatch");

  const int total_frames = static_cast<int>(input_full.size()) / kHop;
  const int crop = std::min(cfg_.crop_frames, total_frames);
  const int max_start = total_frames - crop;
  const int start = max_start > 0 ? rng.uniform_int(0, max_start) : 0;

  auto crop_wave = [&](const Waveform& w) {
    Waveform out;
    out.sample_rate_hz = w.sample_rate_hz;
    out.samples.assign(
        w.samples.begin() + static_cast<long>(start) * kHop,
        w.samples.begin() + static_cast<long>(start + crop) * kHop);
    return out;
  };
  const Waveform input = crop_wave(input_full);
  const Waveform target = crop_wave(target_full);
  const Waveform& clean_side =
      pair.target_attribute.is_clean() ? target : input;
  const auto f0 = signals::estimate_f0(clean_side, kHop);

  StepReport report;

  // Generator forward (shared by both phases).
  Var wav_in = waveform_to_var(input);
  const PosteriorV post = encode_v(wav_in);
  Mat eps(post.mean->value.rows(), post.mean->value.cols());
  for (long i = 0; i < eps.size(); ++i) eps.data()[i] = rng.gaussian();
  Var z = add(post.mean, mul(exp_(scale(post.log_var, 0.5)), constant(eps)));
  Var z_tilde = film_modulate_v(z, pair.target_attribute);
  Var fake = decode_v(z_tilde);

  Var real_v = waveform_to_var(target);

  // Discriminator phase: scores on real and detached fake.
  store_.zero_grad();
  Var fake_frozen = detach(fake);
  Var d_loss;
  {
    const auto feats_real = discriminate_v(real_v);
    const auto feats_fake = discriminate_v(fake_frozen);
    for (size_t k = 0; k < feats_real.size(); ++k) {
      Var sr = feats_real[k].back();
      Var sf = feats_fake[k].back();
      Var term = add(mean(square(add_scalar(sr, -1.0))), mean(square(sf)));
      d_loss = d_loss ? add(d_loss, term) : term;
    }
  }
  report.d_loss = d_loss->value(0, 0);
  if (!std::isfinite(report.d_loss)) {
    report.diverged = true;
    return report;
  }
  nn::backward(d_loss);
  disc_opt_.step(discriminator_params());

  // Generator phase against the updated discriminators.
  store_.zero_grad();
  Var g_loss, feat_match;
  {
    const auto feats_real = discriminate_v(real_v);
    const auto feats_fake = discriminate_v(fake);
    int n_feat = 0;
    for (size_t k = 0; k < feats_real.size(); ++k) {
      Var sf = feats_fake[k].back();
      Var term = mean(square(add_scalar(sf, -1.0)));
      g_loss = g_loss ? add(g_loss, term) : term;
      for (size_t l = 0; l + 1 < feats_real[k].size(); ++l) {
        Var fm = mean(abs_(sub(detach(feats_real[k][l]), feats_fake[k][l])));
        feat_match = feat_match ? add(feat_match, fm) : fm;
        ++n_feat;
      }
    }
    feat_match = scale(feat_match, 1.0 / std::max(1, n_feat));
  }

  Var recon = mr_stft_loss_v(target, fake, cfg_.stft_resolutions);
  Var kl = kl_divergence_v(post.mean, post.log_var);
  Var pitch_in = cfg_.pitch_stop_grad ? detach(z) : z;
  Var pitch = pitch_loss_v(pitch_head_v(pitch_in), f0);
  Var residual = sub(fake, real_v);
  Var wav_l1 = mean(abs_(residual));
  Var wav_mse = mean(square(residual));

  Var l_vae = add(recon, kl);
  Var l_adv = add(g_loss, scale(feat_match, cfg_.feat_match_weight));
  Var total = scale(l_vae, cfg_.lambda1);
  total = add(total, scale(pitch, cfg_.lambda2));
  total = add(total, scale(l_adv, cfg_.lambda3));
  total = add(total, scale(wav_l1, cfg_.wav_l1_weight));
  if (cfg_.wav_logmse_weight > 0.0)
    total = add(total,
                scale(log_(add_scalar(wav_mse, 1e-9)), cfg_.wav_logmse_weight));

  report.l_recon = recon->value(0, 0);
  report.l_kl = kl->value(0, 0);
  report.l_vae = l_vae->value(0, 0);
  report.l_pitch = pitch->value(0, 0);
  report.g_loss = g_loss->value(0, 0);
  report.feat_match = feat_match->value(0, 0);
  report.l_adv = l_adv->value(0, 0);
  report.wav_l1 = wav_l1->value(0, 0);
  report.wav_mse = wav_mse->value(0, 0);
  report.total = total->value(0, 0);
  if (!std::isfinite(report.total)) {
    report.diverged = true;
    return report;
  }
  nn::backward(total);
  gen_opt_.step(generator_params());
  return report;
}

}  // namespace ncvc::wavegan
