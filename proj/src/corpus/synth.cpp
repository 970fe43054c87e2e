// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <filesystem>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "ncvc/corpus.hpp"
#include "ncvc/rng.hpp"

namespace ncvc::corpus {

namespace fs = std::filesystem;

namespace {

constexpr int kHarmonics = 8;
constexpr int kNoiseFiles = 3;

// Phone identity is a harmonic amplitude profile shared across speakers;
// profiles come from a fixed stream so the inventory does not depend on the
// corpus seed.
std::vector<std::vector<double>> phone_profiles(int n_phones) {
  Rng rng(0x70686f6e55UL);  // fixed inventory stream
  std::vector<std::vector<double>> profiles(n_phones);
  for (int p = 0; p < n_phones; ++p) {
    auto& prof = profiles[p];
    prof.resize(kHarmonics);
    // Two formant-like peaks over a 1/h rolloff.
    const int f1 = 1 + rng.uniform_int(0, 2);
    const int f2 = 4 + rng.uniform_int(0, 3);
    const double w1 = 0.8 + 0.6 * rng.uniform();
    const double w2 = 0.5 + 0.5 * rng.uniform();
    for (int h = 0; h < kHarmonics; ++h) {
      const double base = 1.0 / (1.0 + h);
      const double peak1 = w1 * std::exp(-0.7 * (h - f1) * (h - f1));
      const double peak2 = w2 * std::exp(-0.9 * (h - f2) * (h - f2));
      prof[h] = base + peak1 + peak2;
    }
  }
  return profiles;
}

Waveform make_colored_noise(long n, double pole, double amp, Rng& rng,
                            int sample_rate) {
  Waveform w;
  w.sample_rate_hz = sample_rate;
  w.samples.resize(n);
  double state = 0.0;
  for (long i = 0; i < n; ++i) {
    state = pole * state + (1.0 - pole) * rng.gaussian();
    w.samples[i] = static_cast<float>(state);
  }
  // Normalize to the requested peak.
  float peak = 1e-9f;
  for (float s : w.samples) peak = std::max(peak, std::abs(s));
  for (auto& s : w.samples) s = static_cast<float>(s * amp / peak);
  return w;
}

}  // namespace

CorpusManifest synth_corpus(const SynthConfig& cfg) {
  if (cfg.n_speakers < 2) throw std::invalid_argument("need >= 2 speakers");
  if (cfg.n_utts_per_speaker < 4)
    throw std::invalid_argument("need >= 4 utterances per speaker");
  if (cfg.out_dir.empty()) throw std::invalid_argument("need an out dir");
  fs::create_directories(fs::path(cfg.out_dir) / "wav");
  fs::create_directories(fs::path(cfg.out_dir) / "ppg");
  fs::create_directories(fs::path(cfg.out_dir) / "noise");

  const int sr = cfg.sample_rate_hz;
  const int hop = cfg.hop_length;
  const auto profiles = phone_profiles(cfg.n_phone_classes);

  // Noise "recordings": one-pole colored noise with distinct spectra.
  Rng noise_rng = Rng(cfg.seed).fork(1);
  std::vector<std::string> noise_files;
  const double poles[kNoiseFiles] = {0.6, 0.9, 0.97};
  for (int i = 0; i < kNoiseFiles; ++i) {
    const Waveform noise =
        make_colored_noise(2 * sr, poles[i], 0.3, noise_rng, sr);
    const std::string rel = "noise/noise" + std::to_string(i) + ".wav";
    save_wav(noise, (fs::path(cfg.out_dir) / rel).string());
    noise_files.push_back((fs::path(cfg.out_dir) / rel).string());
  }

  CorpusManifest clean;
  clean.sample_rate_hz = sr;
  clean.hop_length = hop;
  clean.base_dir = cfg.out_dir;

  Rng rng = Rng(cfg.seed).fork(2);
  for (int s = 0; s < cfg.n_speakers; ++s) {
    const std::string speaker = "spk" + std::to_string(s);
    // F0 sits on the 100 Hz frame grid so harmonic phase repeats every
    // frame: the latent then depends only on the local phone context and
    // the speaker, which keeps PPG-driven resynthesis well posed.
    const double f0 = 100.0 * (1 + s % 4);
    const double tilt = 0.5 + 0.2 * (s % 5);
    std::vector<double> timbre(kHarmonics);
    for (int h = 0; h < kHarmonics; ++h)
      timbre[h] = 1.0 + 0.2 * std::sin(0.9 * (h + 1) * (s + 1));

    for (int uidx = 0; uidx < cfg.n_utts_per_speaker; ++uidx) {
      // Phone sequence with whole-frame durations.
      const int n_ph = rng.uniform_int(4, 7);
      std::vector<int> phones(n_ph), durs(n_ph);
      for (int i = 0; i < n_ph; ++i) {
        phones[i] = rng.uniform_int(0, cfg.n_phone_classes - 1);
        durs[i] = rng.uniform_int(8, 14);  // 80-140 ms at the 10 ms grid
      }
      int frames = 0;
      for (int d : durs) frames += d;
      const long n = static_cast<long>(frames) * hop;

      // Frame-level phone timeline.
      std::vector<int> frame_phone(frames);
      {
        int t = 0;
        for (int i = 0; i < n_ph; ++i)
          for (int d = 0; d < durs[i]; ++d) frame_phone[t++] = phones[i];
      }

      // Per-frame harmonic amplitude targets, then sample-level synthesis with
      // linear interpolation between frames and a coherent phase per harmonic.
      Eigen::MatrixXd amps(kHarmonics, frames);
      for (int t = 0; t < frames; ++t)
        for (int h = 0; h < kHarmonics; ++h)
          amps(h, t) =
              timbre[h] * profiles[frame_phone[t]][h] / std::pow(1.0 + h, tilt);

      Waveform w;
      w.sample_rate_hz = sr;
      w.samples.resize(n);
      std::vector<double> phase(kHarmonics, 0.0);
      for (int h = 0; h < kHarmonics; ++h) phase[h] = 0.61 * (h + 1);
      double peak = 1e-9;
      std::vector<double> raw(n);
      for (long i = 0; i < n; ++i) {
        const double tf = static_cast<double>(i) / hop;
        const int t0 = std::min<int>(frames - 1, static_cast<int>(tf));
        const int t1 = std::min<int>(frames - 1, t0 + 1);
        const double frac = tf - t0;
        double v = 0.0;
        for (int h = 0; h < kHarmonics; ++h) {
          const double a = (1.0 - frac) * amps(h, t0) + frac * amps(h, t1);
          v += a * std::sin(2.0 * std::numbers::pi * (h + 1) * f0 * i / sr +
                            phase[h]);
        }
        // Short raised-cosine fades avoid onset/offset clicks.
        const long fade = 2 * hop;
        if (i < fade) v *= 0.5 - 0.5 * std::cos(std::numbers::pi * i / fade);
        if (i >= n - fade)
          v *= 0.5 - 0.5 * std::cos(std::numbers::pi * (n - 1 - i) / fade);
        raw[i] = v;
        peak = std::max(peak, std::abs(v));
      }
      for (long i = 0; i < n; ++i)
        w.samples[i] = static_cast<float>(raw[i] * 0.35 / peak);

      // Ground-truth PPG: smoothed one-hot over the generating phones, with
      // a dedicated silence class marking the faded utterance edges so the
      // conversion model can see them.
      const int n_classes = cfg.n_phone_classes + 1;
      const int sil = cfg.n_phone_classes;
      PPGSequence ppg;
      ppg.posteriors =
          Eigen::MatrixXd::Constant(n_classes, frames, 0.02 / n_classes);
      for (int t = 0; t < frames; ++t) {
        if (t < 2 || t >= frames - 2) {
          ppg.posteriors(sil, t) += 0.98;
          continue;
        }
        const bool boundary =
            t + 1 < frames && frame_phone[t + 1] != frame_phone[t];
        if (boundary) {
          ppg.posteriors(frame_phone[t], t) += 0.49;
          ppg.posteriors(frame_phone[t + 1], t) += 0.49;
        } else {
          ppg.posteriors(frame_phone[t], t) += 0.98;
        }
      }
      for (int t = 0; t < frames; ++t)
        ppg.posteriors.col(t) /= ppg.posteriors.col(t).sum();

      char name[64];
      std::snprintf(name, sizeof(name), "%s_u%03d", speaker.c_str(), uidx);
      Utterance u;
      u.id = name;
      u.speaker_id = speaker;
      u.attribute = AttributeVector::clean();
      u.wav_path = "wav/" + u.id + ".wav";
      u.ppg_path = "ppg/" + u.id + ".ppg";
      save_wav(w, (fs::path(cfg.out_dir) / u.wav_path).string());
      save_ppg(ppg, (fs::path(cfg.out_dir) / *u.ppg_path).string());
      clean.entries.push_back(std::move(u));
    }
  }

  return build_paired_corpus(clean, noise_files, cfg.snr_lo_db, cfg.snr_hi_db,
                             Rng(cfg.seed).fork(3).next_u64(), cfg.out_dir);
}

}  // namespace ncvc::corpus
