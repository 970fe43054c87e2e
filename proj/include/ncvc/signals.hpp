// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NCVC_SIGNALS_HPP
#define NCVC_SIGNALS_HPP

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace ncvc::signals {

// Mono audio. Samples are stored single precision; all analysis below runs
// in double internally.
struct Waveform {
  std::vector<float> samples;
  int sample_rate_hz = 16000;

  int size() const { return static_cast<int>(samples.size()); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

struct StftResolution {
  int fft_size = 1024;
  int hop_length = 256;
  int win_length = 1024;
};

// The de-facto standard triple used when no resolutions are configured.
std::vector<StftResolution> default_resolutions();

// Frame-level F0 with 0 encoding unvoiced; voiced[t] mirrors f0_hz[t] > 0.
struct F0Track {
  std::vector<double> f0_hz;
  std::vector<uint8_t> voiced;
  int hop_length = 160;

  int frames() const { return static_cast<int>(f0_hz.size()); }
};

// Number of centered analysis frames for a signal of n samples: ceil(n/hop).
int frame_count(int n_samples, int hop_length);

// Magnitude spectrogram, shape (fft_size/2 + 1) x frame_count(n, hop).
// Centered frames with reflection padding, periodic Hann window.
// Throws std::invalid_argument if the waveform is shorter than one window.
Eigen::MatrixXd stft_magnitude(const Waveform& w, const StftResolution& r);

// Spectral convergence + log-magnitude L1, averaged over resolutions.
// x is the reference signal (its spectrum normalizes the convergence term).
double mr_stft_loss(const Waveform& x, const Waveform& y,
                    const std::vector<StftResolution>& resolutions);

// Frame-wise normalized-autocorrelation pitch tracker, search range 50-500 Hz,
// frames with periodicity peak < 0.3 marked unvoiced.
F0Track estimate_f0(const Waveform& w, int hop_length);

// clean + g*noise with g chosen so the clean-to-scaled-noise power ratio is
// snr_db. The noise is looped/truncated to the clean length with the given
// segment offset. If the mix would clip, clean and noise are rescaled jointly
// (SNR preserved); the applied scale is written to *applied_scale when given.
// snr_db = +inf returns the clean signal unchanged.
Waveform mix_at_snr(const Waveform& clean, const Waveform& noise,
                    double snr_db, long noise_offset = 0,
                    double* applied_scale = nullptr);

// 10*log10(P_clean / P_residual), residual = noisy - clean.
// Returns +inf when the residual power is exactly zero.
double measure_snr(const Waveform& clean, const Waveform& noisy);

// Shared helpers.
double signal_power(const Waveform& w);
std::vector<double> hann_window(int n);  // periodic

}  // namespace ncvc::signals

#endif  // NCVC_SIGNALS_HPP
