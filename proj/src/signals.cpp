// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ncvc/signals.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace ncvc::signals {

namespace {

constexpr double kLogFloor = 1e-7;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 FFT, in place. n must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a) {
  const int n = static_cast<int>(a.size());
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / len;
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Direct DFT fallback for non-power-of-two sizes (slow path, small n only).
void dft_direct(const std::vector<std::complex<double>>& in,
                std::vector<std::complex<double>>& out) {
  const int n = static_cast<int>(in.size());
  out.assign(n, {0.0, 0.0});
  for (int k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * k * t / n;
      acc += in[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
}

// Reflection index without edge repetition: -1 -> 1, n -> n-2.
inline long reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

}  // namespace

std::vector<StftResolution> default_resolutions() {
  return {{1024, 256, 1024}, {2048, 512, 2048}, {512, 128, 512}};
}

int frame_count(int n_samples, int hop_length) {
  return (n_samples + hop_length - 1) / hop_length;
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

Eigen::MatrixXd stft_magnitude(const Waveform& w, const StftResolution& r) {
  if (r.fft_size <= 0 || r.hop_length <= 0 || r.win_length <= 0 ||
      r.win_length > r.fft_size || r.hop_length > r.win_length)
    throw std::invalid_argument("stft: bad resolution");
  const long n = w.size();
  if (n < r.win_length) throw std::invalid_argument("input too short");

  const int bins = r.fft_size / 2 + 1;
  const int frames = frame_count(static_cast<int>(n), r.hop_length);
  const std::vector<double> win = hann_window(r.win_length);
  const int half = r.win_length / 2;

  Eigen::MatrixXd mag(bins, frames);
  std::vector<std::complex<double>> buf(r.fft_size);
  std::vector<std::complex<double>> out;
  for (int t = 0; t < frames; ++t) {
    const long center = static_cast<long>(t) * r.hop_length;
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    for (int i = 0; i < r.win_length; ++i) {
      const long src = reflect_index(center - half + i, n);
      buf[i] = win[i] * static_cast<double>(w.samples[src]);
    }
    const std::complex<double>* spec = buf.data();
    if (is_pow2(r.fft_size)) {
      fft_pow2(buf);
    } else {
      dft_direct(buf, out);
      spec = out.data();
    }
    for (int b = 0; b < bins; ++b) mag(b, t) = std::abs(spec[b]);
  }
  return mag;
}

double mr_stft_loss(const Waveform& x, const Waveform& y,
                    const std::vector<StftResolution>& resolutions) {
  if (x.size() != y.size()) throw std::invalid_argument("length mismatch");
  if (x.sample_rate_hz != y.sample_rate_hz)
    throw std::invalid_argument("sample rate mismatch");
  if (resolutions.empty()) throw std::invalid_argument("no resolutions");

  double total = 0.0;
  for (const auto& r : resolutions) {
    const Eigen::MatrixXd mx = stft_magnitude(x, r);
    const Eigen::MatrixXd my = stft_magnitude(y, r);
    const double ref_norm = std::max(mx.norm(), kLogFloor);
    const double sc = (mx - my).norm() / ref_norm;
    const double logmag =
        (mx.array().max(kLogFloor).log() - my.array().max(kLogFloor).log())
            .abs()
            .mean();
    total += sc + logmag;
  }
  return total / static_cast<double>(resolutions.size());
}

F0Track estimate_f0(const Waveform& w, int hop_length) {
  if (w.sample_rate_hz < 8000) throw std::invalid_argument("sample rate too low");
  if (hop_length <= 0) throw std::invalid_argument("bad hop");
  const int sr = w.sample_rate_hz;
  const long n = w.size();
  const int frames = frame_count(static_cast<int>(n), hop_length);
  const int lag_min = sr / 500;
  const int lag_max = sr / 50;
  const int win = lag_max * 2;  // two periods of the lowest searched pitch

  F0Track track;
  track.hop_length = hop_length;
  track.f0_hz.assign(frames, 0.0);
  track.voiced.assign(frames, 0);

  std::vector<double> x(win + lag_max);
  for (int t = 0; t < frames; ++t) {
    const long center = static_cast<long>(t) * hop_length;
    const long start = center - win / 2;
    for (int i = 0; i < win + lag_max; ++i) {
      const long src = start + i;
      x[i] = (src >= 0 && src < n) ? static_cast<double>(w.samples[src]) : 0.0;
    }
    double e0 = 0.0;
    for (int i = 0; i < win; ++i) e0 += x[i] * x[i];
    if (e0 < 1e-10) continue;  // silence stays unvoiced

    double best_r = 0.0;
    int best_lag = 0;
    std::vector<double> corr(lag_max + 1, 0.0);
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      double num = 0.0, e1 = 0.0;
      for (int i = 0; i < win; ++i) {
        num += x[i] * x[i + lag];
        e1 += x[i + lag] * x[i + lag];
      }
      const double r = num / std::sqrt(std::max(e0 * e1, 1e-20));
      corr[lag] = r;
      if (r > best_r) {
        best_r = r;
        best_lag = lag;
      }
    }
    if (best_r < 0.3 || best_lag == 0) continue;

    // Parabolic refinement around the autocorrelation peak.
    double lag = best_lag;
    if (best_lag > lag_min && best_lag < lag_max) {
      const double a = corr[best_lag - 1], b = corr[best_lag],
                   c = corr[best_lag + 1];
      const double denom = a - 2.0 * b + c;
      if (std::abs(denom) > 1e-12) lag += 0.5 * (a - c) / denom;
    }
    const double f0 = sr / lag;
    if (f0 < 50.0 || f0 > 500.0) continue;
    track.f0_hz[t] = f0;
    track.voiced[t] = 1;
  }
  return track;
}

double signal_power(const Waveform& w) {
  if (w.samples.empty()) return 0.0;
  double acc = 0.0;
  for (float s : w.samples) acc += static_cast<double>(s) * s;
  return acc / static_cast<double>(w.samples.size());
}

Waveform mix_at_snr(const Waveform& clean, const Waveform& noise,
                    double snr_db, long noise_offset, double* applied_scale) {
  if (clean.sample_rate_hz != noise.sample_rate_hz)
    throw std::invalid_argument("sample rate mismatch");
  if (applied_scale) *applied_scale = 1.0;
  if (std::isinf(snr_db) && snr_db > 0) return clean;  // "clean" attribute
  if (clean.samples.empty()) throw std::invalid_argument("empty clean signal");
  if (noise.samples.empty()) throw std::invalid_argument("degenerate noise");

  const long n = clean.size();
  const long nn = noise.size();
  std::vector<double> seg(n);
  double p_noise = 0.0;
  for (long i = 0; i < n; ++i) {
    const long src = ((noise_offset + i) % nn + nn) % nn;
    seg[i] = static_cast<double>(noise.samples[src]);
    p_noise += seg[i] * seg[i];
  }
  p_noise /= static_cast<double>(n);
  if (p_noise <= 0.0) throw std::invalid_argument("degenerate noise");
  const double p_clean = signal_power(clean);
  if (p_clean <= 0.0) throw std::invalid_argument("clean has zero power");

  const double g = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));

  double peak = 0.0;
  std::vector<double> mix(n);
  for (long i = 0; i < n; ++i) {
    mix[i] = static_cast<double>(clean.samples[i]) + g * seg[i];
    peak = std::max(peak, std::abs(mix[i]));
  }
  // Joint rescale preserves the clean/noise ratio; a hard clip would bias it.
  double scale = 1.0;
  if (peak > 0.99) scale = 0.99 / peak;
  if (applied_scale) *applied_scale = scale;

  Waveform out;
  out.sample_rate_hz = clean.sample_rate_hz;
  out.samples.resize(n);
  for (long i = 0; i < n; ++i)
    out.samples[i] = static_cast<float>(mix[i] * scale);
  return out;
}

double measure_snr(const Waveform& clean, const Waveform& noisy) {
  if (clean.size() != noisy.size()) throw std::invalid_argument("length mismatch");
  double p_clean = 0.0, p_res = 0.0;
  for (long i = 0; i < clean.size(); ++i) {
    const double c = clean.samples[i];
    const double r = static_cast<double>(noisy.samples[i]) - c;
    p_clean += c * c;
    p_res += r * r;
  }
  if (p_res == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(p_clean / p_res);
}

}  // namespace ncvc::signals
