// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Independent reference implementations used as test oracles. Everything in
// this header is deliberately written the slow, obvious way and must not call
// into the implementation paths it checks.

#ifndef NCVC_TESTS_ORACLES_HPP
#define NCVC_TESTS_ORACLES_HPP

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "ncvc/nn/autodiff.hpp"
#include "ncvc/rng.hpp"
#include "ncvc/signals.hpp"

namespace oracles {

// Naive O(n^2) DFT magnitude spectrogram with centered reflection-padded
// frames and a periodic Hann window, written from the definition.
inline Eigen::MatrixXd dft_magnitude(const std::vector<float>& x, int fft_size,
                                     int hop, int win) {
  const long n = static_cast<long>(x.size());
  auto reflect = [n](long i) {
    if (n == 1) return 0L;
    const long period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
  };
  const int frames = static_cast<int>((n + hop - 1) / hop);
  const int bins = fft_size / 2 + 1;
  Eigen::MatrixXd mag(bins, frames);
  for (int t = 0; t < frames; ++t) {
    std::vector<double> frame(fft_size, 0.0);
    for (int i = 0; i < win; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win);
      frame[i] = w * x[reflect(static_cast<long>(t) * hop - win / 2 + i)];
    }
    for (int b = 0; b < bins; ++b) {
      double re = 0.0, im = 0.0;
      for (int i = 0; i < fft_size; ++i) {
        const double ang = -2.0 * std::numbers::pi * b * i / fft_size;
        re += frame[i] * std::cos(ang);
        im += frame[i] * std::sin(ang);
      }
      mag(b, t) = std::sqrt(re * re + im * im);
    }
  }
  return mag;
}

// Single-resolution STFT loss from the definition (spectral convergence +
// log-magnitude L1), using the naive DFT above.
inline double single_res_stft_loss(const ncvc::signals::Waveform& x,
                                   const ncvc::signals::Waveform& y,
                                   int fft_size, int hop, int win) {
  const Eigen::MatrixXd mx = dft_magnitude(x.samples, fft_size, hop, win);
  const Eigen::MatrixXd my = dft_magnitude(y.samples, fft_size, hop, win);
  const double sc = (mx - my).norm() / std::max(mx.norm(), 1e-7);
  double l1 = 0.0;
  for (long i = 0; i < mx.size(); ++i)
    l1 += std::abs(std::log(std::max(mx.data()[i], 1e-7)) -
                   std::log(std::max(my.data()[i], 1e-7)));
  return sc + l1 / static_cast<double>(mx.size());
}

// Directional finite-difference check: compares the analytic directional
// derivative g.v against (f(th + h v) - f(th - h v)) / 2h for random v.
// `params` are perturbed in place and restored. Returns max relative error
// over `n_directions` random directions.
inline double fd_directional_check(
    const std::vector<ncvc::nn::Parameter*>& params,
    const std::function<double(bool)>& eval_loss_and_maybe_grad,
    ncvc::Rng& rng, int n_directions = 5, double h = 1e-5) {
  // One analytic evaluation fills the gradients.
  for (auto* p : params) p->zero_grad();
  eval_loss_and_maybe_grad(true);

  std::vector<Eigen::MatrixXd> grads;
  grads.reserve(params.size());
  for (auto* p : params) grads.push_back(p->grad);

  double worst = 0.0;
  for (int d = 0; d < n_directions; ++d) {
    std::vector<Eigen::MatrixXd> dirs;
    dirs.reserve(params.size());
    double analytic = 0.0;
    for (size_t i = 0; i < params.size(); ++i) {
      Eigen::MatrixXd v(params[i]->value.rows(), params[i]->value.cols());
      for (long j = 0; j < v.size(); ++j) v.data()[j] = rng.gaussian();
      analytic += (grads[i].array() * v.array()).sum();
      dirs.push_back(std::move(v));
    }
    for (size_t i = 0; i < params.size(); ++i)
      params[i]->value += h * dirs[i];
    const double fplus = eval_loss_and_maybe_grad(false);
    for (size_t i = 0; i < params.size(); ++i)
      params[i]->value -= 2.0 * h * dirs[i];
    const double fminus = eval_loss_and_maybe_grad(false);
    for (size_t i = 0; i < params.size(); ++i)
      params[i]->value += h * dirs[i];

    const double numeric = (fplus - fminus) / (2.0 * h);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / scale);
  }
  return worst;
}

// log|det J| of a map R^n -> R^n assembled column by column with central
// differences.
inline double numeric_logabsdet(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double h = 1e-6) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd jac(n, n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    jac.col(j) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return std::log(std::abs(jac.determinant()));
}

// Monte-Carlo estimate of KL(q || N(0,1)) for a diagonal Gaussian q.
inline double mc_gaussian_kl(const Eigen::MatrixXd& mean,
                             const Eigen::MatrixXd& log_var, long n_samples,
                             ncvc::Rng& rng) {
  double acc = 0.0;
  const long dims = mean.size();
  for (long s = 0; s < n_samples; ++s) {
    double lq = 0.0, lp = 0.0;
    for (long i = 0; i < dims; ++i) {
      const double sigma = std::exp(0.5 * log_var.data()[i]);
      const double z = mean.data()[i] + sigma * rng.gaussian();
      const double zq = (z - mean.data()[i]) / sigma;
      lq += -0.5 * zq * zq - 0.5 * log_var.data()[i];
      lp += -0.5 * z * z;
    }
    acc += lq - lp;
  }
  return acc / (static_cast<double>(n_samples) * static_cast<double>(dims));
}

inline ncvc::signals::Waveform make_sine(double freq_hz, double seconds,
                                         double amp = 0.5, int sr = 16000,
                                         double phase = 0.0) {
  ncvc::signals::Waveform w;
  w.sample_rate_hz = sr;
  const long n = static_cast<long>(seconds * sr);
  w.samples.resize(n);
  for (long i = 0; i < n; ++i)
    w.samples[i] = static_cast<float>(
        amp * std::sin(2.0 * std::numbers::pi * freq_hz * i / sr + phase));
  return w;
}

inline ncvc::signals::Waveform make_noise(long n, uint64_t seed,
                                          double amp = 0.3, int sr = 16000) {
  ncvc::signals::Waveform w;
  w.sample_rate_hz = sr;
  w.samples.resize(n);
  ncvc::Rng rng(seed);
  for (long i = 0; i < n; ++i)
    w.samples[i] = static_cast<float>(amp * (2.0 * rng.uniform() - 1.0));
  return w;
}

}  // namespace oracles

#endif  // NCVC_TESTS_ORACLES_HPP
