// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ncvc/nn/layers.hpp"

#include <cmath>

namespace ncvc::nn {

void init_conv_weight(Parameter& w, int fan_in, Rng& rng, double gain) {
  const double std = gain / std::sqrt(static_cast<double>(fan_in));
  for (long i = 0; i < w.value.size(); ++i)
    w.value.data()[i] = std * rng.gaussian();
}

Conv1d::Conv1d(ParamStore& store, const std::string& name, int cin, int cout,
               int kernel_, int stride_, int dilation_, int pad_, Rng& rng,
               bool zero_init)
    : kernel(kernel_), stride(stride_), dilation(dilation_), pad(pad_) {
  w = &store.create(name + ".w", cout, cin * kernel_);
  b = &store.create(name + ".b", cout, 1);
  if (!zero_init) init_conv_weight(*w, cin * kernel_, rng);
}

ConvTranspose1d::ConvTranspose1d(ParamStore& store, const std::string& name,
                                 int cin, int cout, int kernel_, int stride_,
                                 int pad_, Rng& rng)
    : kernel(kernel_), stride(stride_), pad(pad_) {
  w = &store.create(name + ".w", cout, cin * kernel_);
  b = &store.create(name + ".b", cout, 1);
  // Fan-in per output sample is cin * kernel / stride.
  init_conv_weight(*w, std::max(1, cin * kernel_ / stride_), rng);
}

Affine::Affine(ParamStore& store, const std::string& name, int in, int out,
               Rng& rng, bool zero_init) {
  w = &store.create(name + ".w", out, in);
  b = &store.create(name + ".b", out, 1);
  if (!zero_init) init_conv_weight(*w, in, rng);
}

double global_grad_norm(const std::vector<Parameter*>& params) {
  double acc = 0.0;
  for (const Parameter* p : params) acc += p->grad.squaredNorm();
  return std::sqrt(acc);
}

void Adam::step(const std::vector<Parameter*>& params) {
  double clip_scale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    const double norm = global_grad_norm(params);
    if (norm > cfg_.clip_norm) clip_scale = cfg_.clip_norm / norm;
  }
  for (Parameter* p : params) {
    if (p->m.size() == 0) {
      p->m = Mat::Zero(p->value.rows(), p->value.cols());
      p->v = Mat::Zero(p->value.rows(), p->value.cols());
    }
    p->adam_steps += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, p->adam_steps);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, p->adam_steps);
    for (long i = 0; i < p->value.size(); ++i) {
      const double g = p->grad.data()[i] * clip_scale;
      double& m = p->m.data()[i];
      double& v = p->v.data()[i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
      p->value.data()[i] -=
          cfg_.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
    }
  }
}

}  // namespace ncvc::nn
