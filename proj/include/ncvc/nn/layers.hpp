// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NCVC_NN_LAYERS_HPP
#define NCVC_NN_LAYERS_HPP

#include <string>
#include <vector>

#include "ncvc/nn/autodiff.hpp"
#include "ncvc/rng.hpp"

namespace ncvc::nn {

// Kaiming-style fan-in scaled normal init.
void init_conv_weight(Parameter& w, int fan_in, Rng& rng, double gain = 1.0);

struct Conv1d {
  Parameter* w = nullptr;
  Parameter* b = nullptr;
  int kernel = 1, stride = 1, dilation = 1, pad = 0;

  Conv1d() = default;
  Conv1d(ParamStore& store, const std::string& name, int cin, int cout,
         int kernel, int stride, int dilation, int pad, Rng& rng,
         bool zero_init = false);

  Var operator()(const Var& x) const {
    return conv1d(x, leaf(*w), leaf(*b), kernel, stride, dilation, pad);
  }
  int out_length(int t) const {
    return conv1d_output_length(t, kernel, stride, dilation, pad);
  }
};

struct ConvTranspose1d {
  Parameter* w = nullptr;
  Parameter* b = nullptr;
  int kernel = 1, stride = 1, pad = 0;

  ConvTranspose1d() = default;
  ConvTranspose1d(ParamStore& store, const std::string& name, int cin,
                  int cout, int kernel, int stride, int pad, Rng& rng);

  Var operator()(const Var& x) const {
    return conv1d_transpose(x, leaf(*w), leaf(*b), kernel, stride, pad);
  }
};

// Affine map applied to a column: y = W x + b.
struct Affine {
  Parameter* w = nullptr;
  Parameter* b = nullptr;

  Affine() = default;
  Affine(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
         bool zero_init = false);

  Var operator()(const Var& x) const {
    return bias_add(matmul(leaf(*w), x), leaf(*b));
  }
};

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double eps = 1e-8;
  double clip_norm = 5.0;  // global-norm gradient clip; <=0 disables
};

// Clips the group's global gradient norm, then applies Adam per parameter.
// Moments live on the parameters, so disjoint groups can share a store.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  void step(const std::vector<Parameter*>& params);
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
};

double global_grad_norm(const std::vector<Parameter*>& params);

}  // namespace ncvc::nn

#endif  // NCVC_NN_LAYERS_HPP
