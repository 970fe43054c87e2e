// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NCVC_NN_AUTODIFF_HPP
#define NCVC_NN_AUTODIFF_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ncvc::nn {

using Mat = Eigen::MatrixXd;

// Reverse-mode autodiff over dense double matrices. Graphs are built by the
// free functions below and are single-use: call backward() once, then drop
// the Vars. Matrices follow a (channels x time) convention.
struct Node {
  Mat value;
  Mat grad;  // allocated on first touch during backward
  bool needs_grad = false;
  bool visited = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  Mat& ensure_grad() {
    if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
    return grad;
  }
};

using Var = std::shared_ptr<Node>;

// Trainable array with optimizer state. Grad is accumulated by leaf nodes.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  Mat m, v;  // Adam moments
  long adam_steps = 0;

  void zero_grad() { grad.setZero(); }
};

class ParamStore {
 public:
  Parameter& create(const std::string& name, int rows, int cols);
  Parameter* find(const std::string& name);
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  std::vector<Parameter*> pointers() const;
  void zero_grad();
  long total_size() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

Var constant(Mat v);
Var leaf(Parameter& p);  // gradients accumulate into p.grad

// Runs the reverse sweep from a scalar (1x1) root.
void backward(const Var& root);

// Elementwise / scalar ops.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var neg(const Var& a);
Var exp_(const Var& a);
Var log_(const Var& a);
Var sqrt_(const Var& a);   // eps-guarded at 0
Var square(const Var& a);
Var tanh_(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var abs_(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.2);
Var clamp(const Var& a, double lo, double hi);
Var clamp_min(const Var& a, double lo);

// Broadcast ops; v has shape (C x 1) and broadcasts over columns.
Var bias_add(const Var& a, const Var& v);
Var colvec_mul(const Var& a, const Var& v);

// Linear algebra / shape ops.
Var matmul(const Var& a, const Var& b);
Var diag_from_col(const Var& v);  // (C x 1) -> (C x C) diagonal
Var slice_rows(const Var& a, int row0, int rows);
Var slice_cols(const Var& a, int col0, int cols);
Var vcat(const Var& a, const Var& b);
Var hcat(const Var& a, const Var& b);
Var reshape(const Var& a, int rows, int cols);  // column-major relabel
Var detach(const Var& a);

// Reductions to 1x1.
Var sum(const Var& a);
Var mean(const Var& a);
Var div(const Var& a, const Var& b_scalar);  // b is 1x1
Var max_with(const Var& a_scalar, double c);  // 1x1, grad passes iff a > c

// Convolutions over time. x is (Cin x T); w is (Cout x Cin*K) with tap k in
// column block [k*Cin, (k+1)*Cin); b is (Cout x 1) or null.
Var conv1d(const Var& x, const Var& w, const Var& b, int k, int stride,
           int dilation, int pad);
// Transposed convolution; output has (T-1)*stride - 2*pad + k columns.
Var conv1d_transpose(const Var& x, const Var& w, const Var& b, int k,
                     int stride, int pad);
Var avg_pool1d(const Var& x, int k, int stride, int pad);

// Centered framing of a (1 x N) signal with reflection padding:
// output (win x ceil(N/hop)).
Var frame_signal(const Var& x, int win, int hop);

inline Var scalar(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(m);
}

int conv1d_output_length(int t, int k, int stride, int dilation, int pad);

}  // namespace ncvc::nn

#endif  // NCVC_NN_AUTODIFF_HPP
