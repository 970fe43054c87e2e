// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ncvc/nn/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace ncvc::nn {

namespace {

Var make(Mat value, std::vector<Var> parents, std::function<void(Node&)> bp) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->needs_grad) n->needs_grad = true;
  if (n->needs_grad) n->backprop = std::move(bp);
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

// Elementwise map helper keeping Matrix types throughout.
template <typename F>
Mat map(const Mat& x, F f) {
  Mat y(x.rows(), x.cols());
  const double* src = x.data();
  double* dst = y.data();
  for (long i = 0; i < x.size(); ++i) dst[i] = f(src[i]);
  return y;
}

double stable_sigmoid(double x) {
  return 0.5 * std::tanh(0.5 * x) + 0.5;
}

}  // namespace

Parameter& ParamStore::create(const std::string& name, int rows, int cols) {
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Mat::Zero(rows, cols);
  p->grad = Mat::Zero(rows, cols);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParamStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::vector<Parameter*> ParamStore::pointers() const {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

long ParamStore::total_size() const {
  long n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

Var constant(Mat v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}

Var leaf(Parameter& p) {
  auto n = std::make_shared<Node>();
  n->value = p.value;
  n->needs_grad = true;
  Parameter* sink = &p;
  n->backprop = [sink](Node& self) { sink->grad += self.grad; };
  return n;
}

void backward(const Var& root) {
  if (root->value.rows() != 1 || root->value.cols() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  // Iterative post-order DFS, then reverse sweep in topological order.
  std::vector<Node*> order;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  root->visited = true;
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx++].get();
      if (!parent->visited && parent->needs_grad) {
        parent->visited = true;
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad()(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad.size() != 0) n->backprop(*n);
  }
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make(a->value + b->value, {a, b}, [](Node& n) {
    if (n.parents[0]->needs_grad) n.parents[0]->ensure_grad() += n.grad;
    if (n.parents[1]->needs_grad) n.parents[1]->ensure_grad() += n.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make(a->value - b->value, {a, b}, [](Node& n) {
    if (n.parents[0]->needs_grad) n.parents[0]->ensure_grad() += n.grad;
    if (n.parents[1]->needs_grad) n.parents[1]->ensure_grad() -= n.grad;
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make(a->value.cwiseProduct(b->value), {a, b}, [](Node& n) {
    if (n.parents[0]->needs_grad)
      n.parents[0]->ensure_grad() += n.grad.cwiseProduct(n.parents[1]->value);
    if (n.parents[1]->needs_grad)
      n.parents[1]->ensure_grad() += n.grad.cwiseProduct(n.parents[0]->value);
  });
}

Var scale(const Var& a, double c) {
  return make(a->value * c, {a}, [c](Node& n) {
    n.parents[0]->ensure_grad() += n.grad * c;
  });
}

Var add_scalar(const Var& a, double c) {
  return make(map(a->value, [c](double v) { return v + c; }), {a},
              [](Node& n) { n.parents[0]->ensure_grad() += n.grad; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var exp_(const Var& a) {
  return make(map(a->value, [](double v) { return std::exp(v); }), {a},
              [](Node& n) {
                n.parents[0]->ensure_grad() += n.grad.cwiseProduct(n.value);
              });
}

Var log_(const Var& a) {
  return make(map(a->value, [](double v) { return std::log(v); }), {a},
              [](Node& n) {
                n.parents[0]->ensure_grad().array() +=
                    n.grad.array() / n.parents[0]->value.array();
              });
}

Var sqrt_(const Var& a) {
  return make(map(a->value, [](double v) { return std::sqrt(v); }), {a},
              [](Node& n) {
                n.parents[0]->ensure_grad().array() +=
                    n.grad.array() / (2.0 * n.value.array() + 1e-300);
              });
}

Var square(const Var& a) {
  return make(map(a->value, [](double v) { return v * v; }), {a}, [](Node& n) {
    n.parents[0]->ensure_grad() +=
        2.0 * n.grad.cwiseProduct(n.parents[0]->value);
  });
}

Var tanh_(const Var& a) {
  return make(map(a->value, [](double v) { return std::tanh(v); }), {a},
              [](Node& n) {
                n.parents[0]->ensure_grad().array() +=
                    n.grad.array() * (1.0 - n.value.array().square());
              });
}

Var sigmoid(const Var& a) {
  return make(map(a->value, stable_sigmoid), {a}, [](Node& n) {
    n.parents[0]->ensure_grad().array() +=
        n.grad.array() * n.value.array() * (1.0 - n.value.array());
  });
}

Var softplus(const Var& a) {
  // Stable: max(x,0) + log1p(exp(-|x|)); derivative is the sigmoid.
  auto f = [](double v) {
    return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
  };
  return make(map(a->value, f), {a}, [](Node& n) {
    const Mat& x = n.parents[0]->value;
    Mat& g = n.parents[0]->ensure_grad();
    for (long i = 0; i < x.size(); ++i)
      g.data()[i] += n.grad.data()[i] * stable_sigmoid(x.data()[i]);
  });
}

Var abs_(const Var& a) {
  return make(map(a->value, [](double v) { return std::abs(v); }), {a},
              [](Node& n) {
                const Mat& x = n.parents[0]->value;
                Mat& g = n.parents[0]->ensure_grad();
                for (long i = 0; i < x.size(); ++i)
                  g.data()[i] += n.grad.data()[i] *
                                 (x.data()[i] > 0.0   ? 1.0
                                  : x.data()[i] < 0.0 ? -1.0
                                                      : 0.0);
              });
}

Var leaky_relu(const Var& a, double slope) {
  return make(
      map(a->value, [slope](double v) { return v > 0.0 ? v : slope * v; }),
      {a}, [slope](Node& n) {
        const Mat& x = n.parents[0]->value;
        Mat& g = n.parents[0]->ensure_grad();
        for (long i = 0; i < x.size(); ++i)
          g.data()[i] += n.grad.data()[i] * (x.data()[i] > 0.0 ? 1.0 : slope);
      });
}

Var clamp(const Var& a, double lo, double hi) {
  return make(
      map(a->value, [lo, hi](double v) { return std::clamp(v, lo, hi); }), {a},
      [lo, hi](Node& n) {
        const Mat& x = n.parents[0]->value;
        Mat& g = n.parents[0]->ensure_grad();
        for (long i = 0; i < x.size(); ++i)
          if (x.data()[i] > lo && x.data()[i] < hi)
            g.data()[i] += n.grad.data()[i];
      });
}

Var clamp_min(const Var& a, double lo) {
  return make(map(a->value, [lo](double v) { return std::max(v, lo); }), {a},
              [lo](Node& n) {
                const Mat& x = n.parents[0]->value;
                Mat& g = n.parents[0]->ensure_grad();
                for (long i = 0; i < x.size(); ++i)
                  if (x.data()[i] > lo) g.data()[i] += n.grad.data()[i];
              });
}

Var bias_add(const Var& a, const Var& v) {
  if (v->value.cols() != 1 || v->value.rows() != a->value.rows())
    throw std::invalid_argument("bias_add: bad vector shape");
  Mat y = a->value;
  y.colwise() += Eigen::VectorXd(v->value.col(0));
  return make(std::move(y), {a, v}, [](Node& n) {
    if (n.parents[0]->needs_grad) n.parents[0]->ensure_grad() += n.grad;
    if (n.parents[1]->needs_grad)
      n.parents[1]->ensure_grad() += n.grad.rowwise().sum();
  });
}

Var colvec_mul(const Var& a, const Var& v) {
  if (v->value.cols() != 1 || v->value.rows() != a->value.rows())
    throw std::invalid_argument("colvec_mul: bad vector shape");
  Mat y = (a->value.array().colwise() * v->value.col(0).array()).matrix();
  return make(std::move(y), {a, v}, [](Node& n) {
    if (n.parents[0]->needs_grad)
      n.parents[0]->ensure_grad().array() +=
          n.grad.array().colwise() * n.parents[1]->value.col(0).array();
    if (n.parents[1]->needs_grad)
      n.parents[1]->ensure_grad() +=
          n.grad.cwiseProduct(n.parents[0]->value).rowwise().sum();
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a->value.cols() != b->value.rows())
    throw std::invalid_argument("matmul: inner dim mismatch");
  return make(a->value * b->value, {a, b}, [](Node& n) {
    if (n.parents[0]->needs_grad)
      n.parents[0]->ensure_grad().noalias() +=
          n.grad * n.parents[1]->value.transpose();
    if (n.parents[1]->needs_grad)
      n.parents[1]->ensure_grad().noalias() +=
          n.parents[0]->value.transpose() * n.grad;
  });
}

Var diag_from_col(const Var& v) {
  if (v->value.cols() != 1) throw std::invalid_argument("diag: want column");
  const int c = static_cast<int>(v->value.rows());
  Mat y = Mat::Zero(c, c);
  y.diagonal() = v->value.col(0);
  return make(std::move(y), {v}, [](Node& n) {
    n.parents[0]->ensure_grad().col(0) += n.grad.diagonal();
  });
}

Var slice_rows(const Var& a, int row0, int rows) {
  return make(a->value.middleRows(row0, rows), {a}, [row0, rows](Node& n) {
    n.parents[0]->ensure_grad().middleRows(row0, rows) += n.grad;
  });
}

Var slice_cols(const Var& a, int col0, int cols) {
  return make(a->value.middleCols(col0, cols), {a}, [col0, cols](Node& n) {
    n.parents[0]->ensure_grad().middleCols(col0, cols) += n.grad;
  });
}

Var vcat(const Var& a, const Var& b) {
  if (a->value.cols() != b->value.cols())
    throw std::invalid_argument("vcat: column mismatch");
  Mat y(a->value.rows() + b->value.rows(), a->value.cols());
  y.topRows(a->value.rows()) = a->value;
  y.bottomRows(b->value.rows()) = b->value;
  const int ra = static_cast<int>(a->value.rows());
  const int rb = static_cast<int>(b->value.rows());
  return make(std::move(y), {a, b}, [ra, rb](Node& n) {
    if (n.parents[0]->needs_grad)
      n.parents[0]->ensure_grad() += n.grad.topRows(ra);
    if (n.parents[1]->needs_grad)
      n.parents[1]->ensure_grad() += n.grad.bottomRows(rb);
  });
}

Var hcat(const Var& a, const Var& b) {
  if (a->value.rows() != b->value.rows())
    throw std::invalid_argument("hcat: row mismatch");
  Mat y(a->value.rows(), a->value.cols() + b->value.cols());
  y.leftCols(a->value.cols()) = a->value;
  y.rightCols(b->value.cols()) = b->value;
  const int ca = static_cast<int>(a->value.cols());
  const int cb = static_cast<int>(b->value.cols());
  return make(std::move(y), {a, b}, [ca, cb](Node& n) {
    if (n.parents[0]->needs_grad)
      n.parents[0]->ensure_grad() += n.grad.leftCols(ca);
    if (n.parents[1]->needs_grad)
      n.parents[1]->ensure_grad() += n.grad.rightCols(cb);
  });
}

Var reshape(const Var& a, int rows, int cols) {
  if (static_cast<long>(rows) * cols != a->value.size())
    throw std::invalid_argument("reshape: size mismatch");
  Mat y = Eigen::Map<const Mat>(a->value.data(), rows, cols);
  const int r0 = static_cast<int>(a->value.rows());
  const int c0 = static_cast<int>(a->value.cols());
  return make(std::move(y), {a}, [r0, c0](Node& n) {
    n.parents[0]->ensure_grad() += Eigen::Map<const Mat>(n.grad.data(), r0, c0);
  });
}

Var detach(const Var& a) { return constant(a->value); }

Var sum(const Var& a) {
  Mat y(1, 1);
  y(0, 0) = a->value.sum();
  return make(std::move(y), {a}, [](Node& n) {
    n.parents[0]->ensure_grad().array() += n.grad(0, 0);
  });
}

Var mean(const Var& a) {
  Mat y(1, 1);
  y(0, 0) = a->value.mean();
  const double inv = 1.0 / static_cast<double>(a->value.size());
  return make(std::move(y), {a}, [inv](Node& n) {
    n.parents[0]->ensure_grad().array() += n.grad(0, 0) * inv;
  });
}

Var div(const Var& a, const Var& b_scalar) {
  if (b_scalar->value.size() != 1)
    throw std::invalid_argument("div: want scalar");
  const double b = b_scalar->value(0, 0);
  return make(a->value / b, {a, b_scalar}, [b](Node& n) {
    if (n.parents[0]->needs_grad) n.parents[0]->ensure_grad() += n.grad / b;
    if (n.parents[1]->needs_grad)
      n.parents[1]->ensure_grad()(0, 0) -=
          n.grad.cwiseProduct(n.parents[0]->value).sum() / (b * b);
  });
}

Var max_with(const Var& a_scalar, double c) {
  if (a_scalar->value.size() != 1)
    throw std::invalid_argument("max_with: want scalar");
  Mat y(1, 1);
  y(0, 0) = std::max(a_scalar->value(0, 0), c);
  return make(std::move(y), {a_scalar}, [c](Node& n) {
    if (n.parents[0]->value(0, 0) > c)
      n.parents[0]->ensure_grad()(0, 0) += n.grad(0, 0);
  });
}

int conv1d_output_length(int t, int k, int stride, int dilation, int pad) {
  const int span = (k - 1) * dilation + 1;
  return (t + 2 * pad - span) / stride + 1;
}

namespace {

// Gathers input columns for tap k of a convolution; zero outside bounds.
void gather_tap(const Mat& x, int tap, int stride, int dilation, int pad,
                int t_out, Mat& dst) {
  const int t_in = static_cast<int>(x.cols());
  dst.setZero(x.rows(), t_out);
  for (int t = 0; t < t_out; ++t) {
    const int src = t * stride + tap * dilation - pad;
    if (src >= 0 && src < t_in) dst.col(t) = x.col(src);
  }
}

void scatter_tap_add(Mat& gx, const Mat& d, int tap, int stride, int dilation,
                     int pad) {
  const int t_in = static_cast<int>(gx.cols());
  for (int t = 0; t < d.cols(); ++t) {
    const int src = t * stride + tap * dilation - pad;
    if (src >= 0 && src < t_in) gx.col(src) += d.col(t);
  }
}

}  // namespace

Var conv1d(const Var& x, const Var& w, const Var& b, int k, int stride,
           int dilation, int pad) {
  const int cin = static_cast<int>(x->value.rows());
  const int cout = static_cast<int>(w->value.rows());
  if (w->value.cols() != static_cast<long>(cin) * k)
    throw std::invalid_argument("conv1d: weight shape mismatch");
  const int t_out = conv1d_output_length(static_cast<int>(x->value.cols()), k,
                                         stride, dilation, pad);
  if (t_out <= 0) throw std::invalid_argument("conv1d: empty output");

  Mat y = Mat::Zero(cout, t_out);
  Mat xk;
  for (int tap = 0; tap < k; ++tap) {
    gather_tap(x->value, tap, stride, dilation, pad, t_out, xk);
    y.noalias() += w->value.middleCols(static_cast<long>(tap) * cin, cin) * xk;
  }
  if (b) {
    if (b->value.rows() != cout || b->value.cols() != 1)
      throw std::invalid_argument("conv1d: bias shape mismatch");
    y.colwise() += Eigen::VectorXd(b->value.col(0));
  }

  std::vector<Var> parents = {x, w};
  if (b) parents.push_back(b);
  auto bp = [k, stride, dilation, pad, cin, t_out](Node& n) {
    const Var& xp = n.parents[0];
    const Var& wp = n.parents[1];
    Mat xk;
    for (int tap = 0; tap < k; ++tap) {
      const auto wk = wp->value.middleCols(static_cast<long>(tap) * cin, cin);
      if (wp->needs_grad) {
        gather_tap(xp->value, tap, stride, dilation, pad, t_out, xk);
        wp->ensure_grad()
            .middleCols(static_cast<long>(tap) * cin, cin)
            .noalias() += n.grad * xk.transpose();
      }
      if (xp->needs_grad) {
        Mat d = wk.transpose() * n.grad;
        scatter_tap_add(xp->ensure_grad(), d, tap, stride, dilation, pad);
      }
    }
    if (n.parents.size() > 2 && n.parents[2]->needs_grad)
      n.parents[2]->ensure_grad() += n.grad.rowwise().sum();
  };
  return make(std::move(y), std::move(parents), std::move(bp));
}

Var conv1d_transpose(const Var& x, const Var& w, const Var& b, int k,
                     int stride, int pad) {
  const int cin = static_cast<int>(x->value.rows());
  const int cout = static_cast<int>(w->value.rows());
  if (w->value.cols() != static_cast<long>(cin) * k)
    throw std::invalid_argument("tconv1d: weight shape mismatch");
  const int t_in = static_cast<int>(x->value.cols());
  const int t_out = (t_in - 1) * stride - 2 * pad + k;
  if (t_out <= 0) throw std::invalid_argument("tconv1d: empty output");

  Mat y = Mat::Zero(cout, t_out);
  for (int tap = 0; tap < k; ++tap) {
    Mat m = w->value.middleCols(static_cast<long>(tap) * cin, cin) * x->value;
    for (int t = 0; t < t_in; ++t) {
      const int dst = t * stride + tap - pad;
      if (dst >= 0 && dst < t_out) y.col(dst) += m.col(t);
    }
  }
  if (b) {
    if (b->value.rows() != cout || b->value.cols() != 1)
      throw std::invalid_argument("tconv1d: bias shape mismatch");
    y.colwise() += Eigen::VectorXd(b->value.col(0));
  }

  std::vector<Var> parents = {x, w};
  if (b) parents.push_back(b);
  auto bp = [k, stride, pad, cin, t_in, t_out](Node& n) {
    const Var& xp = n.parents[0];
    const Var& wp = n.parents[1];
    Mat gk(n.grad.rows(), t_in);
    for (int tap = 0; tap < k; ++tap) {
      gk.setZero();
      for (int t = 0; t < t_in; ++t) {
        const int dst = t * stride + tap - pad;
        if (dst >= 0 && dst < t_out) gk.col(t) = n.grad.col(dst);
      }
      const auto wk = wp->value.middleCols(static_cast<long>(tap) * cin, cin);
      if (xp->needs_grad) xp->ensure_grad().noalias() += wk.transpose() * gk;
      if (wp->needs_grad)
        wp->ensure_grad()
            .middleCols(static_cast<long>(tap) * cin, cin)
            .noalias() += gk * xp->value.transpose();
    }
    if (n.parents.size() > 2 && n.parents[2]->needs_grad)
      n.parents[2]->ensure_grad() += n.grad.rowwise().sum();
  };
  return make(std::move(y), std::move(parents), std::move(bp));
}

Var avg_pool1d(const Var& x, int k, int stride, int pad) {
  const int t_in = static_cast<int>(x->value.cols());
  const int t_out = conv1d_output_length(t_in, k, stride, 1, pad);
  if (t_out <= 0) throw std::invalid_argument("avg_pool1d: empty output");
  Mat y = Mat::Zero(x->value.rows(), t_out);
  for (int t = 0; t < t_out; ++t) {
    for (int i = 0; i < k; ++i) {
      const int src = t * stride + i - pad;
      if (src >= 0 && src < t_in) y.col(t) += x->value.col(src);
    }
  }
  y /= static_cast<double>(k);
  return make(std::move(y), {x}, [k, stride, pad, t_in](Node& n) {
    Mat& gx = n.parents[0]->ensure_grad();
    const double inv = 1.0 / k;
    for (int t = 0; t < n.grad.cols(); ++t) {
      for (int i = 0; i < k; ++i) {
        const int src = t * stride + i - pad;
        if (src >= 0 && src < t_in) gx.col(src) += n.grad.col(t) * inv;
      }
    }
  });
}

namespace {

inline long reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

}  // namespace

Var frame_signal(const Var& x, int win, int hop) {
  if (x->value.rows() != 1) throw std::invalid_argument("frame: want 1 x N");
  const long n = x->value.cols();
  if (n < win) throw std::invalid_argument("input too short");
  const int frames = static_cast<int>((n + hop - 1) / hop);
  const int half = win / 2;

  // Shared index table so forward gather and backward scatter agree exactly.
  auto idx =
      std::make_shared<std::vector<long>>(static_cast<size_t>(win) * frames);
  Mat y(win, frames);
  for (int t = 0; t < frames; ++t) {
    const long center = static_cast<long>(t) * hop;
    for (int i = 0; i < win; ++i) {
      const long src = reflect_index(center - half + i, n);
      (*idx)[static_cast<size_t>(t) * win + i] = src;
      y(i, t) = x->value(0, src);
    }
  }
  return make(std::move(y), {x}, [idx, win](Node& n) {
    Mat& gx = n.parents[0]->ensure_grad();
    for (int t = 0; t < n.grad.cols(); ++t)
      for (int i = 0; i < win; ++i)
        gx(0, (*idx)[static_cast<size_t>(t) * win + i]) += n.grad(i, t);
  });
}

}  // namespace ncvc::nn
