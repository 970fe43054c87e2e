// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ncvc/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ncvc::flow {

using nn::abs_;
using nn::add;
using nn::add_scalar;
using nn::bias_add;
using nn::clamp;
using nn::colvec_mul;
using nn::constant;
using nn::diag_from_col;
using nn::exp_;
using nn::leaf;
using nn::leaky_relu;
using nn::matmul;
using nn::mean;
using nn::mul;
using nn::neg;
using nn::reshape;
using nn::scale;
using nn::sigmoid;
using nn::slice_cols;
using nn::slice_rows;
using nn::square;
using nn::sub;
using nn::sum;
using nn::tanh_;
using nn::vcat;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

nlohmann::json FlowConfig::to_json() const {
  return {{"latent_channels", latent_channels},
          {"n_ppg_classes", n_ppg_classes},
          {"n_blocks", n_blocks},
          {"squeeze", squeeze},
          {"coupling_hidden", coupling_hidden},
          {"coupling_layers", coupling_layers},
          {"coupling_kernel", coupling_kernel},
          {"d_spk", d_spk},
          {"ppg_hidden", ppg_hidden},
          {"ppg_layers", ppg_layers},
          {"ppg_kernel", ppg_kernel},
          {"spk_in_prior", spk_in_prior},
          {"logstd_clamp_lo", logstd_clamp_lo},
          {"logstd_clamp_hi", logstd_clamp_hi},
          {"temperature_default", temperature_default},
          {"lr", lr},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"grad_clip", grad_clip}};
}

FlowConfig FlowConfig::from_json(const nlohmann::json& j) {
  return from_json(j, FlowConfig());
}

FlowConfig FlowConfig::from_json(const nlohmann::json& j,
                                 const FlowConfig& base) {
  FlowConfig cfg = base;
  const nlohmann::json defaults = FlowConfig().to_json();
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key))
      throw std::invalid_argument("unknown flowvc config field: " + key);
  cfg.latent_channels = j.value("latent_channels", cfg.latent_channels);
  cfg.n_ppg_classes = j.value("n_ppg_classes", cfg.n_ppg_classes);
  cfg.n_blocks = j.value("n_blocks", cfg.n_blocks);
  cfg.squeeze = j.value("squeeze", cfg.squeeze);
  cfg.coupling_hidden = j.value("coupling_hidden", cfg.coupling_hidden);
  cfg.coupling_layers = j.value("coupling_layers", cfg.coupling_layers);
  cfg.coupling_kernel = j.value("coupling_kernel", cfg.coupling_kernel);
  cfg.d_spk = j.value("d_spk", cfg.d_spk);
  cfg.ppg_hidden = j.value("ppg_hidden", cfg.ppg_hidden);
  cfg.ppg_layers = j.value("ppg_layers", cfg.ppg_layers);
  cfg.ppg_kernel = j.value("ppg_kernel", cfg.ppg_kernel);
  cfg.spk_in_prior = j.value("spk_in_prior", cfg.spk_in_prior);
  cfg.logstd_clamp_lo = j.value("logstd_clamp_lo", cfg.logstd_clamp_lo);
  cfg.logstd_clamp_hi = j.value("logstd_clamp_hi", cfg.logstd_clamp_hi);
  cfg.temperature_default =
      j.value("temperature_default", cfg.temperature_default);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
  cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
  cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);

  if (cfg.squeeze < 1) throw std::invalid_argument("squeeze must be >= 1");
  if ((cfg.latent_channels * cfg.squeeze) % 2 != 0)
    throw std::invalid_argument("squeezed channels must be even");
  return cfg;
}

FlowConfig FlowConfig::tiny() {
  FlowConfig cfg;
  cfg.latent_channels = 16;
  cfg.n_blocks = 4;
  cfg.coupling_hidden = 48;
  cfg.d_spk = 16;
  cfg.ppg_hidden = 48;
  cfg.ppg_layers = 2;
  return cfg;
}

// ---------------------------------------------------------------------------
// Squeeze helpers
// ---------------------------------------------------------------------------

Mat squeeze_time(const Mat& z, int factor) {
  if (z.cols() % factor != 0)
    throw std::invalid_argument("frames not divisible by squeeze factor");
  // Column-major relabel stacks `factor` consecutive frames channel-wise.
  return Eigen::Map<const Mat>(z.data(), z.rows() * factor, z.cols() / factor);
}

Mat unsqueeze_time(const Mat& z2, int factor) {
  if (z2.rows() % factor != 0)
    throw std::invalid_argument("channels not divisible by squeeze factor");
  return Eigen::Map<const Mat>(z2.data(), z2.rows() / factor,
                               z2.cols() * factor);
}

namespace {

Mat pad_to_multiple(const Mat& z, int factor) {
  const int rem = static_cast<int>(z.cols()) % factor;
  if (rem == 0) return z;
  Mat out(z.rows(), z.cols() + (factor - rem));
  out.leftCols(z.cols()) = z;
  for (int i = 0; i < factor - rem; ++i)
    out.col(z.cols() + i) = z.col(z.cols() - 1);
  return out;
}

Mat valid_mask(long rows, long cols, long valid_cols) {
  Mat m = Mat::Zero(rows, cols);
  if (valid_cols > 0) m.leftCols(valid_cols).setOnes();
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Speaker table
// ---------------------------------------------------------------------------

SpeakerTable::SpeakerTable(std::vector<std::string> speakers)
    : order_(std::move(speakers)) {
  std::sort(order_.begin(), order_.end());
  order_.erase(std::unique(order_.begin(), order_.end()), order_.end());
  for (size_t i = 0; i < order_.size(); ++i)
    by_id_[order_[i]] = static_cast<int>(i);
}

int SpeakerTable::index(const std::string& id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end())
    throw std::invalid_argument("unknown speaker: " + id);
  return it->second;
}

// ---------------------------------------------------------------------------
// Model construction
// ---------------------------------------------------------------------------

FlowModel::FlowModel(const FlowConfig& cfg, std::vector<std::string> speakers,
                     uint64_t init_seed)
    : cfg_(cfg),
      speakers_(std::move(speakers)),
      opt_({cfg.lr, cfg.adam_beta1, cfg.adam_beta2, 1e-8, cfg.grad_clip}) {
  if (speakers_.size() == 0) throw std::invalid_argument("no speakers");
  Rng rng(init_seed);
  const int c2 = cfg_.latent_channels * cfg_.squeeze;
  const int half = c2 / 2;
  const int h = cfg_.coupling_hidden;

  for (int bi = 0; bi < cfg_.n_blocks; ++bi) {
    Block b;
    const std::string base = "flow.b" + std::to_string(bi);
    b.act_log_s = &store_.create(base + ".act.log_s", c2, 1);
    b.act_b = &store_.create(base + ".act.b", c2, 1);
    b.lu_lower = &store_.create(base + ".lu.lower", c2, c2);
    b.lu_upper = &store_.create(base + ".lu.upper", c2, c2);
    b.lu_log_s = &store_.create(base + ".lu.log_s", c2, 1);
    b.pre = nn::Conv1d(store_, base + ".cpl.pre", half, h, 1, 1, 1, 0, rng);
    for (int li = 0; li < cfg_.coupling_layers; ++li) {
      const int dil = 1 << li;
      const int k = cfg_.coupling_kernel;
      b.gates.push_back(nn::Conv1d(store_,
                                   base + ".cpl.gate" + std::to_string(li), h,
                                   2 * h, k, 1, dil, (k - 1) * dil / 2, rng));
      b.spk_projs.emplace_back(store_, base + ".cpl.spk" + std::to_string(li),
                               cfg_.d_spk, 2 * h, rng);
      b.residuals.push_back(nn::Conv1d(
          store_, base + ".cpl.res" + std::to_string(li), h, h, 1, 1, 1, 0, rng));
    }
    // Zero-init output keeps every block an identity map at step 0.
    b.post = nn::Conv1d(store_, base + ".cpl.post", h, 2 * half, 1, 1, 1, 0,
                        rng, true);
    b.transform_top = (bi % 2) == 1;
    blocks_.push_back(std::move(b));
  }

  ppg_pre_ = nn::Conv1d(store_, "prior.pre", cfg_.n_ppg_classes,
                        cfg_.ppg_hidden, cfg_.ppg_kernel, 1, 1,
                        cfg_.ppg_kernel / 2, rng);
  for (int li = 0; li < cfg_.ppg_layers; ++li) {
    const std::string base = "prior.res" + std::to_string(li);
    ppg_res_.emplace_back(
        nn::Conv1d(store_, base + ".a", cfg_.ppg_hidden, cfg_.ppg_hidden, 3, 1,
                   1, 1, rng),
        nn::Conv1d(store_, base + ".b", cfg_.ppg_hidden, cfg_.ppg_hidden, 3, 1,
                   2, 2, rng));
  }
  ppg_mean_ = nn::Conv1d(store_, "prior.mean", cfg_.ppg_hidden,
                         cfg_.latent_channels, 1, 1, 1, 0, rng);
  ppg_logstd_ = nn::Conv1d(store_, "prior.logstd", cfg_.ppg_hidden,
                           cfg_.latent_channels, 1, 1, 1, 0, rng, true);
  spk_prior_proj_ =
      nn::Affine(store_, "prior.spk", cfg_.d_spk, cfg_.ppg_hidden, rng);

  spk_table_ = &store_.create("spk.table", cfg_.d_spk, speakers_.size());
  for (long i = 0; i < spk_table_->value.size(); ++i)
    spk_table_->value.data()[i] = 0.1 * rng.gaussian();
}

Var FlowModel::spk_embedding_v(int spk_index) const {
  return slice_cols(leaf(*spk_table_), spk_index, 1);
}

// ---------------------------------------------------------------------------
// Coupling and stack forwards
// ---------------------------------------------------------------------------

std::pair<Var, Var> FlowModel::coupling_terms_v(const Block& b, const Var& cond,
                                                const Var& spk_emb) const {
  const int h = cfg_.coupling_hidden;
  const int half = cfg_.latent_channels * cfg_.squeeze / 2;
  Var hv = b.pre(cond);
  for (size_t li = 0; li < b.gates.size(); ++li) {
    Var a = b.gates[li](hv);
    a = bias_add(a, b.spk_projs[li](spk_emb));
    Var gated = mul(tanh_(slice_rows(a, 0, h)), sigmoid(slice_rows(a, h, h)));
    hv = add(hv, b.residuals[li](gated));
  }
  Var out = b.post(hv);
  // Bounded log-scale keeps the inverse numerically benign.
  Var log_s = tanh_(slice_rows(out, 0, half));
  Var t = slice_rows(out, half, half);
  return {log_s, t};
}

FlowModel::ForwardOut FlowModel::forward_v(const Var& z2, const Var& spk_emb,
                                           int valid_sq_frames) const {
  const int c2 = cfg_.latent_channels * cfg_.squeeze;
  const int half = c2 / 2;
  const int ts = static_cast<int>(z2->value.cols());
  Mat low_mask = Mat::Zero(c2, c2), up_mask = Mat::Zero(c2, c2);
  for (int r = 0; r < c2; ++r)
    for (int c = 0; c < c2; ++c) {
      if (r > c) low_mask(r, c) = 1.0;
      if (c > r) up_mask(r, c) = 1.0;
    }
  const Mat eye = Mat::Identity(c2, c2);
  const Mat half_mask = valid_mask(half, ts, valid_sq_frames);

  Var x = z2;
  Var logdet;
  for (const auto& b : blocks_) {
    // Activation normalization.
    Var act_ls = leaf(*b.act_log_s);
    x = bias_add(colvec_mul(x, exp_(act_ls)), leaf(*b.act_b));
    Var ld = scale(sum(act_ls), static_cast<double>(valid_sq_frames));
    logdet = logdet ? add(logdet, ld) : ld;

    // LU-parameterized invertible channel mixing.
    Var lower = add(constant(eye), mul(leaf(*b.lu_lower), constant(low_mask)));
    Var lu_ls = leaf(*b.lu_log_s);
    Var upper = add(mul(leaf(*b.lu_upper), constant(up_mask)),
                    diag_from_col(exp_(lu_ls)));
    x = matmul(matmul(lower, upper), x);
    logdet = add(logdet,
                 scale(sum(lu_ls), static_cast<double>(valid_sq_frames)));

    // Affine coupling on alternating halves.
    Var top = slice_rows(x, 0, half);
    Var bottom = slice_rows(x, half, half);
    Var cond = b.transform_top ? bottom : top;
    Var moved = b.transform_top ? top : bottom;
    auto [log_s, t] = coupling_terms_v(b, cond, spk_emb);
    Var moved_out = add(mul(moved, exp_(log_s)), t);
    x = b.transform_top ? vcat(moved_out, bottom) : vcat(top, moved_out);
    logdet = add(logdet, sum(mul(log_s, constant(half_mask))));
  }
  return {x, logdet};
}

FlowModel::PriorV FlowModel::prior_v(const Var& ppg, const Var* spk_emb) const {
  Var h = leaky_relu(ppg_pre_(ppg));
  if (spk_emb) h = bias_add(h, spk_prior_proj_(*spk_emb));
  for (const auto& [a, b] : ppg_res_) {
    Var r = b(leaky_relu(a(leaky_relu(h))));
    h = add(h, r);
  }
  PriorV out;
  out.mean = ppg_mean_(h);
  out.log_std = clamp(ppg_logstd_(h), cfg_.logstd_clamp_lo,
                      cfg_.logstd_clamp_hi);
  return out;
}

Var FlowModel::nll_v(const Var& z2, const PriorV& prior2, const Var& spk_emb,
                     int valid_sq_frames) const {
  const auto fwd = forward_v(z2, spk_emb, valid_sq_frames);
  const long rows = z2->value.rows();
  const long ts = z2->value.cols();
  const Mat mask2 = valid_mask(rows, ts, valid_sq_frames);
  const double n_valid = static_cast<double>(rows) * valid_sq_frames;

  Var resid = mul(sub(fwd.e2, prior2.mean), exp_(neg(prior2.log_std)));
  Var per_entry = sub(scale(square(resid), -0.5), prior2.log_std);
  Var ll = sum(mul(per_entry, constant(mask2)));
  ll = add_scalar(ll, -0.5 * std::log(2.0 * std::numbers::pi) * n_valid);
  ll = add(ll, fwd.logdet);
  return scale(neg(ll), 1.0 / n_valid);
}

// ---------------------------------------------------------------------------
// Value-level API
// ---------------------------------------------------------------------------

FlowPrior FlowModel::ppg_encode(const corpus::PPGSequence& ppg,
                                const std::string& speaker) const {
  if (ppg.classes() != cfg_.n_ppg_classes)
    throw std::invalid_argument("ppg class count mismatch");
  const int idx = speakers_.index(speaker);  // unknown speaker -> error
  Var ppg_v = constant(ppg.posteriors);
  PriorV p;
  if (cfg_.spk_in_prior) {
    Var emb = spk_embedding_v(idx);
    p = prior_v(ppg_v, &emb);
  } else {
    p = prior_v(ppg_v, nullptr);
  }
  return {p.mean->value, p.log_std->value};
}

std::pair<Mat, double> FlowModel::flow_forward(const Mat& z,
                                               const std::string& speaker) const {
  const int idx = speakers_.index(speaker);
  const int t = static_cast<int>(z.cols());
  const int valid_sq = t / cfg_.squeeze;
  const Mat z2 = squeeze_time(pad_to_multiple(z, cfg_.squeeze), cfg_.squeeze);
  const auto fwd =
      forward_v(constant(z2), spk_embedding_v(idx), valid_sq);
  // The padded tail frame stays in the output: exact inversion needs it
  // (couplings mix across squeezed time); it is masked out of all
  // likelihood accounting.
  Mat e = unsqueeze_time(fwd.e2->value, cfg_.squeeze);
  return {std::move(e), fwd.logdet->value(0, 0)};
}

Mat FlowModel::flow_inverse(const Mat& e, const std::string& speaker) const {
  const int idx = speakers_.index(speaker);
  const int t = static_cast<int>(e.cols());
  const int c2 = cfg_.latent_channels * cfg_.squeeze;
  const int half = c2 / 2;
  Mat x = squeeze_time(pad_to_multiple(e, cfg_.squeeze), cfg_.squeeze);
  const Var spk = spk_embedding_v(idx);

  Mat low_mask = Mat::Zero(c2, c2), up_mask = Mat::Zero(c2, c2);
  for (int r = 0; r < c2; ++r)
    for (int c = 0; c < c2; ++c) {
      if (r > c) low_mask(r, c) = 1.0;
      if (c > r) up_mask(r, c) = 1.0;
    }

  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
    const Block& b = *it;
    // Coupling inverse: the conditioning half is untouched by the forward.
    Mat top = x.topRows(half);
    Mat bottom = x.bottomRows(half);
    Mat& cond = b.transform_top ? bottom : top;
    Mat& moved = b.transform_top ? top : bottom;
    const auto [log_s, tr] =
        coupling_terms_v(b, constant(cond), spk);
    moved = ((moved - tr->value).array() * (-log_s->value.array()).exp())
                .matrix();
    x.topRows(half) = top;
    x.bottomRows(half) = bottom;

    // Channel mixing inverse.
    const Mat lower =
        Mat::Identity(c2, c2) + b.lu_lower->value.cwiseProduct(low_mask);
    Mat upper = b.lu_upper->value.cwiseProduct(up_mask);
    upper.diagonal() = b.lu_log_s->value.col(0).array().exp();
    x = upper.template triangularView<Eigen::Upper>().solve(
        lower.template triangularView<Eigen::UnitLower>().solve(x));

    // Actnorm inverse.
    x = ((x.colwise() - Eigen::VectorXd(b.act_b->value.col(0))).array().colwise() *
         (-b.act_log_s->value.col(0).array()).exp())
            .matrix();
  }
  return unsqueeze_time(x, cfg_.squeeze).leftCols(t);
}

double FlowModel::nll_with_prior(const Mat& z, const FlowPrior& prior,
                                 const std::string& speaker) const {
  const int idx = speakers_.index(speaker);
  if (std::abs(static_cast<long>(z.cols()) - prior.mean.cols()) > 1)
    throw std::invalid_argument("frame mismatch between latent and prior");
  const int t = static_cast<int>(std::min(z.cols(), prior.mean.cols()));
  const int valid_sq = t / cfg_.squeeze;
  const Mat z2 =
      squeeze_time(pad_to_multiple(z.leftCols(t), cfg_.squeeze), cfg_.squeeze);
  PriorV p2;
  p2.mean = constant(squeeze_time(
      pad_to_multiple(prior.mean.leftCols(t), cfg_.squeeze), cfg_.squeeze));
  p2.log_std = constant(squeeze_time(
      pad_to_multiple(prior.log_std.leftCols(t), cfg_.squeeze), cfg_.squeeze));
  const Var out =
      nll_v(constant(z2), p2, spk_embedding_v(idx), valid_sq);
  return out->value(0, 0);
}

double FlowModel::nll(const Mat& z, const corpus::PPGSequence& ppg,
                      const std::string& speaker) const {
  return nll_with_prior(z, ppg_encode(ppg, speaker), speaker);
}

Mat FlowModel::convert_sample(const corpus::PPGSequence& ppg,
                              const std::string& speaker, double temperature,
                              Rng* rng) const {
  if (temperature < 0.0 || temperature > 1.0)
    throw std::invalid_argument("temperature must be in [0, 1]");
  const FlowPrior prior = ppg_encode(ppg, speaker);
  Mat e = prior.mean;
  if (temperature > 0.0 && rng) {
    for (long i = 0; i < e.size(); ++i)
      e.data()[i] += temperature * std::exp(prior.log_std.data()[i]) *
                     rng->gaussian();
  }
  return flow_inverse(e, speaker);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

void FlowModel::data_dependent_init(const Mat& z, const std::string& speaker) {
  const int idx = speakers_.index(speaker);
  const Var spk = spk_embedding_v(idx);
  const int c2 = cfg_.latent_channels * cfg_.squeeze;
  const int half = c2 / 2;
  Mat x = squeeze_time(pad_to_multiple(z, cfg_.squeeze), cfg_.squeeze);

  Mat low_mask = Mat::Zero(c2, c2), up_mask = Mat::Zero(c2, c2);
  for (int r = 0; r < c2; ++r)
    for (int c = 0; c < c2; ++c) {
      if (r > c) low_mask(r, c) = 1.0;
      if (c > r) up_mask(r, c) = 1.0;
    }

  for (auto& b : blocks_) {
    // Zero mean, unit variance per channel after this actnorm.
    for (int c = 0; c < c2; ++c) {
      const double m = x.row(c).mean();
      const double var = (x.row(c).array() - m).square().mean();
      const double std = std::sqrt(std::max(var, 1e-6));
      b.act_log_s->value(c, 0) = -std::log(std);
      b.act_b->value(c, 0) = -m / std;
    }
    x = ((x.array().colwise() * b.act_log_s->value.col(0).array().exp())
             .colwise() +
         b.act_b->value.col(0).array())
            .matrix();

    Mat w = (Mat::Identity(c2, c2) + b.lu_lower->value.cwiseProduct(low_mask));
    Mat upper = b.lu_upper->value.cwiseProduct(up_mask);
    upper.diagonal() = b.lu_log_s->value.col(0).array().exp();
    x = w * upper * x;

    Mat top = x.topRows(half);
    Mat bottom = x.bottomRows(half);
    Mat& cond = b.transform_top ? bottom : top;
    Mat& moved = b.transform_top ? top : bottom;
    const auto [log_s, tr] = coupling_terms_v(b, constant(cond), spk);
    moved =
        (moved.array() * log_s->value.array().exp() + tr->value.array()).matrix();
    x.topRows(half) = top;
    x.bottomRows(half) = bottom;
  }
  ddi_done_ = true;
}

FlowStepReport FlowModel::training_step(const Mat& z,
                                        const corpus::PPGSequence& ppg,
                                        const std::string& speaker) {
  const int idx = speakers_.index(speaker);
  if (std::abs(static_cast<long>(z.cols()) - ppg.frames()) > 1)
    throw std::invalid_argument("frame mismatch between latent and ppg");
  if (!ddi_done_) data_dependent_init(z, speaker);

  const int t = static_cast<int>(std::min<long>(z.cols(), ppg.frames()));
  const int valid_sq = t / cfg_.squeeze;
  const Mat z2 =
      squeeze_time(pad_to_multiple(z.leftCols(t), cfg_.squeeze), cfg_.squeeze);

  store_.zero_grad();
  const Var spk = spk_embedding_v(idx);
  const Var ppg_v = constant(Mat(ppg.posteriors.leftCols(t)));
  PriorV prior = cfg_.spk_in_prior ? prior_v(ppg_v, &spk)
                                   : prior_v(ppg_v, nullptr);
  // Squeeze the prior to the latent grid via the shared reshape layout;
  // odd tails replicate the final frame (masked out of the likelihood).
  const int ts = static_cast<int>(z2.cols());
  auto pad_cols_v = [](Var v, int target) {
    while (v->value.cols() < target)
      v = nn::hcat(v,
                   slice_cols(v, static_cast<int>(v->value.cols()) - 1, 1));
    return v;
  };
  PriorV prior2;
  prior2.mean = reshape(pad_cols_v(prior.mean, ts * cfg_.squeeze),
                        static_cast<int>(z2.rows()), ts);
  prior2.log_std = reshape(pad_cols_v(prior.log_std, ts * cfg_.squeeze),
                           static_cast<int>(z2.rows()), ts);

  const Var out = nll_v(constant(z2), prior2, spk, valid_sq);
  FlowStepReport report;
  report.nll = out->value(0, 0);
  if (!std::isfinite(report.nll)) {
    report.diverged = true;
    return report;
  }
  nn::backward(out);
  opt_.step(store_.pointers());
  return report;
}

int FlowModel::prior_receptive_field_frames() const {
  // pre k, then per residual pair: k3 d1 + k3 d2.
  int one_sided = (cfg_.ppg_kernel - 1) / 2;
  one_sided += cfg_.ppg_layers * (1 + 2);
  return one_sided;
}

}  // namespace ncvc::flow
