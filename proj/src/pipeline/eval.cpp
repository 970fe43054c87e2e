// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ncvc/pipeline.hpp"

namespace ncvc::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Logistic probe
// ---------------------------------------------------------------------------

double logistic_probe_accuracy(const std::vector<Eigen::VectorXd>& xs,
                               const std::vector<int>& ys, int folds,
                               uint64_t seed) {
  if (xs.size() != ys.size() || xs.empty())
    throw std::invalid_argument("probe: bad inputs");
  const int n = static_cast<int>(xs.size());
  const int d = static_cast<int>(xs[0].size());
  folds = std::min(folds, n);

  // Deterministic shuffled fold assignment.
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (int i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[rng.uniform_int(0, i - 1)]);

  int correct = 0, total = 0;
  for (int fold = 0; fold < folds; ++fold) {
    std::vector<int> train, test;
    for (int i = 0; i < n; ++i)
      ((i % folds == fold) ? test : train).push_back(idx[i]);
    if (train.empty() || test.empty()) continue;

    // Standardize with train-split statistics.
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    for (int i : train) mu += xs[i];
    mu /= static_cast<double>(train.size());
    Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
    for (int i : train) var += (xs[i] - mu).cwiseAbs2();
    var /= static_cast<double>(train.size());
    const Eigen::VectorXd inv_std =
        (var.array() + 1e-8).sqrt().inverse().matrix();

    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double b = 0.0;
    const double lr = 0.5, l2 = 1e-2;
    for (int iter = 0; iter < 400; ++iter) {
      Eigen::VectorXd gw = l2 * w;
      double gb = 0.0;
      for (int i : train) {
        const Eigen::VectorXd x = (xs[i] - mu).cwiseProduct(inv_std);
        const double p = 1.0 / (1.0 + std::exp(-(w.dot(x) + b)));
        const double err = p - ys[i];
        gw += err * x / static_cast<double>(train.size());
        gb += err / static_cast<double>(train.size());
      }
      w -= lr * gw;
      b -= lr * gb;
    }
    for (int i : test) {
      const Eigen::VectorXd x = (xs[i] - mu).cwiseProduct(inv_std);
      const int pred = (w.dot(x) + b) > 0.0 ? 1 : 0;
      correct += pred == ys[i] ? 1 : 0;
      ++total;
    }
  }
  return total > 0 ? static_cast<double>(correct) / total : 0.0;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd pool_time(const Eigen::MatrixXd& m) {
  return m.rowwise().mean();
}

std::string format_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

signals::Waveform trim_to(const signals::Waveform& w, long n) {
  signals::Waveform out = w;
  out.samples.resize(std::min<long>(w.size(), n));
  return out;
}

}  // namespace

json EvalReport::to_json() const {
  json table = json::array();
  for (const auto& row : snr_table)
    table.push_back({{"id", row.id},
                     {"input_snr_db", row.input_snr_db},
                     {"output_snr_clean_db", row.output_snr_clean_db},
                     {"output_snr_noisy_db", row.output_snr_noisy_db}});
  return {{"snr_table", table},
          {"mean_input_snr_db", mean_input_snr_db},
          {"mean_output_snr_clean_db", mean_output_snr_clean_db},
          {"mean_output_snr_noisy_db", mean_output_snr_noisy_db},
          {"probe_accuracy_z", probe_accuracy_z},
          {"probe_accuracy_z_tilde", probe_accuracy_z_tilde},
          {"heldout_nll", heldout_nll},
          {"heldout_count", heldout_count},
          {"plot_paths", plot_paths},
          {"checkpoint_used", checkpoint_used},
          {"corpus_used", corpus_used}};
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  for (const auto& row : j.at("snr_table"))
    r.snr_table.push_back({row.at("id").get<std::string>(),
                           row.at("input_snr_db").get<double>(),
                           row.at("output_snr_clean_db").get<double>(),
                           row.at("output_snr_noisy_db").get<double>()});
  r.mean_input_snr_db = j.at("mean_input_snr_db").get<double>();
  r.mean_output_snr_clean_db = j.at("mean_output_snr_clean_db").get<double>();
  r.mean_output_snr_noisy_db = j.at("mean_output_snr_noisy_db").get<double>();
  r.probe_accuracy_z = j.at("probe_accuracy_z").get<double>();
  r.probe_accuracy_z_tilde = j.at("probe_accuracy_z_tilde").get<double>();
  r.heldout_nll = j.at("heldout_nll").get<double>();
  r.heldout_count = j.at("heldout_count").get<int>();
  r.plot_paths = j.at("plot_paths").get<std::vector<std::string>>();
  r.checkpoint_used = j.at("checkpoint_used").get<std::string>();
  r.corpus_used = j.at("corpus_used").get<std::string>();
  return r;
}

EvalReport evaluate(const RunConfig& cfg, const std::string& ncwavegan_ckpt,
                    const std::string& flow_ckpt, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const auto manifest = corpus::load_manifest(cfg.corpus_manifest);
  auto vocoder = load_wavegan_checkpoint(ncwavegan_ckpt);
  auto conv = load_flow_checkpoint(flow_ckpt);
  const auto& model = *vocoder.model;

  EvalReport report;
  report.checkpoint_used = ncwavegan_ckpt + ";" + flow_ckpt;
  report.corpus_used = cfg.corpus_manifest;

  // ---- SNR table over noisy utterances with clean twins (full conversion
  // path at temperature 0, FiLM set to clean vs noisy).
  std::vector<const corpus::Utterance*> noisy;
  for (const auto& u : manifest.entries)
    if (!u.attribute.is_clean() && u.ppg_path &&
        manifest.find(corpus::twin_id(u.id)))
      noisy.push_back(&u);

  report.snr_table.resize(noisy.size());
  parallel_for(static_cast<int>(noisy.size()), [&](int i) {
    const auto& u = *noisy[static_cast<size_t>(i)];
    const auto clean_ref =
        corpus::load_wav(manifest.resolve_wav(*manifest.find(corpus::twin_id(u.id))));
    const auto noisy_wav = corpus::load_wav(manifest.resolve_wav(u));
    const auto ppg = corpus::load_ppg(manifest.resolve_ppg(u));

    const Eigen::MatrixXd z =
        conv.model->convert_sample(ppg, u.speaker_id, 0.0, nullptr);
    const auto out_clean = model.vocode(z, AttributeVector::clean());
    const auto out_noisy = model.vocode(z, AttributeVector::noisy());

    const long n = std::min<long>(
        {clean_ref.size(), noisy_wav.size(), out_clean.size()});
    UtteranceSnr row;
    row.id = u.id;
    row.input_snr_db =
        signals::measure_snr(trim_to(clean_ref, n), trim_to(noisy_wav, n));
    row.output_snr_clean_db =
        signals::measure_snr(trim_to(clean_ref, n), trim_to(out_clean, n));
    row.output_snr_noisy_db =
        signals::measure_snr(trim_to(clean_ref, n), trim_to(out_noisy, n));
    report.snr_table[static_cast<size_t>(i)] = std::move(row);
  });
  for (const auto& row : report.snr_table) {
    report.mean_input_snr_db += row.input_snr_db;
    report.mean_output_snr_clean_db += row.output_snr_clean_db;
    report.mean_output_snr_noisy_db += row.output_snr_noisy_db;
  }
  if (!report.snr_table.empty()) {
    const double n = static_cast<double>(report.snr_table.size());
    report.mean_input_snr_db /= n;
    report.mean_output_snr_clean_db /= n;
    report.mean_output_snr_noisy_db /= n;
  }

  // ---- Clean/noisy probes: pooled unmodulated z labeled by the utterance
  // attribute, and pooled FiLM-modulated z-tilde generated with both control
  // attributes per utterance and labeled by the control.
  std::vector<Eigen::VectorXd> z_feats(manifest.entries.size());
  std::vector<int> z_labels(manifest.entries.size());
  std::vector<Eigen::VectorXd> zt_feats(2 * manifest.entries.size());
  std::vector<int> zt_labels(2 * manifest.entries.size());
  parallel_for(static_cast<int>(manifest.entries.size()), [&](int i) {
    const auto& u = manifest.entries[static_cast<size_t>(i)];
    const auto wav = corpus::load_wav(manifest.resolve_wav(u));
    const auto post = model.encode(wav);
    const Eigen::MatrixXd z = post.mean;
    z_feats[static_cast<size_t>(i)] = pool_time(z);
    z_labels[static_cast<size_t>(i)] = u.attribute.is_clean() ? 0 : 1;
    zt_feats[2 * static_cast<size_t>(i)] =
        pool_time(model.film_modulate(z, AttributeVector::clean()));
    zt_labels[2 * static_cast<size_t>(i)] = 0;
    zt_feats[2 * static_cast<size_t>(i) + 1] =
        pool_time(model.film_modulate(z, AttributeVector::noisy()));
    zt_labels[2 * static_cast<size_t>(i) + 1] = 1;
  });
  report.probe_accuracy_z =
      logistic_probe_accuracy(z_feats, z_labels, 5, cfg.seed + 100);
  report.probe_accuracy_z_tilde =
      logistic_probe_accuracy(zt_feats, zt_labels, 5, cfg.seed + 101);

  // ---- Held-out flow NLL (same holdout rule as stage-2 training).
  {
    std::vector<const corpus::Utterance*> with_ppg;
    for (const auto& u : manifest.entries)
      if (u.ppg_path) with_ppg.push_back(&u);
    std::vector<const corpus::Utterance*> held;
    for (size_t i = 0; i < with_ppg.size(); ++i)
      if (static_cast<int>(i % cfg.holdout_every) == cfg.holdout_every - 1)
        held.push_back(with_ppg[i]);
    std::vector<double> nlls(held.size());
    parallel_for(static_cast<int>(held.size()), [&](int i) {
      const auto& u = *held[static_cast<size_t>(i)];
      const auto wav = corpus::load_wav(manifest.resolve_wav(u));
      const auto post = model.encode(wav);
      const auto ppg = corpus::load_ppg(manifest.resolve_ppg(u));
      nlls[static_cast<size_t>(i)] =
          conv.model->nll(post.mean, ppg, u.speaker_id);
    });
    for (double v : nlls) report.heldout_nll += v;
    report.heldout_count = static_cast<int>(held.size());
    if (!held.empty()) report.heldout_nll /= static_cast<double>(held.size());
  }

  // ---- Emit report files.
  std::string csv = "id,input_snr_db,output_snr_clean_db,output_snr_noisy_db\n";
  for (const auto& row : report.snr_table)
    csv += row.id + "," + format_num(row.input_snr_db) + "," +
           format_num(row.output_snr_clean_db) + "," +
           format_num(row.output_snr_noisy_db) + "\n";
  std::ofstream(fs::path(out_dir) / "snr_table.csv", std::ios::trunc) << csv;
  std::ofstream(fs::path(out_dir) / "report.json", std::ios::trunc)
      << report.to_json().dump(2) << "\n";
  return report;
}

// ---------------------------------------------------------------------------
// Projections and the visualization emitter
// ---------------------------------------------------------------------------

Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 3) throw std::invalid_argument("need at least 3 points");
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / std::max<double>(1.0, rows.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const int d = static_cast<int>(cov.rows());
  Eigen::MatrixXd components(d, 2);
  components.col(0) = es.eigenvectors().col(d - 1);
  components.col(1) = es.eigenvectors().col(d >= 2 ? d - 2 : d - 1);
  // Sign convention: largest-|loading| coordinate positive.
  for (int c = 0; c < 2; ++c) {
    int arg = 0;
    components.col(c).cwiseAbs().maxCoeff(&arg);
    if (components(arg, c) < 0.0) components.col(c) = -components.col(c);
  }
  return centered * components;
}

Eigen::MatrixXd tsne_2d(const Eigen::MatrixXd& rows, uint64_t seed) {
  const int n = static_cast<int>(rows.rows());
  if (n < 3) throw std::invalid_argument("need at least 3 points");
  const double perplexity = std::min(10.0, (n - 1) / 3.0);

  // Pairwise squared distances.
  Eigen::MatrixXd d2(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      d2(i, j) = (rows.row(i) - rows.row(j)).squaredNorm();

  // Per-point bandwidths by bisection on the entropy.
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double lo = 1e-10, hi = 1e10, beta = 1.0;
    for (int iter = 0; iter < 50; ++iter) {
      double sum = 0.0, h = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double pij = std::exp(-d2(i, j) * beta);
        sum += pij;
      }
      for (int j = 0; j < n; ++j) {
        if (j == i || sum <= 0.0) continue;
        const double pij = std::exp(-d2(i, j) * beta) / sum;
        if (pij > 1e-12) h -= pij * std::log(pij);
      }
      if (h > std::log(perplexity)) {
        lo = beta;
        beta = hi < 1e9 ? 0.5 * (beta + hi) : beta * 2.0;
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    double sum = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) sum += std::exp(-d2(i, j) * beta);
    for (int j = 0; j < n; ++j)
      if (j != i && sum > 0.0) p(i, j) = std::exp(-d2(i, j) * beta) / sum;
  }
  p = (p + p.transpose()) / (2.0 * n);
  p = p.cwiseMax(1e-12);

  Rng rng(seed);
  Eigen::MatrixXd y(n, 2);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 2; ++c) y(i, c) = 1e-2 * rng.gaussian();

  Eigen::MatrixXd vel = Eigen::MatrixXd::Zero(n, 2);
  const int iters = 300;
  for (int iter = 0; iter < iters; ++iter) {
    Eigen::MatrixXd num(n, n);
    double qsum = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) {
          num(i, j) = 0.0;
          continue;
        }
        num(i, j) = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        qsum += num(i, j);
      }
    }
    const double exaggeration = iter < 100 ? 4.0 : 1.0;
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, 2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = std::max(num(i, j) / qsum, 1e-12);
        const double coef =
            4.0 * (exaggeration * p(i, j) - q) * num(i, j);
        grad.row(i) += coef * (y.row(i) - y.row(j));
      }
    const double momentum = iter < 100 ? 0.5 : 0.8;
    vel = momentum * vel - 50.0 * grad;
    y += vel;
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

namespace {

struct VizPoint {
  std::string id, speaker, attribute, kind;
};

const char* kPalette[] = {"#3366cc", "#dc3912", "#ff9900", "#109618",
                          "#990099", "#0099c6", "#dd4477", "#66aa00",
                          "#b82e2e", "#316395"};

void write_svg(const std::string& path, const Eigen::MatrixXd& xy,
               const std::vector<VizPoint>& points,
               const std::string& color_key) {
  const double min_x = xy.col(0).minCoeff(), max_x = xy.col(0).maxCoeff();
  const double min_y = xy.col(1).minCoeff(), max_y = xy.col(1).maxCoeff();
  const double span_x = std::max(max_x - min_x, 1e-9);
  const double span_y = std::max(max_y - min_y, 1e-9);
  const int w = 640, h = 480, margin = 40;

  std::vector<std::string> labels;
  auto label_of = [&](const VizPoint& p) {
    return color_key == "speaker" ? p.speaker : p.attribute + "/" + p.kind;
  };
  for (const auto& p : points) {
    const std::string l = label_of(p);
    if (std::find(labels.begin(), labels.end(), l) == labels.end())
      labels.push_back(l);
  }

  std::ofstream os(path, std::ios::trunc);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
     << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int i = 0; i < xy.rows(); ++i) {
    const double px =
        margin + (xy(i, 0) - min_x) / span_x * (w - 2 * margin);
    const double py =
        h - margin - (xy(i, 1) - min_y) / span_y * (h - 2 * margin);
    const std::string l = label_of(points[static_cast<size_t>(i)]);
    const size_t li =
        std::find(labels.begin(), labels.end(), l) - labels.begin();
    os << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"4\" fill=\""
       << kPalette[li % 10] << "\" fill-opacity=\"0.75\"/>\n";
  }
  for (size_t li = 0; li < labels.size(); ++li) {
    os << "<circle cx=\"" << (margin / 2) << "\" cy=\"" << (20 + 18 * li)
       << "\" r=\"5\" fill=\"" << kPalette[li % 10] << "\"/>\n";
    os << "<text x=\"" << (margin / 2 + 10) << "\" y=\"" << (24 + 18 * li)
       << "\" font-size=\"12\" font-family=\"sans-serif\">" << labels[li]
       << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace

VisualizeResult visualize(const RunConfig& cfg,
                          const std::string& ncwavegan_ckpt,
                          VisualizeWhat what, const std::string& out_dir,
                          const std::string& projection, uint64_t seed,
                          const std::string& external_embeddings) {
  fs::create_directories(out_dir);
  const auto manifest = corpus::load_manifest(cfg.corpus_manifest);

  std::vector<VizPoint> points;
  std::vector<Eigen::VectorXd> feats;

  if (!external_embeddings.empty()) {
    // One line per utterance: id v1 v2 ... vd
    std::ifstream is(external_embeddings);
    if (!is)
      throw std::runtime_error("cannot open embeddings " + external_embeddings);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string id;
      ls >> id;
      std::vector<double> vals;
      double v;
      while (ls >> v) vals.push_back(v);
      if (vals.empty()) continue;
      Eigen::VectorXd x(vals.size());
      for (size_t i = 0; i < vals.size(); ++i) x[i] = vals[i];
      feats.push_back(std::move(x));
      const auto* u = manifest.find(id);
      points.push_back({id, u ? u->speaker_id : "unknown",
                        u ? (u->attribute.is_clean() ? "clean" : "noisy")
                          : "unknown",
                        "external"});
    }
  } else {
    auto vocoder = load_wavegan_checkpoint(ncwavegan_ckpt);
    const auto& model = *vocoder.model;
    const int n = static_cast<int>(manifest.entries.size());
    const int per = what == VisualizeWhat::kLatent ? 2 : 1;
    feats.resize(static_cast<size_t>(per) * n);
    points.resize(static_cast<size_t>(per) * n);
    parallel_for(n, [&](int i) {
      const auto& u = manifest.entries[static_cast<size_t>(i)];
      const auto wav = corpus::load_wav(manifest.resolve_wav(u));
      const Eigen::MatrixXd z = model.encode(wav).mean;
      const std::string attr = u.attribute.is_clean() ? "clean" : "noisy";
      feats[static_cast<size_t>(per) * i] = pool_time(z);
      points[static_cast<size_t>(per) * i] = {u.id, u.speaker_id, attr, "z"};
      if (per == 2) {
        feats[static_cast<size_t>(per) * i + 1] =
            pool_time(model.film_modulate(z, u.attribute));
        points[static_cast<size_t>(per) * i + 1] = {u.id, u.speaker_id, attr,
                                                    "z_tilde"};
      }
    });
  }

  if (feats.size() < 3) throw std::runtime_error("need at least 3 points");
  Eigen::MatrixXd rows(feats.size(), feats[0].size());
  for (size_t i = 0; i < feats.size(); ++i) rows.row(i) = feats[i];

  Eigen::MatrixXd xy;
  if (projection == "pca") {
    xy = pca_2d(rows);
  } else if (projection == "tsne") {
    xy = tsne_2d(rows, seed);
  } else {
    throw std::invalid_argument("unknown projection: " + projection);
  }

  const std::string stem =
      what == VisualizeWhat::kLatent ? "latent_space" : "speaker_space";
  VisualizeResult result;
  result.csv_path = (fs::path(out_dir) / (stem + ".csv")).string();
  result.svg_path = (fs::path(out_dir) / (stem + ".svg")).string();

  std::ofstream csv(result.csv_path, std::ios::trunc);
  csv << "id,x,y,speaker,attribute,kind\n";
  for (size_t i = 0; i < points.size(); ++i)
    csv << points[i].id << "," << format_num(xy(i, 0)) << ","
        << format_num(xy(i, 1)) << "," << points[i].speaker << ","
        << points[i].attribute << "," << points[i].kind << "\n";
  csv.close();

  write_svg(result.svg_path, xy, points,
            what == VisualizeWhat::kLatent ? "attribute" : "speaker");
  return result;
}

}  // namespace ncvc::pipeline
