#include "shortcutlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "shortcutlab/graph.hpp"
#include "shortcutlab/rng.hpp"
#include "shortcutlab/trainer.hpp"

namespace scl {

using nlohmann::json;

double harmonic_mean(double seen, double unseen) {
  double s = seen + unseen;
  return s == 0.0 ? 0.0 : 2.0 * seen * unseen / s;
}

namespace {

StageOptions frozen() {
  StageOptions o;
  o.encoder_grad = false;
  o.source_heads_grad = false;
  o.target_heads_grad = false;
  o.ci_heads_grad = false;
  o.assoc_grad = false;
  return o;
}

void log_softmax_row(const std::vector<double>& logits, std::vector<double>& out) {
  double mx = logits[0];
  for (double v : logits) mx = v > mx ? v : mx;
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  double lse = mx + std::log(sum);
  out.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

constexpr std::size_t kEvalChunk = 256;

}  // namespace

TargetScores forward_target_scores(const ModelParams& params, const Dataset& target) {
  const ModelConfig& mc = params.cfg;
  TargetScores out;
  out.attr_classes = mc.attr_classes;
  out.obj_classes = mc.obj_classes;
  std::size_t n = target.test.size();
  std::size_t pixels = static_cast<std::size_t>(mc.input_dim);

  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    std::size_t stop = std::min(n, start + kEvalChunk);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    Batch b = make_batch(target.test, idx, 2, pixels);
    Graph g;
    StagedModel staged = stage_model(g, params, frozen());
    int x = g.leaf(b.x);
    int z = encode(g, params, staged, x);
    int z_attr = -1, z_obj = -1;
    if (mc.representation == Representation::global) {
      z_attr = z_obj = z;
    } else if (mc.association == AssociationKind::manual) {
      int a = g.leaf(
          AssociationMatrix::manual(mc.factor_count(), mc.attr_factor, mc.obj_factor).values);
      std::tie(z_attr, z_obj) = apply_association(g, params, z, a);
    } else {
      int a_soft = soft_association(g, staged.assoc_logits);
      std::tie(z_attr, z_obj) = apply_association(g, params, z, a_soft);
    }
    auto [attr_logits, obj_logits] = predict_target(g, params, staged, z_attr, z_obj);
    const Tensor& la = g.value(attr_logits);
    const Tensor& lo = g.value(obj_logits);
    std::vector<double> row;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      row.assign(la.data.begin() + static_cast<long>(i * la.cols()),
                 la.data.begin() + static_cast<long>((i + 1) * la.cols()));
      out.attr_logp.emplace_back();
      log_softmax_row(row, out.attr_logp.back());
      row.assign(lo.data.begin() + static_cast<long>(i * lo.cols()),
                 lo.data.begin() + static_cast<long>((i + 1) * lo.cols()));
      out.obj_logp.emplace_back();
      log_softmax_row(row, out.obj_logp.back());
      out.attr_label.push_back(b.labels[0][i]);
      out.obj_label.push_back(b.labels[1][i]);
    }
  }
  return out;
}

OpenWorldResult score_open_world(const TargetScores& scores, const Dataset& target, double bias) {
  int na = scores.attr_classes, no = scores.obj_classes;
  OpenWorldResult res;
  res.pair_accuracy = Tensor::zeros({static_cast<std::size_t>(na), static_cast<std::size_t>(no)});
  Tensor pair_total = Tensor::zeros(res.pair_accuracy.shape);

  long seen_total = 0, seen_correct = 0, unseen_total = 0, unseen_correct = 0;
  for (std::size_t i = 0; i < scores.attr_logp.size(); ++i) {
    int la = scores.attr_label[i], lo = scores.obj_label[i];
    if (la < 0 || la >= na || lo < 0 || lo >= no) {
      throw std::invalid_argument("open_world: sample label (" + std::to_string(la) + ", " +
                                  std::to_string(lo) + ") outside the class grid");
    }
    int best_a = 0, best_o = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < na; ++a) {
      for (int o = 0; o < no; ++o) {
        double s = scores.attr_logp[i][static_cast<std::size_t>(a)] +
                   scores.obj_logp[i][static_cast<std::size_t>(o)];
        if (!target.is_seen(a, o)) s += bias;
        if (s > best) {  // strict: ties keep the lexicographically smallest pair
          best = s;
          best_a = a;
          best_o = o;
        }
      }
    }
    bool correct = best_a == la && best_o == lo;
    bool seen = target.is_seen(la, lo);
    (seen ? seen_total : unseen_total) += 1;
    if (correct) (seen ? seen_correct : unseen_correct) += 1;
    pair_total.at(static_cast<std::size_t>(la), static_cast<std::size_t>(lo)) += 1;
    if (correct) {
      res.pair_accuracy.at(static_cast<std::size_t>(la), static_cast<std::size_t>(lo)) += 1;
    }
  }
  for (std::size_t i = 0; i < res.pair_accuracy.numel(); ++i) {
    if (pair_total.data[i] > 0) res.pair_accuracy.data[i] *= 100.0 / pair_total.data[i];
  }
  res.seen_acc = seen_total > 0 ? 100.0 * static_cast<double>(seen_correct) /
                                      static_cast<double>(seen_total)
                                : 0.0;
  res.unseen_acc = unseen_total > 0 ? 100.0 * static_cast<double>(unseen_correct) /
                                          static_cast<double>(unseen_total)
                                    : 0.0;
  res.hm = harmonic_mean(res.seen_acc, res.unseen_acc);
  return res;
}

OpenWorldResult evaluate_open_world(const ModelParams& params, const Dataset& target,
                                    double bias) {
  return score_open_world(forward_target_scores(params, target), target, bias);
}

BiasCurve bias_sweep(const ModelParams& params, const Dataset& target,
                     const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("bias_sweep: empty grid");
  TargetScores scores = forward_target_scores(params, target);
  BiasCurve curve;
  for (double b : grid) {
    OpenWorldResult r = score_open_world(scores, target, b);
    curve.points.push_back({b, r.seen_acc, r.unseen_acc, r.hm});
    curve.max_seen = std::max(curve.max_seen, r.seen_acc);
    curve.max_unseen = std::max(curve.max_unseen, r.unseen_acc);
    curve.max_hm = std::max(curve.max_hm, r.hm);
  }
  return curve;
}

double linear_probe(const Tensor& reps, const std::vector<int>& labels, int class_count,
                    std::uint64_t seed) {
  std::size_t n = reps.rows();
  if (n != labels.size()) {
    throw std::invalid_argument("linear_probe: " + std::to_string(n) + " rows vs " +
                                std::to_string(labels.size()) + " labels");
  }
  std::vector<bool> present(static_cast<std::size_t>(class_count), false);
  int distinct = 0;
  for (int l : labels) {
    if (l < 0 || l >= class_count) throw std::out_of_range("linear_probe: label out of range");
    if (!present[static_cast<std::size_t>(l)]) {
      present[static_cast<std::size_t>(l)] = true;
      ++distinct;
    }
  }
  if (distinct < 2) throw std::invalid_argument("linear_probe: needs at least two classes present");

  Rng rng(derive_seed(seed, "probe"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t n_eval = std::max<std::size_t>(1, n / 5);
  std::size_t n_train = n - n_eval;

  std::size_t dim = reps.cols();
  Tensor x_train = Tensor::zeros({n_train, dim});
  Tensor x_eval = Tensor::zeros({n_eval, dim});
  std::vector<int> y_train(n_train), y_eval(n_eval);
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = reps.data.data() + order[i] * dim;
    if (i < n_train) {
      std::copy(src, src + dim, x_train.data.data() + i * dim);
      y_train[i] = labels[order[i]];
    } else {
      std::copy(src, src + dim, x_eval.data.data() + (i - n_train) * dim);
      y_eval[i - n_train] = labels[order[i]];
    }
  }

  double bound = std::sqrt(6.0 / static_cast<double>(dim));
  Tensor w = Tensor::zeros({static_cast<std::size_t>(class_count), dim});
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  Tensor b = Tensor::zeros({static_cast<std::size_t>(class_count)});

  AdamHyper hyper;
  hyper.weight_decay = 0.0;
  AdamState w_state = AdamState::init(w, hyper);
  AdamState b_state = AdamState::init(b, hyper);
  for (int epoch = 0; epoch < 200; ++epoch) {
    Graph g;
    int wn = g.leaf(w, true);
    int bn = g.leaf(b, true);
    int xn = g.leaf(x_train);
    int loss = g.cross_entropy(g.affine(xn, wn, bn), y_train);
    GradMap grads = g.backward(loss);
    adam_step(w, grads.at(wn), w_state);
    adam_step(b, grads.at(bn), b_state);
  }

  Graph g;
  int logits = g.affine(g.leaf(x_eval), g.leaf(w), g.leaf(b));
  const Tensor& out = g.value(logits);
  long correct = 0;
  for (std::size_t i = 0; i < n_eval; ++i) {
    const double* row = out.data.data() + i * static_cast<std::size_t>(class_count);
    int best = 0;
    for (int c = 1; c < class_count; ++c) {
      if (row[static_cast<std::size_t>(c)] > row[static_cast<std::size_t>(best)]) best = c;
    }
    if (best == y_eval[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(n_eval);
}

Tensor extract_representations(const ModelParams& params,
                               const std::vector<LabeledImage>& samples, bool target_role) {
  const ModelConfig& mc = params.cfg;
  if (!target_role && mc.representation != Representation::factor) {
    throw std::invalid_argument("extract_representations: factor blocks need a factor-mode model");
  }
  std::size_t n = samples.size();
  std::size_t pixels = static_cast<std::size_t>(mc.input_dim);
  std::size_t dim = static_cast<std::size_t>(mc.factor_dim);
  std::size_t blocks = target_role ? 2 : static_cast<std::size_t>(mc.factor_count());
  std::size_t width = mc.representation == Representation::factor
                          ? blocks * dim
                          : blocks * static_cast<std::size_t>(mc.representation_width());
  Tensor out = Tensor::zeros({n, width});

  std::size_t label_width = target_role ? 2 : static_cast<std::size_t>(mc.factor_count());
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    std::size_t stop = std::min(n, start + kEvalChunk);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    Batch b = make_batch(samples, idx, label_width, pixels);
    Graph g;
    StagedModel staged = stage_model(g, params, frozen());
    int x = g.leaf(b.x);
    int z = encode(g, params, staged, x);
    int rep = z;
    if (target_role && mc.representation == Representation::factor) {
      if (mc.association == AssociationKind::manual) {
        int a = g.leaf(
            AssociationMatrix::manual(mc.factor_count(), mc.attr_factor, mc.obj_factor).values);
        rep = g.factor_mix(z, a, static_cast<std::size_t>(mc.factor_count()), dim);
      } else {
        rep = g.factor_mix(z, soft_association(g, staged.assoc_logits),
                           static_cast<std::size_t>(mc.factor_count()), dim);
      }
    } else if (target_role && mc.representation == Representation::global) {
      // Both blocks are the full global vector.
      std::size_t gw = static_cast<std::size_t>(mc.representation_width());
      const Tensor& zv = g.value(z);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        double* dst = out.data.data() + (start + i) * width;
        std::copy(zv.data.data() + i * gw, zv.data.data() + (i + 1) * gw, dst);
        std::copy(zv.data.data() + i * gw, zv.data.data() + (i + 1) * gw, dst + gw);
      }
      continue;
    }
    const Tensor& rv = g.value(rep);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy(rv.data.data() + i * width, rv.data.data() + (i + 1) * width,
                out.data.data() + (start + i) * width);
    }
  }
  return out;
}

Tensor cross_prediction_matrix(const ModelParams& params, const Dataset& dataset,
                               std::uint64_t seed) {
  const ModelConfig& mc = params.cfg;
  bool target_role = dataset.spec.role == DatasetRole::target;
  std::size_t blocks = target_role ? 2 : static_cast<std::size_t>(mc.factor_count());
  std::size_t dim = mc.representation == Representation::factor
                        ? static_cast<std::size_t>(mc.factor_dim)
                        : static_cast<std::size_t>(mc.representation_width());
  const auto& samples = dataset.test;
  Tensor reps = extract_representations(params, samples, target_role);

  std::vector<std::vector<int>> label_cols(blocks);
  std::vector<int> class_counts(blocks);
  if (target_role) {
    class_counts[0] = dataset.attr_classes();
    class_counts[1] = dataset.obj_classes();
  } else {
    for (std::size_t k = 0; k < blocks; ++k) {
      class_counts[k] = dataset.spec.catalog.classes_of(static_cast<int>(k));
    }
  }
  for (const auto& img : samples) {
    for (std::size_t l = 0; l < blocks; ++l) label_cols[l].push_back(img.labels[l]);
  }

  Tensor matrix = Tensor::zeros({blocks, blocks});
  for (std::size_t r = 0; r < blocks; ++r) {
    Tensor block = Tensor::zeros({samples.size(), dim});
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const double* src = reps.data.data() + i * blocks * dim + r * dim;
      std::copy(src, src + dim, block.data.data() + i * dim);
    }
    for (std::size_t c = 0; c < blocks; ++c) {
      matrix.at(r, c) = linear_probe(block, label_cols[c], class_counts[c],
                                     derive_seed(seed, "crosspred", r * blocks + c));
    }
  }
  return matrix;
}

EvalReport evaluate_run(const ModelParams& params, const Dataset& target, const EvalOptions& opts) {
  EvalReport report;
  TargetScores scores = forward_target_scores(params, target);
  report.open_world = score_open_world(scores, target, opts.bias);
  if (!opts.bias_grid.empty()) {
    for (double b : opts.bias_grid) {
      OpenWorldResult r = score_open_world(scores, target, b);
      report.bias_curve.points.push_back({b, r.seen_acc, r.unseen_acc, r.hm});
      report.bias_curve.max_seen = std::max(report.bias_curve.max_seen, r.seen_acc);
      report.bias_curve.max_unseen = std::max(report.bias_curve.max_unseen, r.unseen_acc);
      report.bias_curve.max_hm = std::max(report.bias_curve.max_hm, r.hm);
    }
  }
  if (opts.cross_pred) {
    report.cross_pred = cross_prediction_matrix(params, target, opts.probe_seed);
  }
  if (opts.assoc_snapshot) {
    AssociationMatrix a = params.association();
    report.assoc = a.values;
    report.assoc_col_entropy = a.column_entropies();
    report.assoc_col_argmax = a.column_argmax();
  }
  return report;
}

void write_report_json(const EvalReport& report, const std::string& path) {
  json pair_rows = json::array();
  for (std::size_t a = 0; a < report.open_world.pair_accuracy.rows(); ++a) {
    json row = json::array();
    for (std::size_t o = 0; o < report.open_world.pair_accuracy.cols(); ++o) {
      row.push_back(report.open_world.pair_accuracy.at(a, o));
    }
    pair_rows.push_back(row);
  }
  json j{{"seen_acc", report.open_world.seen_acc},
         {"unseen_acc", report.open_world.unseen_acc},
         {"hm_acc", report.open_world.hm},
         {"pair_accuracy", pair_rows}};
  if (!report.bias_curve.points.empty()) {
    json pts = json::array();
    for (const auto& p : report.bias_curve.points) {
      pts.push_back(json{{"bias", p.bias}, {"seen", p.seen}, {"unseen", p.unseen}, {"hm", p.hm}});
    }
    j["bias_curve"] = pts;
    j["bias_max_seen"] = report.bias_curve.max_seen;
    j["bias_max_unseen"] = report.bias_curve.max_unseen;
    j["bias_max_hm"] = report.bias_curve.max_hm;
  }
  if (!report.cross_pred.empty()) {
    json rows = json::array();
    for (std::size_t r = 0; r < report.cross_pred.rows(); ++r) {
      json row = json::array();
      for (std::size_t c = 0; c < report.cross_pred.cols(); ++c) {
        row.push_back(report.cross_pred.at(r, c));
      }
      rows.push_back(row);
    }
    j["cross_prediction"] = rows;
  }
  if (!report.assoc.empty()) {
    json rows = json::array();
    for (std::size_t r = 0; r < report.assoc.rows(); ++r) {
      rows.push_back(json::array({report.assoc.at(r, 0), report.assoc.at(r, 1)}));
    }
    j["association"] = rows;
    j["association_col_entropy"] = report.assoc_col_entropy;
    j["association_col_argmax"] = report.assoc_col_argmax;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("report: cannot write " + path);
  out << j.dump(2) << "\n";
}

void write_crosspred_csv(const Tensor& matrix, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("crosspred: cannot write " + path);
  out << "rep";
  for (std::size_t c = 0; c < matrix.cols(); ++c) out << ",label" << c;
  out << "\n";
  char buf[64];
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    out << "z" << r;
    for (std::size_t c = 0; c < matrix.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), ",%.4f", matrix.at(r, c));
      out << buf;
    }
    out << "\n";
  }
}

void write_assoc_csv(const Tensor& assoc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("assoc: cannot write " + path);
  out << "factor,attribute,object\n";
  char buf[80];
  for (std::size_t r = 0; r < assoc.rows(); ++r) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f", r, assoc.at(r, 0), assoc.at(r, 1));
    out << buf << "\n";
  }
}

void write_assoc_ppm(const Tensor& assoc, const std::string& path) {
  // Heatmap scaled up so a K x 2 matrix is visible: each cell is 24x24 px.
  const int cell = 24;
  int h = static_cast<int>(assoc.rows()) * cell;
  int w = static_cast<int>(assoc.cols()) * cell;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("assoc: cannot write " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = assoc.at(static_cast<std::size_t>(y / cell), static_cast<std::size_t>(x / cell));
      auto byte = [](double f) {
        return static_cast<unsigned char>(std::lround(std::clamp(f, 0.0, 1.0) * 255.0));
      };
      // white -> blue ramp
      out.put(static_cast<char>(byte(1.0 - v)));
      out.put(static_cast<char>(byte(1.0 - 0.6 * v)));
      out.put(static_cast<char>(byte(1.0)));
    }
  }
}

}  // namespace scl
