#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shortcutlab/datagen.hpp"
#include "shortcutlab/model.hpp"

namespace scl {

/// 2*s*u/(s+u), or 0 when both are 0. Inputs are percentages.
double harmonic_mean(double seen, double unseen);

/// Cached per-sample log-softmax outputs of the two target heads, so bias
/// sweeps rescore without re-running the network.
struct TargetScores {
  int attr_classes = 0, obj_classes = 0;
  std::vector<std::vector<double>> attr_logp, obj_logp;  // [sample][class]
  std::vector<int> attr_label, obj_label;
};

TargetScores forward_target_scores(const ModelParams& params, const Dataset& target);

struct OpenWorldResult {
  double seen_acc = 0, unseen_acc = 0, hm = 0;  // percent
  Tensor pair_accuracy;                         // attr x obj, percent
};

/// Pair score = attr log-prob + obj log-prob, plus `bias` on unseen pairs.
/// Predicted pair is the argmax over the full grid (ties -> lexicographically
/// smallest); a sample counts only when both labels match.
OpenWorldResult score_open_world(const TargetScores& scores, const Dataset& target, double bias);
OpenWorldResult evaluate_open_world(const ModelParams& params, const Dataset& target,
                                    double bias = 0.0);

struct BiasPoint {
  double bias = 0, seen = 0, unseen = 0, hm = 0;
};

struct BiasCurve {
  std::vector<BiasPoint> points;
  double max_seen = 0, max_unseen = 0, max_hm = 0;
};

BiasCurve bias_sweep(const ModelParams& params, const Dataset& target,
                     const std::vector<double>& grid);

/// Accuracy of a fresh affine classifier trained on an 80/20 split of the
/// given frozen representations (full batch, 200 epochs, Adam at 0.01).
/// Throws when fewer than two classes are present.
double linear_probe(const Tensor& reps, const std::vector<int>& labels, int class_count,
                    std::uint64_t seed);

/// Representations of a dataset split under the model's current association:
/// columns blocks are z_attr then z_obj for target-role data, or the K factor
/// blocks for source-role data.
Tensor extract_representations(const ModelParams& params, const std::vector<LabeledImage>& samples,
                               bool target_role);

/// Probe accuracy grid. Target-role data gives the 2x2 table (rows z_attr,
/// z_obj; columns attribute, object labels); source-role data gives the KxK
/// factor heatmap. Diagonal entries are direct predictions, off-diagonal ones
/// cross predictions.
Tensor cross_prediction_matrix(const ModelParams& params, const Dataset& dataset,
                               std::uint64_t seed);

struct EvalOptions {
  double bias = 0.0;
  std::vector<double> bias_grid;  // non-empty enables the sweep
  bool cross_pred = false;
  bool assoc_snapshot = true;
  std::uint64_t probe_seed = 17;
};

struct EvalReport {
  OpenWorldResult open_world;
  BiasCurve bias_curve;      // filled when a grid was given
  Tensor cross_pred;         // empty unless requested
  Tensor assoc;              // K x 2 snapshot
  std::vector<double> assoc_col_entropy;
  std::vector<int> assoc_col_argmax;
};

EvalReport evaluate_run(const ModelParams& params, const Dataset& target, const EvalOptions& opts);

void write_report_json(const EvalReport& report, const std::string& path);
void write_crosspred_csv(const Tensor& matrix, const std::string& path);
void write_assoc_csv(const Tensor& assoc, const std::string& path);
void write_assoc_ppm(const Tensor& assoc, const std::string& path);

}  // namespace scl
