#pragma once

#include <vector>

#include "shortcutlab/graph.hpp"
#include "shortcutlab/model.hpp"

namespace scl {

/// A minibatch ready for the graph: one pixel row per sample plus per-task
/// label columns (K factor columns for source batches, attribute and object
/// for target batches).
struct Batch {
  Tensor x;                             // B x input_dim
  std::vector<std::vector<int>> labels; // labels[task][sample]
  std::size_t size() const { return x.rows(); }
};

struct LossConfig {
  double lambda = 10.0;  // source weight
  double gamma = 5.0;    // cross-independence weight
  double alpha = 5.0;    // association entropy weight
  double beta = 20.0;    // association suppression weight
  double tau = 0.33;     // suppression threshold
  Constraint constraint = Constraint::none;
  bool association_reg = false;
};

/// Node ids of the loss terms present in one training graph; -1 when a term
/// does not apply under the active configuration.
struct LossGraph {
  int total = -1;
  int source = -1;
  int target = -1;
  int ci = -1;
  int entropy = -1;
  int suppress = -1;
};

/// Mean over factors of the per-factor cross entropy (batch means inside).
int loss_source(Graph& g, const std::vector<int>& source_logits,
                const std::vector<std::vector<int>>& labels);

/// Mean of the attribute and object cross entropies.
int loss_target(Graph& g, int attr_logits, int obj_logits, const std::vector<int>& attr_labels,
                const std::vector<int>& obj_labels);

/// Adversary objective: sum over ordered factor pairs of the cross entropy of
/// head (k1,k2) on the detached z_k1. Only the heads receive gradients.
int loss_ci_adversary(Graph& g, const ModelParams& params, const StagedModel& staged,
                      int z_detached_src, const std::vector<std::vector<int>>& source_labels);

/// Independence objective: sum over ordered pairs of the cross entropy between
/// head predictions and the uniform distribution. Stage the heads without
/// gradients so only the encoder is pushed.
int loss_ci(Graph& g, const ModelParams& params, const StagedModel& staged, int z_src);

int loss_entropy(Graph& g, int assoc_soft);
int loss_suppress(Graph& g, int assoc_soft, double tau);

/// Full training objective with gradient routing:
///   total = target + lambda*source [+ gamma*ci] [+ alpha*entropy + beta*suppress]
/// Under the isolated-latent constraint a stop-gradient sits between the
/// encoder output and the whole target branch. Either batch pointer may be
/// null only when the configuration ignores that domain.
LossGraph build_total_loss(Graph& g, const ModelParams& params, const StagedModel& staged,
                           const Batch* source, const Batch* target, const LossConfig& cfg);

/// Adversary step graph for the two-step optimization: stage with
/// encoder/head gradients off and ci gradients on, then minimize this.
int build_ci_adversary_loss(Graph& g, const ModelParams& params, const StagedModel& staged,
                            const Batch& source);

}  // namespace scl
