#include "shortcutlab/objectives.hpp"

#include <stdexcept>

namespace scl {

int loss_source(Graph& g, const std::vector<int>& source_logits,
                const std::vector<std::vector<int>>& labels) {
  if (source_logits.empty() || source_logits.size() != labels.size()) {
    throw std::invalid_argument("loss_source: " + std::to_string(source_logits.size()) +
                                " heads vs " + std::to_string(labels.size()) + " label columns");
  }
  std::vector<int> terms;
  for (std::size_t k = 0; k < source_logits.size(); ++k) {
    terms.push_back(g.cross_entropy(source_logits[k], labels[k]));
  }
  double w = 1.0 / static_cast<double>(terms.size());
  return g.lincomb(terms, std::vector<double>(terms.size(), w));
}

int loss_target(Graph& g, int attr_logits, int obj_logits, const std::vector<int>& attr_labels,
                const std::vector<int>& obj_labels) {
  int ce_a = g.cross_entropy(attr_logits, attr_labels);
  int ce_o = g.cross_entropy(obj_logits, obj_labels);
  return g.lincomb({ce_a, ce_o}, {0.5, 0.5});
}

int loss_ci_adversary(Graph& g, const ModelParams& params, const StagedModel& staged,
                      int z_detached_src, const std::vector<std::vector<int>>& source_labels) {
  int k_count = params.cfg.factor_count();
  std::vector<int> terms;
  for (int k1 = 0; k1 < k_count; ++k1) {
    int zk = g.slice_cols(z_detached_src, static_cast<std::size_t>(k1) * params.cfg.factor_dim,
                          params.cfg.factor_dim);
    for (int k2 = 0; k2 < k_count; ++k2) {
      if (k1 == k2) continue;
      int idx = params.ci_head_index(k1, k2);
      int logits = mlp_forward(g, staged.ci_head_w[static_cast<std::size_t>(idx)],
                               staged.ci_head_b[static_cast<std::size_t>(idx)], zk);
      terms.push_back(g.cross_entropy(logits, source_labels[static_cast<std::size_t>(k2)]));
    }
  }
  if (terms.empty()) return g.leaf(Tensor::scalar(0.0));
  return g.lincomb(terms, std::vector<double>(terms.size(), 1.0));
}

int loss_ci(Graph& g, const ModelParams& params, const StagedModel& staged, int z_src) {
  int k_count = params.cfg.factor_count();
  std::vector<int> terms;
  for (int k1 = 0; k1 < k_count; ++k1) {
    int zk = g.slice_cols(z_src, static_cast<std::size_t>(k1) * params.cfg.factor_dim,
                          params.cfg.factor_dim);
    for (int k2 = 0; k2 < k_count; ++k2) {
      if (k1 == k2) continue;
      int idx = params.ci_head_index(k1, k2);
      int logits = mlp_forward(g, staged.ci_head_w[static_cast<std::size_t>(idx)],
                               staged.ci_head_b[static_cast<std::size_t>(idx)], zk);
      terms.push_back(g.cross_entropy_uniform(logits));
    }
  }
  if (terms.empty()) return g.leaf(Tensor::scalar(0.0));
  return g.lincomb(terms, std::vector<double>(terms.size(), 1.0));
}

int loss_entropy(Graph& g, int assoc_soft) { return g.entropy_cols(assoc_soft); }

int loss_suppress(Graph& g, int assoc_soft, double tau) { return g.suppress_rows(assoc_soft, tau); }

LossGraph build_total_loss(Graph& g, const ModelParams& params, const StagedModel& staged,
                           const Batch* source, const Batch* target, const LossConfig& cfg) {
  const ModelConfig& mc = params.cfg;
  bool want_source = mc.use_source;
  if (want_source && (source == nullptr || source->size() == 0)) {
    throw std::invalid_argument("total_loss: empty source batch");
  }
  if (target != nullptr && target->size() == 0) {
    throw std::invalid_argument("total_loss: empty target batch");
  }
  if (!want_source && target == nullptr) {
    throw std::invalid_argument("total_loss: nothing to train on");
  }

  LossGraph out;
  std::vector<int> terms;
  std::vector<double> weights;

  int z_src = -1;
  if (want_source) {
    int x_src = g.leaf(source->x);
    z_src = encode(g, params, staged, x_src);
    out.source = loss_source(g, predict_source(g, params, staged, z_src), source->labels);
    terms.push_back(out.source);
    weights.push_back(cfg.lambda);
  }

  if (target != nullptr) {
    int x_tgt = g.leaf(target->x);
    int z_tgt = encode(g, params, staged, x_tgt);
    if (cfg.constraint == Constraint::isolated_latent) {
      z_tgt = g.stop_grad(z_tgt);
    }
    int z_attr = -1, z_obj = -1;
    if (mc.representation == Representation::global) {
      z_attr = z_tgt;
      z_obj = z_tgt;
    } else if (mc.association == AssociationKind::manual) {
      AssociationMatrix manual =
          AssociationMatrix::manual(mc.factor_count(), mc.attr_factor, mc.obj_factor);
      int a = g.leaf(manual.values);
      std::tie(z_attr, z_obj) = apply_association(g, params, z_tgt, a);
    } else {
      int a_soft = soft_association(g, staged.assoc_logits);
      std::tie(z_attr, z_obj) = apply_association(g, params, z_tgt, a_soft);
      if (cfg.association_reg) {
        out.entropy = loss_entropy(g, a_soft);
        out.suppress = loss_suppress(g, a_soft, cfg.tau);
        terms.push_back(out.entropy);
        weights.push_back(cfg.alpha);
        terms.push_back(out.suppress);
        weights.push_back(cfg.beta);
      }
    }
    auto [attr_logits, obj_logits] = predict_target(g, params, staged, z_attr, z_obj);
    out.target = loss_target(g, attr_logits, obj_logits, target->labels[0], target->labels[1]);
    terms.insert(terms.begin(), out.target);
    weights.insert(weights.begin(), 1.0);
  }

  if (cfg.constraint == Constraint::cross_independence && mc.has_ci_heads() && want_source) {
    out.ci = loss_ci(g, params, staged, z_src);
    terms.push_back(out.ci);
    weights.push_back(cfg.gamma);
  }

  out.total = g.lincomb(terms, weights);
  return out;
}

int build_ci_adversary_loss(Graph& g, const ModelParams& params, const StagedModel& staged,
                            const Batch& source) {
  if (source.size() == 0) throw std::invalid_argument("ci_adversary: empty source batch");
  int x = g.leaf(source.x);
  int z = g.stop_grad(encode(g, params, staged, x));
  return loss_ci_adversary(g, params, staged, z, source.labels);
}

}  // namespace scl
