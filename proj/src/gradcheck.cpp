#include "shortcutlab/gradcheck.hpp"

#include <chrono>
#include <cmath>

#include "shortcutlab/model.hpp"
#include "shortcutlab/objectives.hpp"
#include "shortcutlab/rng.hpp"

namespace scl {

namespace {

Batch random_batch(Rng& rng, std::size_t n, int input_dim, const std::vector<int>& class_counts) {
  Batch b;
  b.x = Tensor::zeros({n, static_cast<std::size_t>(input_dim)});
  for (double& v : b.x.data) v = rng.uniform();
  b.labels.resize(class_counts.size());
  for (std::size_t l = 0; l < class_counts.size(); ++l) {
    for (std::size_t i = 0; i < n; ++i) {
      b.labels[l].push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(
          class_counts[l]))));
    }
  }
  return b;
}

double rel_err(double a, double f) {
  double denom = std::max({std::fabs(a), std::fabs(f), 1e-4});
  return std::fabs(a - f) / denom;
}

}  // namespace

GradCheckReport run_gradient_suite(std::uint64_t seed, double tolerance) {
  auto t0 = std::chrono::steady_clock::now();
  GradCheckReport report;
  report.ok = true;

  const double h = 1e-6;

  for (Representation rep : {Representation::factor, Representation::global}) {
    for (Constraint con :
         {Constraint::none, Constraint::isolated_latent, Constraint::cross_independence}) {
      for (AssociationKind assoc : {AssociationKind::manual, AssociationKind::learned}) {
        ModelConfig mc;
        mc.representation = rep;
        mc.constraint = con;
        mc.association = assoc;
        mc.use_source = true;
        mc.input_dim = 12;
        mc.factor_dim = 3;
        mc.encoder_hidden = 8;
        mc.head_hidden = 6;
        mc.source_class_counts = {4, 3, 3};
        mc.attr_classes = 3;
        mc.obj_classes = 4;
        mc.attr_factor = 1;
        mc.obj_factor = 0;

        GradCheckCase result;
        result.name = std::string(to_string(rep)) + "/" + to_string(con) + "/" + to_string(assoc);

        ModelParams params = ModelParams::init(mc, derive_seed(seed, result.name));
        Rng rng(derive_seed(seed, result.name + "/data"));
        if (!params.assoc_logits.empty()) {
          // Break the argmax tie of the uniform starting association so the
          // suppression term is locally smooth under the probe step.
          for (double& v : params.assoc_logits.data) v = 0.3 * rng.normal();
        }
        Batch src = random_batch(rng, 4, mc.input_dim, mc.source_class_counts);
        Batch tgt = random_batch(rng, 4, mc.input_dim, {mc.attr_classes, mc.obj_classes});

        LossConfig lc;
        lc.constraint = con;
        lc.association_reg = assoc == AssociationKind::learned;
        lc.lambda = 2.0;
        lc.gamma = 1.5;

        auto loss_value = [&](const ModelParams& p) {
          Graph g;
          StageOptions opts;
          opts.ci_heads_grad = false;
          StagedModel staged = stage_model(g, p, opts);
          LossGraph lg = build_total_loss(g, p, staged, &src, &tgt, lc);
          return g.value(lg.total).scalar_value();
        };

        // Analytic gradients of the main objective.
        Graph g;
        StageOptions opts;
        opts.ci_heads_grad = false;
        StagedModel staged = stage_model(g, params, opts);
        LossGraph lg = build_total_loss(g, params, staged, &src, &tgt, lc);
        GradMap grads = g.backward(lg.total);

        std::vector<int> staged_ids;
        {
          // Same declared order as for_each_param.
          auto push = [&](const std::vector<int>& w, const std::vector<int>& b) {
            for (std::size_t l = 0; l < w.size(); ++l) {
              staged_ids.push_back(w[l]);
              staged_ids.push_back(b[l]);
            }
          };
          push(staged.encoder_w, staged.encoder_b);
          for (std::size_t k = 0; k < staged.source_head_w.size(); ++k) {
            push(staged.source_head_w[k], staged.source_head_b[k]);
          }
          push(staged.attr_w, staged.attr_b);
          push(staged.obj_w, staged.obj_b);
          for (std::size_t i = 0; i < staged.ci_head_w.size(); ++i) {
            push(staged.ci_head_w[i], staged.ci_head_b[i]);
          }
          if (staged.assoc_logits >= 0) staged_ids.push_back(staged.assoc_logits);
        }

        std::size_t slot = 0;
        params.for_each_param([&](const std::string& pname, Tensor& t) {
          int node = staged_ids[slot++];
          bool ci_param = pname.rfind("ci_head", 0) == 0;
          const Tensor* analytic = nullptr;
          Tensor zero;
          if (g.requires_grad(node)) {
            analytic = &grads.at(node);
          } else {
            zero = Tensor::zeros(t.shape);
            analytic = &zero;
          }
          if (ci_param) {
            // The main step must not touch adversary heads at all.
            for (double v : analytic->data) {
              if (v != 0.0) result.stop_grad_blocks_zero = false;
            }
            return;
          }
          for (std::size_t i = 0; i < t.numel(); ++i) {
            double saved = t.data[i];
            t.data[i] = saved + h;
            double fp = loss_value(params);
            t.data[i] = saved - h;
            double fm = loss_value(params);
            t.data[i] = saved;
            double fd = (fp - fm) / (2.0 * h);
            result.max_rel_err = std::max(result.max_rel_err, rel_err(analytic->data[i], fd));
            result.params_checked += 1;
          }
        });

        // Isolated latent: the target part alone must leave the encoder
        // untouched, exactly.
        if (con == Constraint::isolated_latent) {
          Graph g2;
          StagedModel staged2 = stage_model(g2, params, opts);
          LossConfig lc2 = lc;
          lc2.lambda = 0.0;  // total reduces to the target branch
          LossGraph lg2 = build_total_loss(g2, params, staged2, &src, &tgt, lc2);
          GradMap grads2 = g2.backward(lg2.total);
          for (std::size_t l = 0; l < staged2.encoder_w.size(); ++l) {
            for (double v : grads2.at(staged2.encoder_w[l]).data) {
              if (v != 0.0) result.stop_grad_blocks_zero = false;
            }
            for (double v : grads2.at(staged2.encoder_b[l]).data) {
              if (v != 0.0) result.stop_grad_blocks_zero = false;
            }
          }
        }

        // Cross independence: adversary loss moves only the adversary heads;
        // finite differences must agree there too.
        if (con == Constraint::cross_independence && mc.has_ci_heads()) {
          auto adv_value = [&](const ModelParams& p) {
            Graph ga;
            StageOptions aopts;
            aopts.encoder_grad = false;
            aopts.source_heads_grad = false;
            aopts.target_heads_grad = false;
            aopts.assoc_grad = false;
            StagedModel sa = stage_model(ga, p, aopts);
            return ga.value(build_ci_adversary_loss(ga, p, sa, src)).scalar_value();
          };
          Graph ga;
          StageOptions aopts;
          aopts.encoder_grad = false;
          aopts.source_heads_grad = false;
          aopts.target_heads_grad = false;
          aopts.assoc_grad = false;
          StagedModel sa = stage_model(ga, params, aopts);
          int adv = build_ci_adversary_loss(ga, params, sa, src);
          GradMap agrads = ga.backward(adv);
          for (std::size_t l = 0; l < sa.encoder_w.size(); ++l) {
            if (ga.requires_grad(sa.encoder_w[l])) result.stop_grad_blocks_zero = false;
          }
          for (std::size_t hd = 0; hd < sa.ci_head_w.size(); ++hd) {
            for (std::size_t l = 0; l < sa.ci_head_w[hd].size(); ++l) {
              for (int node : {sa.ci_head_w[hd][l], sa.ci_head_b[hd][l]}) {
                Tensor& t = node == sa.ci_head_w[hd][l] ? params.ci_heads[hd].weights[l]
                                                        : params.ci_heads[hd].biases[l];
                const Tensor& a = agrads.at(node);
                for (std::size_t i = 0; i < t.numel(); ++i) {
                  double saved = t.data[i];
                  t.data[i] = saved + h;
                  double fp = adv_value(params);
                  t.data[i] = saved - h;
                  double fm = adv_value(params);
                  t.data[i] = saved;
                  double fd = (fp - fm) / (2.0 * h);
                  result.max_rel_err = std::max(result.max_rel_err, rel_err(a.data[i], fd));
                  result.params_checked += 1;
                }
              }
            }
          }
        }

        result.ok = result.max_rel_err < tolerance && result.stop_grad_blocks_zero;
        report.ok = report.ok && result.ok;
        report.cases.push_back(std::move(result));
      }
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace scl
