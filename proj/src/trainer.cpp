#include "shortcutlab/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "shortcutlab/kernels.hpp"
#include "shortcutlab/rng.hpp"

namespace scl {

namespace fs = std::filesystem;
using nlohmann::json;

Batch make_batch(const std::vector<LabeledImage>& samples, const std::vector<std::size_t>& indices,
                 std::size_t label_width, std::size_t pixel_count) {
  Batch b;
  b.x = Tensor::zeros({indices.size(), pixel_count});
  b.labels.assign(label_width, std::vector<int>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const LabeledImage& img = samples[indices[i]];
    if (img.pixels.size() != pixel_count || img.labels.size() != label_width) {
      throw std::invalid_argument("make_batch: sample layout mismatch");
    }
    double* row = b.x.data.data() + i * pixel_count;
    for (std::size_t p = 0; p < pixel_count; ++p) row[p] = static_cast<double>(img.pixels[p]);
    for (std::size_t l = 0; l < label_width; ++l) b.labels[l][i] = img.labels[l];
  }
  return b;
}

namespace {

// Sequential draw over a seeded shuffle; wraps with a reshuffle so every draw
// returns exactly `count` indices.
struct DomainSampler {
  const std::vector<LabeledImage>* samples = nullptr;
  Rng rng{0};
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  long consumed = 0;

  void init(const std::vector<LabeledImage>& s, std::uint64_t seed) {
    samples = &s;
    rng = Rng(seed);
    order.resize(s.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    cursor = 0;
  }
  void reshuffle() {
    rng.shuffle(order);
    cursor = 0;
  }
  std::vector<std::size_t> draw(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (cursor == order.size()) reshuffle();
      out.push_back(order[cursor++]);
    }
    consumed += static_cast<long>(count);
    return out;
  }
};

// Staged-leaf ids come back in the same declared order as for_each_param, so
// optimizer slot i always matches staged id i.
std::vector<int> staged_param_ids(const StagedModel& s) {
  std::vector<int> ids;
  auto push_mlp = [&](const std::vector<int>& w, const std::vector<int>& b) {
    for (std::size_t l = 0; l < w.size(); ++l) {
      ids.push_back(w[l]);
      ids.push_back(b[l]);
    }
  };
  push_mlp(s.encoder_w, s.encoder_b);
  for (std::size_t k = 0; k < s.source_head_w.size(); ++k) {
    push_mlp(s.source_head_w[k], s.source_head_b[k]);
  }
  push_mlp(s.attr_w, s.attr_b);
  push_mlp(s.obj_w, s.obj_b);
  for (std::size_t i = 0; i < s.ci_head_w.size(); ++i) {
    push_mlp(s.ci_head_w[i], s.ci_head_b[i]);
  }
  if (s.assoc_logits >= 0) ids.push_back(s.assoc_logits);
  return ids;
}

std::vector<Tensor*> param_pointers(ModelParams& p) {
  std::vector<Tensor*> out;
  p.for_each_param([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

double mean_part(const Graph& g, int node) {
  return node >= 0 ? g.value(node).scalar_value() : 0.0;
}

struct ValAccum {
  double weighted = 0;
  long count = 0;
  void add(double loss, long n) {
    weighted += loss * static_cast<double>(n);
    count += n;
  }
  double mean() const { return count > 0 ? weighted / static_cast<double>(count) : 0.0; }
};

}  // namespace

EpochStats validation_loss(const ModelParams& params, const Dataset* source, const Dataset* target,
                           const TrainConfig& cfg) {
  const ModelConfig& mc = params.cfg;
  const std::size_t chunk = 256;
  std::size_t pixels = static_cast<std::size_t>(mc.input_dim);
  EpochStats out;

  ValAccum src_acc, tgt_acc, ci_acc;
  StageOptions opts;
  opts.encoder_grad = false;
  opts.source_heads_grad = false;
  opts.target_heads_grad = false;
  opts.ci_heads_grad = false;
  opts.assoc_grad = false;

  if (mc.use_source && source != nullptr) {
    std::size_t n = source->val.size();
    std::size_t label_width = static_cast<std::size_t>(mc.factor_count());
    for (std::size_t start = 0; start < n; start += chunk) {
      std::size_t stop = std::min(n, start + chunk);
      std::vector<std::size_t> idx(stop - start);
      std::iota(idx.begin(), idx.end(), start);
      Batch b = make_batch(source->val, idx, label_width, pixels);
      Graph g;
      StagedModel staged = stage_model(g, params, opts);
      int x = g.leaf(b.x);
      int z = encode(g, params, staged, x);
      int ls = loss_source(g, predict_source(g, params, staged, z), b.labels);
      src_acc.add(g.value(ls).scalar_value(), static_cast<long>(idx.size()));
      if (cfg.loss.constraint == Constraint::cross_independence && mc.has_ci_heads()) {
        int lci = loss_ci(g, params, staged, z);
        ci_acc.add(g.value(lci).scalar_value(), static_cast<long>(idx.size()));
      }
    }
  }
  if (target != nullptr) {
    std::size_t n = target->val.size();
    for (std::size_t start = 0; start < n; start += chunk) {
      std::size_t stop = std::min(n, start + chunk);
      std::vector<std::size_t> idx(stop - start);
      std::iota(idx.begin(), idx.end(), start);
      Batch b = make_batch(target->val, idx, 2, pixels);
      Graph g;
      StagedModel staged = stage_model(g, params, opts);
      int x = g.leaf(b.x);
      int z = encode(g, params, staged, x);
      int z_attr = -1, z_obj = -1;
      if (mc.representation == Representation::global) {
        z_attr = z_obj = z;
      } else if (mc.association == AssociationKind::manual) {
        int a = g.leaf(AssociationMatrix::manual(mc.factor_count(), mc.attr_factor, mc.obj_factor).values);
        std::tie(z_attr, z_obj) = apply_association(g, params, z, a);
      } else {
        int a_soft = soft_association(g, staged.assoc_logits);
        std::tie(z_attr, z_obj) = apply_association(g, params, z, a_soft);
      }
      auto [la, lo] = predict_target(g, params, staged, z_attr, z_obj);
      int lt = loss_target(g, la, lo, b.labels[0], b.labels[1]);
      tgt_acc.add(g.value(lt).scalar_value(), static_cast<long>(idx.size()));
    }
  }

  out.val_source = src_acc.mean();
  out.val_target = tgt_acc.mean();
  out.val_total = out.val_target + cfg.loss.lambda * out.val_source + cfg.loss.gamma * ci_acc.mean();
  if (mc.association == AssociationKind::learned && cfg.loss.association_reg) {
    AssociationMatrix a = params.association();
    Graph g;
    int an = g.leaf(a.values);
    out.val_total += cfg.loss.alpha * g.value(g.entropy_cols(an)).scalar_value() +
                     cfg.loss.beta * g.value(g.suppress_rows(an, cfg.loss.tau)).scalar_value();
  }
  return out;
}

TrainResult train(ModelParams params, const Dataset* source, const Dataset* target,
                  const TrainConfig& cfg, std::uint64_t seed, const std::string& cell) {
  auto t0 = std::chrono::steady_clock::now();
  const ModelConfig& mc = params.cfg;
  if (mc.use_source && (source == nullptr || source->train.empty())) {
    throw std::invalid_argument("train: configuration uses the source domain but none was given");
  }
  if (!mc.use_source && target == nullptr) {
    throw std::invalid_argument("train: nothing to train on");
  }
  if (target != nullptr && target->train.empty()) {
    throw std::invalid_argument("train: empty target train split");
  }
  bool with_source = mc.use_source && source != nullptr;
  bool with_target = target != nullptr;
  if ((with_source && source->val.empty()) || (with_target && target->val.empty())) {
    throw std::invalid_argument("train: datasets need a validation split");
  }

  std::size_t pixels = static_cast<std::size_t>(mc.input_dim);
  std::size_t src_labels = static_cast<std::size_t>(mc.factor_count());

  TrainResult result{params, params, {}};
  RunRecord& rec = result.record;
  rec.cell = cell;
  rec.seed = seed;

  // Two optimizer states: the adversary heads under the cross-independence
  // constraint get their own, so the two update steps cannot interact.
  std::vector<Tensor*> ptrs = param_pointers(params);
  std::vector<AdamState> main_state, adversary_state;
  for (Tensor* p : ptrs) {
    main_state.push_back(AdamState::init(*p, cfg.optim));
    adversary_state.push_back(AdamState::init(*p, cfg.optim));
  }

  DomainSampler src_sampler, tgt_sampler;
  if (with_source) src_sampler.init(source->train, derive_seed(seed, "shuffle/source"));
  if (with_target) tgt_sampler.init(target->train, derive_seed(seed, "shuffle/target"));

  std::size_t n_src = with_source ? source->train.size() : 0;
  std::size_t n_tgt = with_target ? target->train.size() : 0;
  bool source_defines_epoch = n_src >= n_tgt;
  std::size_t epoch_len = std::max(n_src, n_tgt);
  long steps_per_epoch =
      std::max<long>(1, static_cast<long>(epoch_len) / static_cast<long>(cfg.batch_size));

  StageOptions main_opts;
  main_opts.source_heads_grad = with_source;
  main_opts.ci_heads_grad = false;  // adversary heads move only in their own step
  StageOptions adv_opts;
  adv_opts.encoder_grad = false;
  adv_opts.source_heads_grad = false;
  adv_opts.target_heads_grad = false;
  adv_opts.assoc_grad = false;

  bool use_ci = cfg.loss.constraint == Constraint::cross_independence && mc.has_ci_heads() &&
                with_source;

  double best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (source_defines_epoch && with_source) src_sampler.reshuffle();
    if (!source_defines_epoch && with_target) tgt_sampler.reshuffle();

    EpochStats stats;
    for (long step = 0; step < steps_per_epoch; ++step) {
      Batch src_batch, tgt_batch;
      if (with_source) {
        src_batch = make_batch(source->train, src_sampler.draw(cfg.batch_size), src_labels, pixels);
      }
      if (with_target) {
        tgt_batch = make_batch(target->train, tgt_sampler.draw(cfg.batch_size), 2, pixels);
      }

      if (use_ci) {
        Graph g;
        StagedModel staged = stage_model(g, params, adv_opts);
        int adv_loss = build_ci_adversary_loss(g, params, staged, src_batch);
        GradMap grads = g.backward(adv_loss);
        std::vector<int> ids = staged_param_ids(staged);
        for (std::size_t i = 0; i < ptrs.size(); ++i) {
          if (g.requires_grad(ids[i])) adam_step(*ptrs[i], grads.at(ids[i]), adversary_state[i]);
        }
      }

      Graph g;
      StagedModel staged = stage_model(g, params, main_opts);
      LossGraph loss = build_total_loss(g, params, staged, with_source ? &src_batch : nullptr,
                                        with_target ? &tgt_batch : nullptr, cfg.loss);
      double total = g.value(loss.total).scalar_value();
      if (!std::isfinite(total)) {
        rec.status = "diverged: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                     std::to_string(step);
        rec.epochs.push_back(stats);
        rec.source_consumed = src_sampler.consumed;
        rec.target_consumed = tgt_sampler.consumed;
        result.final = params;
        rec.final_params_digest = params.digest();
        rec.best_params_digest = result.best.digest();
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return result;
      }
      stats.train_total += total;
      stats.train_source += mean_part(g, loss.source);
      stats.train_target += mean_part(g, loss.target);
      stats.train_ci += mean_part(g, loss.ci);

      GradMap grads = g.backward(loss.total);
      std::vector<int> ids = staged_param_ids(staged);
      for (std::size_t i = 0; i < ptrs.size(); ++i) {
        if (g.requires_grad(ids[i])) adam_step(*ptrs[i], grads.at(ids[i]), main_state[i]);
      }
      rec.steps += 1;
    }
    double inv = 1.0 / static_cast<double>(steps_per_epoch);
    stats.train_total *= inv;
    stats.train_source *= inv;
    stats.train_target *= inv;
    stats.train_ci *= inv;

    EpochStats val = validation_loss(params, with_source ? source : nullptr,
                                     with_target ? target : nullptr, cfg);
    stats.val_total = val.val_total;
    stats.val_source = val.val_source;
    stats.val_target = val.val_target;
    rec.epochs.push_back(stats);

    if (stats.val_total < best_val) {
      best_val = stats.val_total;
      rec.best_epoch = epoch;
      result.best = params;
    }
  }

  if (cfg.selection == TrainConfig::Selection::final_epoch || rec.best_epoch < 0) {
    result.best = params;
    rec.best_epoch = static_cast<int>(rec.epochs.size()) - 1;
    best_val = rec.epochs.empty() ? 0.0 : rec.epochs.back().val_total;
  }
  rec.best_val = best_val;
  result.final = params;
  rec.final_params_digest = result.final.digest();
  rec.best_params_digest = result.best.digest();
  rec.source_consumed = src_sampler.consumed;
  rec.target_consumed = tgt_sampler.consumed;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

void save_record(const RunRecord& rec, const std::string& path) {
  json epochs = json::array();
  for (const auto& e : rec.epochs) {
    epochs.push_back(json{{"train_total", e.train_total},
                          {"train_source", e.train_source},
                          {"train_target", e.train_target},
                          {"train_ci", e.train_ci},
                          {"val_total", e.val_total},
                          {"val_source", e.val_source},
                          {"val_target", e.val_target}});
  }
  json j{{"cell", rec.cell},
         {"seed", rec.seed},
         {"epochs", epochs},
         {"best_epoch", rec.best_epoch},
         {"best_val", rec.best_val},
         {"best_params_digest", rec.best_params_digest},
         {"final_params_digest", rec.final_params_digest},
         {"steps", rec.steps},
         {"source_consumed", rec.source_consumed},
         {"target_consumed", rec.target_consumed},
         {"wall_seconds", rec.wall_seconds},
         {"status", rec.status}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("record: cannot write " + path);
  out << j.dump(2) << "\n";
}

std::vector<RunOutcome> run_matrix(const std::vector<RunJob>& jobs, int parallel,
                                   const PostRunFn& post_run) {
  std::vector<RunOutcome> outcomes(jobs.size());
  if (jobs.empty()) return outcomes;

  int workers = std::max(1, std::min<int>(parallel, static_cast<int>(jobs.size())));
  int saved_threads = kernels::max_threads();
  if (workers > 1) kernels::set_max_threads(std::max(1, saved_threads / workers));

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const RunJob& job = jobs[i];
      RunOutcome& out = outcomes[i];
      out.cell = job.cell;
      out.seed = job.seed;
      try {
        ModelParams init = ModelParams::init(job.model, job.seed);
        TrainResult res = train(std::move(init), job.source, job.target, job.train, job.seed,
                                job.cell);
        out.record = res.record;
        out.ok = res.record.status == "ok";
        if (!out.ok) out.error = res.record.status;
        if (!job.out_dir.empty()) {
          fs::create_directories(job.out_dir);
          save_record(res.record, (fs::path(job.out_dir) / "record.json").string());
          std::uint64_t catalog_hash = job.target != nullptr ? job.target->spec.catalog.hash()
                                       : job.source != nullptr ? job.source->spec.catalog.hash()
                                                               : 0;
          save_checkpoint(res.best, (fs::path(job.out_dir) / "model.ckpt").string(), job.seed,
                          catalog_hash);
        }
        if (post_run) post_run(job, res.record, res.best);
      } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
        out.record.status = std::string("error: ") + e.what();
      }
    }
  };

  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  kernels::set_max_threads(saved_threads);
  return outcomes;
}

}  // namespace scl
