#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "shortcutlab/adam.hpp"
#include "shortcutlab/datagen.hpp"
#include "shortcutlab/model.hpp"
#include "shortcutlab/objectives.hpp"

namespace scl {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;  // per domain
  AdamHyper optim;
  LossConfig loss;
  enum class Selection { best_val, final_epoch } selection = Selection::best_val;
};

struct EpochStats {
  double train_total = 0, train_source = 0, train_target = 0, train_ci = 0;
  double val_total = 0, val_source = 0, val_target = 0;
};

struct RunRecord {
  std::string cell;
  std::uint64_t seed = 0;
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val = 0;
  std::uint64_t best_params_digest = 0, final_params_digest = 0;
  long steps = 0;
  long source_consumed = 0, target_consumed = 0;  // equal-sampling audit counters
  double wall_seconds = 0;
  std::string status = "ok";
};

struct TrainResult {
  ModelParams best;   // parameters from the epoch with the lowest validation loss
  ModelParams final;  // parameters after the last step
  RunRecord record;
};

/// Pixel rows + labels for the given sample indices.
Batch make_batch(const std::vector<LabeledImage>& samples, const std::vector<std::size_t>& indices,
                 std::size_t label_width, std::size_t pixel_count);

/// Joint minibatch training. Every step consumes batch_size samples from each
/// present domain; the larger domain defines the epoch and the smaller one is
/// reshuffled and cycled. Under the cross-independence constraint each step
/// first updates the adversary heads on the source batch, then the rest of the
/// network. Non-finite losses abort the run with status "diverged...".
/// `source` may be null only when the model ignores the source domain;
/// `target` may be null for source-only diagnostics.
TrainResult train(ModelParams params, const Dataset* source, const Dataset* target,
                  const TrainConfig& cfg, std::uint64_t seed, const std::string& cell = "");

/// Validation loss parts on the val splits, same composition as training.
EpochStats validation_loss(const ModelParams& params, const Dataset* source,
                           const Dataset* target, const TrainConfig& cfg);

struct RunJob {
  std::string cell;
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainConfig train;
  const Dataset* source = nullptr;
  const Dataset* target = nullptr;
  std::string out_dir;  // when set: record.json + model.ckpt land here
};

struct RunOutcome {
  std::string cell;
  std::uint64_t seed = 0;
  RunRecord record;
  bool ok = false;
  std::string error;
};

using PostRunFn =
    std::function<void(const RunJob&, const RunRecord&, const ModelParams& best)>;

/// Executes every job; failures are recorded and the rest proceed. Results
/// come back in job order regardless of scheduling. `parallel` > 1 runs jobs
/// on worker threads (each job is single-run deterministic, so scheduling
/// cannot change any result) and drops the kernel thread cap to compensate.
std::vector<RunOutcome> run_matrix(const std::vector<RunJob>& jobs, int parallel,
                                   const PostRunFn& post_run = nullptr);

void save_record(const RunRecord& record, const std::string& path);

}  // namespace scl
