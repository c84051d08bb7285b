#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "shortcutlab/graph.hpp"
#include "shortcutlab/tensor.hpp"

namespace scl {

enum class Representation { factor, global };
enum class Constraint { none, isolated_latent, cross_independence };
enum class AssociationKind { manual, learned };

const char* to_string(Representation r);
const char* to_string(Constraint c);
const char* to_string(AssociationKind a);
Representation representation_from_string(const std::string& s);
Constraint constraint_from_string(const std::string& s);
AssociationKind association_from_string(const std::string& s);

struct ModelConfig {
  Representation representation = Representation::factor;
  Constraint constraint = Constraint::none;
  AssociationKind association = AssociationKind::manual;
  bool use_source = true;

  int input_dim = 32 * 32 * 3;
  int factor_dim = 64;
  int encoder_hidden = 256;
  int head_hidden = 64;

  std::vector<int> source_class_counts = {50, 12, 4, 5, 3};
  int attr_classes = 10;
  int obj_classes = 10;
  int attr_factor = 1;  // color
  int obj_factor = 0;   // shape

  int factor_count() const { return static_cast<int>(source_class_counts.size()); }
  int representation_width() const { return factor_count() * factor_dim; }
  bool has_ci_heads() const {
    return constraint == Constraint::cross_independence &&
           representation == Representation::factor && factor_count() > 1;
  }
  /// Width each head reads: one factor block, or the whole vector in global mode.
  int head_input_width() const {
    return representation == Representation::factor ? factor_dim : representation_width();
  }
};

/// Stack of affine layers with relu between them (none after the last).
struct Mlp {
  std::vector<Tensor> weights;  // each (out x in)
  std::vector<Tensor> biases;
};

/// K x 2 mixing matrix from factor blocks to (attribute, object) blocks.
/// Binary matrices select single factors; soft ones are column-stochastic.
struct AssociationMatrix {
  enum class Kind { binary, soft };
  Kind kind = Kind::binary;
  Tensor values;  // K x 2

  static AssociationMatrix manual(int factor_count, int attr_factor, int obj_factor);
  /// Column entropies (natural log), one per column.
  std::vector<double> column_entropies() const;
  /// Row index of the largest entry per column.
  std::vector<int> column_argmax() const;
};

struct ModelParams {
  ModelConfig cfg;
  Mlp encoder;                    // input -> hidden -> hidden -> K*D
  std::vector<Mlp> source_heads;  // one per factor
  Mlp attr_head, obj_head;
  std::vector<Mlp> ci_heads;      // ordered pairs (k1, k2), k1 != k2
  Tensor assoc_logits;            // K x 2, learned association only

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

  int ci_head_index(int k1, int k2) const;
  AssociationMatrix association() const;

  /// Stable declared order over every parameter tensor; shared by the
  /// optimizer, checkpoints, digests and the gradient checks.
  void for_each_param(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each_param(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  std::uint64_t digest() const;
};

/// Node ids of staged parameters plus which groups were staged with gradients.
struct StagedModel {
  std::vector<int> encoder_w, encoder_b;
  std::vector<std::vector<int>> source_head_w, source_head_b;
  std::vector<int> attr_w, attr_b, obj_w, obj_b;
  std::vector<std::vector<int>> ci_head_w, ci_head_b;
  int assoc_logits = -1;
};

struct StageOptions {
  bool encoder_grad = true;
  bool source_heads_grad = true;
  bool target_heads_grad = true;
  bool ci_heads_grad = true;
  bool assoc_grad = true;
};

StagedModel stage_model(Graph& g, const ModelParams& params, const StageOptions& opts = {});

/// Forward through one staged MLP; relu between layers.
int mlp_forward(Graph& g, const std::vector<int>& w, const std::vector<int>& b, int x);

/// Encoder output: (B x K*D) in factor mode; the same width in global mode,
/// treated as a single block downstream.
int encode(Graph& g, const ModelParams& params, const StagedModel& staged, int x);

/// Per-factor source logits. Factor mode reads block k only; global mode feeds
/// every head the full vector.
std::vector<int> predict_source(Graph& g, const ModelParams& params, const StagedModel& staged,
                                int z);

/// (z_attr, z_obj) = Z * A for an association matrix staged at node `assoc`.
std::pair<int, int> apply_association(Graph& g, const ModelParams& params, int z, int assoc);

/// Attribute and object logits from their representation blocks.
std::pair<int, int> predict_target(Graph& g, const ModelParams& params, const StagedModel& staged,
                                   int z_attr, int z_obj);

/// Column-wise softmax of the staged association logits.
int soft_association(Graph& g, int assoc_logits);

// Checkpoint file: JSON header, then raw little-endian float64 blocks in
// declared parameter order. The header carries an FNV digest of the blocks.
void save_checkpoint(const ModelParams& params, const std::string& path, std::uint64_t seed,
                     std::uint64_t catalog_hash);
ModelParams load_checkpoint(const std::string& path);

}  // namespace scl
