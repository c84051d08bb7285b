#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shortcutlab/datagen.hpp"
#include "shortcutlab/eval.hpp"
#include "shortcutlab/model.hpp"
#include "shortcutlab/trainer.hpp"

namespace scl {

/// Default study document: every recognized key with its pinned default.
nlohmann::json default_study_config();
nlohmann::json default_dataset_config(const std::string& role);

/// Overlay `user` on the defaults. Objects merge recursively, scalars and
/// arrays replace, and any key that the defaults do not know is rejected.
/// Resolving an already resolved document is the identity.
nlohmann::json resolve_study_config(const nlohmann::json& user);

/// Typed views over a resolved document.
DatasetSpec dataset_spec_from_json(const nlohmann::json& ds);
nlohmann::json dataset_spec_to_json(const DatasetSpec& spec, const std::string& path = "");

struct MethodFlags {
  Representation representation = Representation::factor;
  Constraint constraint = Constraint::none;
  AssociationKind association = AssociationKind::manual;
  bool use_source = true;
  bool association_reg = false;
};

/// Method naming used across reports: global-0, global-src, global-src-il,
/// factor-0, factor-src, factor-src-ci, factor-src-il, factor-src-il-la,
/// factor-src-il-laR.
MethodFlags method_flags(const std::string& method);
std::vector<std::string> known_methods();

struct ResolvedCell {
  std::string name;
  std::string method;
  std::string source_key;  // empty = no source dataset
  std::string target_key;  // empty = no target dataset
  ModelConfig model;
  TrainConfig train;
  EvalOptions eval;
};

struct ResolvedStudy {
  std::string name;
  std::string output_dir;
  int jobs = 1;
  std::vector<std::uint64_t> seeds;
  std::vector<std::pair<std::string, DatasetSpec>> datasets;  // declaration order
  std::vector<ResolvedCell> cells;
  nlohmann::json document;  // the resolved JSON this was built from
};

/// Expands a resolved document into concrete per-cell configurations. Factor
/// order and the attribute/object factor names are reconciled between the
/// source and target catalogs here.
ResolvedStudy build_study(const nlohmann::json& resolved);

/// Parses "lo:hi:steps" into an inclusive grid.
std::vector<double> parse_bias_grid(const std::string& text);

}  // namespace scl
