#include "shortcutlab/config.hpp"

#include <cstdlib>
#include <stdexcept>

namespace scl {

using nlohmann::json;

json default_dataset_config(const std::string& role) {
  json factors = json::array();
  if (role == "target") {
    factors = json::array({json{{"name", "shape"}, {"classes", 10}},
                           json{{"name", "color"}, {"classes", 10}},
                           json{{"name", "lightness"}, {"classes", 4}},
                           json{{"name", "texture"}, {"classes", 5}},
                           json{{"name", "background"}, {"classes", 3}}});
  } else {
    factors = json::array({json{{"name", "shape"}, {"classes", 50}},
                           json{{"name", "color"}, {"classes", 12}},
                           json{{"name", "lightness"}, {"classes", 4}},
                           json{{"name", "texture"}, {"classes", 5}},
                           json{{"name", "background"}, {"classes", 3}}});
  }
  return json{
      {"role", role},
      {"seed", role == "target" ? 2002 : 1001},
      {"path", nullptr},
      {"catalog", json{{"image_size", 32},
                       {"shape_style_offset", role == "target" ? 50 : 0},
                       {"factors", factors}}},
      {"correlation",
       json{{"mode", role == "target" ? "fully_correlated" : "uncorrelated"},
            {"semi_m", 2},
            {"attribute", "color"},
            {"object", "shape"},
            {"pairing", nullptr},
            {"nuisance", json::object()}}},
      {"sizes", json{{"train", json{{"per_combination", 20}}},
                     {"val", json{{"per_combination", 2}}},
                     {"test", json{{"per_combination", 10}}}}}};
}

json default_study_config() {
  return json{
      {"name", "custom"},
      {"output_dir", "out"},
      {"jobs", 1},
      {"seeds", json::array({0, 1, 2, 3, 4, 5})},
      {"datasets", json::object()},
      {"model", json{{"factor_dim", 64},
                     {"encoder_hidden", 256},
                     {"head_hidden", 64},
                     {"attribute_factor", "color"},
                     {"object_factor", "shape"}}},
      {"train", json{{"epochs", 100},
                     {"batch_size", 64},
                     {"learning_rate", 0.01},
                     {"weight_decay", 5e-5},
                     {"beta1", 0.9},
                     {"beta2", 0.999},
                     {"epsilon", 1e-8},
                     {"selection", "best_val"}}},
      {"loss", json{{"lambda", 10.0},
                    {"gamma", 5.0},
                    {"alpha", 5.0},
                    {"beta", 20.0},
                    {"tau", 0.33}}},
      {"eval", json{{"bias", 0.0},
                    {"bias_sweep", nullptr},
                    {"crosspred", false},
                    {"assoc_heatmap", false},
                    {"probe_seed", 17}}},
      {"cells", json::array()}};
}

namespace {

json default_cell_config() {
  return json{{"name", ""},       {"method", "factor-src-il"},
              {"source", "source"}, {"target", "target"},
              {"model", json::object()}, {"train", json::object()},
              {"loss", json::object()},  {"eval", json::object()}};
}

void merge_into(json& base, const json& user, const std::string& where);

void merge_object(json& base, const json& user, const std::string& where) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (!base.contains(it.key())) {
      throw std::invalid_argument("config: unknown key \"" + where + it.key() + "\"");
    }
    merge_into(base[it.key()], it.value(), where + it.key() + ".");
  }
}

void merge_into(json& base, const json& user, const std::string& where) {
  if (base.is_object() && user.is_object()) {
    merge_object(base, user, where);
  } else {
    base = user;
  }
}

// Sections whose sub-keys are free-form names and need their own handling.
json resolve_dataset(const json& user, const std::string& where) {
  std::string role = "source";
  if (user.contains("role")) role = user.at("role").get<std::string>();
  json base = default_dataset_config(role);
  // catalog.factors and correlation.nuisance replace wholesale below; merge
  // validates the rest.
  json user_copy = user;
  json factors;
  if (user_copy.contains("catalog") && user_copy["catalog"].contains("factors")) {
    factors = user_copy["catalog"]["factors"];
    user_copy["catalog"].erase("factors");
  }
  json nuisance;
  bool has_nuisance = false;
  if (user_copy.contains("correlation") && user_copy["correlation"].contains("nuisance")) {
    nuisance = user_copy["correlation"]["nuisance"];
    has_nuisance = true;
    user_copy["correlation"].erase("nuisance");
  }
  merge_object(base, user_copy, where);
  if (!factors.is_null()) base["catalog"]["factors"] = factors;
  if (has_nuisance) base["correlation"]["nuisance"] = nuisance;
  for (const auto& f : base["catalog"]["factors"]) {
    if (!f.is_object() || !f.contains("name") || !f.contains("classes") || f.size() != 2) {
      throw std::invalid_argument("config: " + where + "catalog.factors entries need exactly "
                                  "{name, classes}");
    }
  }
  return base;
}

}  // namespace

json resolve_study_config(const json& user) {
  if (!user.is_object()) throw std::invalid_argument("config: study document must be an object");
  json base = default_study_config();

  json user_copy = user;
  json datasets = json::object();
  if (user_copy.contains("datasets")) {
    if (!user_copy["datasets"].is_object()) {
      throw std::invalid_argument("config: datasets must be an object");
    }
    for (auto it = user_copy["datasets"].begin(); it != user_copy["datasets"].end(); ++it) {
      datasets[it.key()] = resolve_dataset(it.value(), "datasets." + it.key() + ".");
    }
    user_copy.erase("datasets");
  }
  json cells = json::array();
  if (user_copy.contains("cells")) {
    if (!user_copy["cells"].is_array()) {
      throw std::invalid_argument("config: cells must be an array");
    }
    for (const auto& c : user_copy["cells"]) {
      json cell = default_cell_config();
      merge_object(cell, c, "cells[].");
      if (cell["name"].get<std::string>().empty()) cell["name"] = cell["method"];
      cells.push_back(cell);
    }
    user_copy.erase("cells");
  }
  merge_object(base, user_copy, "");
  base["datasets"] = datasets;
  base["cells"] = cells;

  if (const char* env = std::getenv("SHORTCUTLAB_SEED")) {
    base["seeds"] = json::array({std::stoull(env)});
  }
  return base;
}

DatasetSpec dataset_spec_from_json(const json& ds) {
  DatasetSpec spec;
  spec.role = ds.at("role").get<std::string>() == "target" ? DatasetRole::target
                                                           : DatasetRole::source;
  spec.seed = ds.at("seed").get<std::uint64_t>();
  const json& cat = ds.at("catalog");
  spec.catalog.image_h = spec.catalog.image_w = cat.at("image_size").get<int>();
  spec.catalog.shape_style_offset = cat.at("shape_style_offset").get<int>();
  for (const auto& f : cat.at("factors")) {
    spec.catalog.factors.push_back(
        {f.at("name").get<std::string>(), f.at("classes").get<int>()});
  }

  const json& corr = ds.at("correlation");
  std::string mode = corr.at("mode").get<std::string>();
  if (mode == "uncorrelated") spec.correlation.mode = CorrelationMode::uncorrelated;
  else if (mode == "fully_correlated") spec.correlation.mode = CorrelationMode::fully_correlated;
  else if (mode == "semi_correlated") spec.correlation.mode = CorrelationMode::semi_correlated;
  else throw std::invalid_argument("config: unknown correlation mode " + mode);
  spec.correlation.semi_m = corr.at("semi_m").get<int>();
  spec.correlation.attribute_factor =
      spec.catalog.index_of(corr.at("attribute").get<std::string>());
  spec.correlation.object_factor = spec.catalog.index_of(corr.at("object").get<std::string>());
  if (spec.correlation.attribute_factor < 0 || spec.correlation.object_factor < 0) {
    throw std::invalid_argument("config: correlation attribute/object not in catalog factors");
  }
  if (!corr.at("pairing").is_null()) {
    spec.correlation.pairing = corr.at("pairing").get<std::vector<int>>();
  }
  spec.correlation.nuisance.assign(static_cast<std::size_t>(spec.catalog.factor_count()), {});
  for (auto it = corr.at("nuisance").begin(); it != corr.at("nuisance").end(); ++it) {
    int idx = spec.catalog.index_of(it.key());
    if (idx < 0) {
      throw std::invalid_argument("config: nuisance factor \"" + it.key() + "\" not in catalog");
    }
    NuisancePolicy p;
    if (it.value().is_string() && it.value().get<std::string>() == "uniform") {
      p.uniform = true;
    } else if (it.value().is_object() && it.value().contains("fixed")) {
      p.uniform = false;
      p.fixed_class = it.value().at("fixed").get<int>();
    } else {
      throw std::invalid_argument("config: nuisance policy must be \"uniform\" or {\"fixed\": c}");
    }
    spec.correlation.nuisance[static_cast<std::size_t>(idx)] = p;
  }

  auto split_of = [&](const char* name) {
    const json& s = ds.at("sizes").at(name);
    SplitRequest req;
    if (s.contains("per_combination")) req.per_combination = s.at("per_combination").get<long>();
    if (s.contains("total")) req.total = s.at("total").get<long>();
    return req;
  };
  spec.sizes.train = split_of("train");
  spec.sizes.val = split_of("val");
  spec.sizes.test = split_of("test");
  return spec;
}

json dataset_spec_to_json(const DatasetSpec& spec, const std::string& path) {
  json factors = json::array();
  for (const auto& f : spec.catalog.factors) {
    factors.push_back(json{{"name", f.name}, {"classes", f.classes}});
  }
  json nuisance = json::object();
  for (std::size_t i = 0; i < spec.correlation.nuisance.size(); ++i) {
    const NuisancePolicy& p = spec.correlation.nuisance[i];
    const std::string& name = spec.catalog.factors[i].name;
    if (p.uniform) nuisance[name] = "uniform";
    else nuisance[name] = json{{"fixed", p.fixed_class}};
  }
  const char* mode = spec.correlation.mode == CorrelationMode::uncorrelated ? "uncorrelated"
                     : spec.correlation.mode == CorrelationMode::fully_correlated
                         ? "fully_correlated"
                         : "semi_correlated";
  auto split_json = [](const SplitRequest& r) {
    return r.per_combination >= 0 ? json{{"per_combination", r.per_combination}}
                                  : json{{"total", r.total}};
  };
  return json{
      {"role", spec.role == DatasetRole::target ? "target" : "source"},
      {"seed", spec.seed},
      {"path", path.empty() ? json(nullptr) : json(path)},
      {"catalog", json{{"image_size", spec.catalog.image_h},
                       {"shape_style_offset", spec.catalog.shape_style_offset},
                       {"factors", factors}}},
      {"correlation",
       json{{"mode", mode},
            {"semi_m", spec.correlation.semi_m},
            {"attribute", spec.catalog.factors[static_cast<std::size_t>(
                                                   spec.correlation.attribute_factor)].name},
            {"object", spec.catalog.factors[static_cast<std::size_t>(
                                                spec.correlation.object_factor)].name},
            {"pairing",
             spec.correlation.pairing.empty() ? json(nullptr) : json(spec.correlation.pairing)},
            {"nuisance", nuisance}}},
      {"sizes", json{{"train", split_json(spec.sizes.train)},
                     {"val", split_json(spec.sizes.val)},
                     {"test", split_json(spec.sizes.test)}}}};
}

MethodFlags method_flags(const std::string& method) {
  MethodFlags f;
  if (method == "global-0") {
    f.representation = Representation::global;
    f.use_source = false;
  } else if (method == "global-src") {
    f.representation = Representation::global;
  } else if (method == "global-src-il") {
    f.representation = Representation::global;
    f.constraint = Constraint::isolated_latent;
  } else if (method == "factor-0") {
    f.use_source = false;
  } else if (method == "factor-src") {
    // defaults
  } else if (method == "factor-src-ci") {
    f.constraint = Constraint::cross_independence;
  } else if (method == "factor-src-il") {
    f.constraint = Constraint::isolated_latent;
  } else if (method == "factor-src-il-la") {
    f.constraint = Constraint::isolated_latent;
    f.association = AssociationKind::learned;
  } else if (method == "factor-src-il-laR") {
    f.constraint = Constraint::isolated_latent;
    f.association = AssociationKind::learned;
    f.association_reg = true;
  } else {
    throw std::invalid_argument("unknown method \"" + method + "\"");
  }
  return f;
}

std::vector<std::string> known_methods() {
  return {"global-0",      "global-src",       "global-src-il",
          "factor-0",      "factor-src",       "factor-src-ci",
          "factor-src-il", "factor-src-il-la", "factor-src-il-laR"};
}

std::vector<double> parse_bias_grid(const std::string& text) {
  double lo = 0, hi = 0;
  int steps = 0;
  if (std::sscanf(text.c_str(), "%lf:%lf:%d", &lo, &hi, &steps) != 3 || steps < 1) {
    throw std::invalid_argument("bias grid must be lo:hi:steps, got \"" + text + "\"");
  }
  std::vector<double> grid;
  for (int i = 0; i < steps; ++i) {
    grid.push_back(steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) /
                                              static_cast<double>(steps - 1));
  }
  return grid;
}

namespace {

TrainConfig train_config_from(const json& study_train, const json& study_loss,
                              const json& cell_train, const json& cell_loss,
                              const MethodFlags& flags) {
  json t = study_train;
  for (auto it = cell_train.begin(); it != cell_train.end(); ++it) {
    if (!t.contains(it.key())) {
      throw std::invalid_argument("config: unknown train key \"" + it.key() + "\"");
    }
    t[it.key()] = it.value();
  }
  json l = study_loss;
  for (auto it = cell_loss.begin(); it != cell_loss.end(); ++it) {
    if (!l.contains(it.key())) {
      throw std::invalid_argument("config: unknown loss key \"" + it.key() + "\"");
    }
    l[it.key()] = it.value();
  }
  TrainConfig cfg;
  cfg.epochs = t.at("epochs").get<int>();
  cfg.batch_size = t.at("batch_size").get<int>();
  cfg.optim.learning_rate = t.at("learning_rate").get<double>();
  cfg.optim.weight_decay = t.at("weight_decay").get<double>();
  cfg.optim.beta1 = t.at("beta1").get<double>();
  cfg.optim.beta2 = t.at("beta2").get<double>();
  cfg.optim.epsilon = t.at("epsilon").get<double>();
  cfg.selection = t.at("selection").get<std::string>() == "final_epoch"
                      ? TrainConfig::Selection::final_epoch
                      : TrainConfig::Selection::best_val;
  cfg.loss.lambda = l.at("lambda").get<double>();
  cfg.loss.gamma = l.at("gamma").get<double>();
  cfg.loss.alpha = l.at("alpha").get<double>();
  cfg.loss.beta = l.at("beta").get<double>();
  cfg.loss.tau = l.at("tau").get<double>();
  cfg.loss.constraint = flags.constraint;
  cfg.loss.association_reg = flags.association_reg;
  return cfg;
}

EvalOptions eval_options_from(const json& study_eval, const json& cell_eval) {
  json e = study_eval;
  for (auto it = cell_eval.begin(); it != cell_eval.end(); ++it) {
    if (!e.contains(it.key())) {
      throw std::invalid_argument("config: unknown eval key \"" + it.key() + "\"");
    }
    e[it.key()] = it.value();
  }
  EvalOptions opts;
  opts.bias = e.at("bias").get<double>();
  if (!e.at("bias_sweep").is_null()) {
    opts.bias_grid = parse_bias_grid(e.at("bias_sweep").get<std::string>());
  }
  opts.cross_pred = e.at("crosspred").get<bool>();
  opts.probe_seed = e.at("probe_seed").get<std::uint64_t>();
  return opts;
}

}  // namespace

ResolvedStudy build_study(const json& resolved) {
  ResolvedStudy study;
  study.document = resolved;
  study.name = resolved.at("name").get<std::string>();
  study.output_dir = resolved.at("output_dir").get<std::string>();
  study.jobs = resolved.at("jobs").get<int>();
  for (const auto& s : resolved.at("seeds")) study.seeds.push_back(s.get<std::uint64_t>());

  for (auto it = resolved.at("datasets").begin(); it != resolved.at("datasets").end(); ++it) {
    study.datasets.emplace_back(it.key(), dataset_spec_from_json(it.value()));
  }
  auto spec_of = [&](const std::string& key) -> const DatasetSpec* {
    for (const auto& [k, spec] : study.datasets) {
      if (k == key) return &spec;
    }
    return nullptr;
  };

  const json& study_model = resolved.at("model");
  for (const auto& cell_json : resolved.at("cells")) {
    ResolvedCell cell;
    cell.name = cell_json.at("name").get<std::string>();
    cell.method = cell_json.at("method").get<std::string>();
    MethodFlags flags = method_flags(cell.method);

    json m = study_model;
    for (auto it = cell_json.at("model").begin(); it != cell_json.at("model").end(); ++it) {
      if (!m.contains(it.key())) {
        throw std::invalid_argument("config: unknown model key \"" + it.key() + "\"");
      }
      m[it.key()] = it.value();
    }

    cell.source_key = flags.use_source && !cell_json.at("source").is_null()
                          ? cell_json.at("source").get<std::string>()
                          : "";
    cell.target_key =
        cell_json.at("target").is_null() ? "" : cell_json.at("target").get<std::string>();
    if (flags.use_source && cell.source_key.empty()) {
      throw std::invalid_argument("config: cell " + cell.name + " uses a source but names none");
    }
    const DatasetSpec* src = cell.source_key.empty() ? nullptr : spec_of(cell.source_key);
    const DatasetSpec* tgt = cell.target_key.empty() ? nullptr : spec_of(cell.target_key);
    if (!cell.source_key.empty() && src == nullptr) {
      throw std::invalid_argument("config: cell " + cell.name + " references unknown dataset \"" +
                                  cell.source_key + "\"");
    }
    if (!cell.target_key.empty() && tgt == nullptr) {
      throw std::invalid_argument("config: cell " + cell.name + " references unknown dataset \"" +
                                  cell.target_key + "\"");
    }
    if (tgt == nullptr && src == nullptr) {
      throw std::invalid_argument("config: cell " + cell.name + " has no datasets");
    }

    ModelConfig& mc = cell.model;
    mc.representation = flags.representation;
    mc.constraint = flags.constraint;
    mc.association = flags.association;
    mc.use_source = flags.use_source && src != nullptr;
    mc.factor_dim = m.at("factor_dim").get<int>();
    mc.encoder_hidden = m.at("encoder_hidden").get<int>();
    mc.head_hidden = m.at("head_hidden").get<int>();

    // The factor template comes from the source catalog when present.
    const FactorCatalog& factor_template = src != nullptr ? src->catalog : tgt->catalog;
    mc.source_class_counts.clear();
    for (const auto& f : factor_template.factors) mc.source_class_counts.push_back(f.classes);
    mc.input_dim = factor_template.pixel_count();
    if (tgt != nullptr && tgt->catalog.pixel_count() != mc.input_dim) {
      throw std::invalid_argument("config: cell " + cell.name +
                                  ": source and target image sizes differ");
    }

    // The manual association is a priori knowledge: which factor blocks the
    // target attribute/object heads read. Defaults to color/shape; the
    // association sweep overrides it per cell.
    std::string attr_name = m.at("attribute_factor").get<std::string>();
    std::string obj_name = m.at("object_factor").get<std::string>();
    if (tgt != nullptr) {
      mc.attr_classes = tgt->catalog.classes_of(tgt->correlation.attribute_factor);
      mc.obj_classes = tgt->catalog.classes_of(tgt->correlation.object_factor);
    }
    mc.attr_factor = factor_template.index_of(attr_name);
    mc.obj_factor = factor_template.index_of(obj_name);
    if (mc.attr_factor < 0 || mc.obj_factor < 0) {
      throw std::invalid_argument("config: cell " + cell.name + ": association factors \"" +
                                  attr_name + "\"/\"" + obj_name +
                                  "\" not present in the factor template");
    }

    cell.train = train_config_from(resolved.at("train"), resolved.at("loss"),
                                   cell_json.at("train"), cell_json.at("loss"), flags);
    cell.eval = eval_options_from(resolved.at("eval"), cell_json.at("eval"));
    study.cells.push_back(std::move(cell));
  }
  return study;
}

}  // namespace scl
