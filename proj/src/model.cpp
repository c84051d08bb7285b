#include "shortcutlab/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "shortcutlab/rng.hpp"

namespace scl {

using nlohmann::json;

const char* to_string(Representation r) {
  return r == Representation::factor ? "factor" : "global";
}
const char* to_string(Constraint c) {
  switch (c) {
    case Constraint::none: return "none";
    case Constraint::isolated_latent: return "il";
    case Constraint::cross_independence: return "ci";
  }
  return "?";
}
const char* to_string(AssociationKind a) {
  return a == AssociationKind::manual ? "manual" : "learned";
}

Representation representation_from_string(const std::string& s) {
  if (s == "factor") return Representation::factor;
  if (s == "global") return Representation::global;
  throw std::invalid_argument("unknown representation: " + s);
}
Constraint constraint_from_string(const std::string& s) {
  if (s == "none") return Constraint::none;
  if (s == "il") return Constraint::isolated_latent;
  if (s == "ci") return Constraint::cross_independence;
  throw std::invalid_argument("unknown constraint: " + s);
}
AssociationKind association_from_string(const std::string& s) {
  if (s == "manual") return AssociationKind::manual;
  if (s == "learned") return AssociationKind::learned;
  throw std::invalid_argument("unknown association: " + s);
}

AssociationMatrix AssociationMatrix::manual(int factor_count, int attr_factor, int obj_factor) {
  AssociationMatrix a;
  a.kind = Kind::binary;
  a.values = Tensor::zeros({static_cast<std::size_t>(factor_count), 2});
  a.values.at(static_cast<std::size_t>(attr_factor), 0) = 1.0;
  a.values.at(static_cast<std::size_t>(obj_factor), 1) = 1.0;
  return a;
}

std::vector<double> AssociationMatrix::column_entropies() const {
  std::vector<double> out(values.cols(), 0.0);
  for (std::size_t j = 0; j < values.cols(); ++j) {
    for (std::size_t i = 0; i < values.rows(); ++i) {
      double v = values.at(i, j);
      if (v > 0.0) out[j] -= v * std::log(v);
    }
  }
  return out;
}

std::vector<int> AssociationMatrix::column_argmax() const {
  std::vector<int> out(values.cols(), 0);
  for (std::size_t j = 0; j < values.cols(); ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.rows(); ++i) {
      if (values.at(i, j) > values.at(best, j)) best = i;
    }
    out[j] = static_cast<int>(best);
  }
  return out;
}

namespace {

Tensor kaiming_uniform(std::size_t n_out, std::size_t n_in, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(n_in));
  Tensor w = Tensor::zeros({n_out, n_in});
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  return w;
}

Mlp make_mlp(const std::vector<int>& dims, Rng& rng) {
  Mlp m;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    m.weights.push_back(kaiming_uniform(static_cast<std::size_t>(dims[l + 1]),
                                        static_cast<std::size_t>(dims[l]), rng));
    m.biases.push_back(Tensor::zeros({static_cast<std::size_t>(dims[l + 1])}));
  }
  return m;
}

void mlp_params(Mlp& m, const std::string& prefix,
                const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    fn(prefix + ".w" + std::to_string(l), m.weights[l]);
    fn(prefix + ".b" + std::to_string(l), m.biases[l]);
  }
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.factor_count() < 1) throw std::invalid_argument("model: needs at least one factor");
  if (cfg.attr_factor < 0 || cfg.attr_factor >= cfg.factor_count() || cfg.obj_factor < 0 ||
      cfg.obj_factor >= cfg.factor_count()) {
    throw std::invalid_argument("model: association factor index out of range");
  }
  Rng rng(derive_seed(seed, "model-init"));
  ModelParams p;
  p.cfg = cfg;
  int rep = cfg.representation_width();
  p.encoder = make_mlp({cfg.input_dim, cfg.encoder_hidden, cfg.encoder_hidden, rep}, rng);
  int head_in = cfg.head_input_width();
  for (int k = 0; k < cfg.factor_count(); ++k) {
    p.source_heads.push_back(make_mlp({head_in, cfg.head_hidden, cfg.source_class_counts[k]}, rng));
  }
  p.attr_head = make_mlp({head_in, cfg.head_hidden, cfg.attr_classes}, rng);
  p.obj_head = make_mlp({head_in, cfg.head_hidden, cfg.obj_classes}, rng);
  if (cfg.has_ci_heads()) {
    for (int k1 = 0; k1 < cfg.factor_count(); ++k1) {
      for (int k2 = 0; k2 < cfg.factor_count(); ++k2) {
        if (k1 == k2) continue;
        p.ci_heads.push_back(
            make_mlp({cfg.factor_dim, cfg.head_hidden, cfg.source_class_counts[k2]}, rng));
      }
    }
  }
  if (cfg.association == AssociationKind::learned) {
    // Zero logits give a uniform starting association.
    p.assoc_logits = Tensor::zeros({static_cast<std::size_t>(cfg.factor_count()), 2});
  }
  return p;
}

int ModelParams::ci_head_index(int k1, int k2) const {
  int k = cfg.factor_count();
  if (k1 == k2 || k1 < 0 || k2 < 0 || k1 >= k || k2 >= k) {
    throw std::invalid_argument("ci_head_index: bad pair (" + std::to_string(k1) + ", " +
                                std::to_string(k2) + ")");
  }
  return k1 * (k - 1) + (k2 < k1 ? k2 : k2 - 1);
}

AssociationMatrix ModelParams::association() const {
  if (cfg.association == AssociationKind::manual) {
    return AssociationMatrix::manual(cfg.factor_count(), cfg.attr_factor, cfg.obj_factor);
  }
  AssociationMatrix a;
  a.kind = AssociationMatrix::Kind::soft;
  Graph g;
  int logits = g.leaf(assoc_logits);
  a.values = g.value(g.softmax_cols(logits));
  return a;
}

void ModelParams::for_each_param(const std::function<void(const std::string&, Tensor&)>& fn) {
  mlp_params(encoder, "encoder", fn);
  for (std::size_t k = 0; k < source_heads.size(); ++k) {
    mlp_params(source_heads[k], "src_head" + std::to_string(k), fn);
  }
  mlp_params(attr_head, "attr_head", fn);
  mlp_params(obj_head, "obj_head", fn);
  for (std::size_t i = 0; i < ci_heads.size(); ++i) {
    mlp_params(ci_heads[i], "ci_head" + std::to_string(i), fn);
  }
  if (!assoc_logits.empty()) fn("assoc_logits", assoc_logits);
}

void ModelParams::for_each_param(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  auto* self = const_cast<ModelParams*>(this);
  self->for_each_param(
      [&](const std::string& name, Tensor& t) { fn(name, static_cast<const Tensor&>(t)); });
}

std::uint64_t ModelParams::digest() const {
  std::uint64_t h = kFnvOffsetBasis;
  for_each_param([&](const std::string& name, const Tensor& t) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(t.data.data(), t.data.size() * sizeof(double), h);
  });
  return h;
}

namespace {
void stage_mlp(Graph& g, const Mlp& m, bool grad, std::vector<int>& w_out,
               std::vector<int>& b_out) {
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    w_out.push_back(g.leaf(m.weights[l], grad));
    b_out.push_back(g.leaf(m.biases[l], grad));
  }
}
}  // namespace

StagedModel stage_model(Graph& g, const ModelParams& params, const StageOptions& opts) {
  StagedModel s;
  stage_mlp(g, params.encoder, opts.encoder_grad, s.encoder_w, s.encoder_b);
  s.source_head_w.resize(params.source_heads.size());
  s.source_head_b.resize(params.source_heads.size());
  for (std::size_t k = 0; k < params.source_heads.size(); ++k) {
    stage_mlp(g, params.source_heads[k], opts.source_heads_grad, s.source_head_w[k],
              s.source_head_b[k]);
  }
  stage_mlp(g, params.attr_head, opts.target_heads_grad, s.attr_w, s.attr_b);
  stage_mlp(g, params.obj_head, opts.target_heads_grad, s.obj_w, s.obj_b);
  s.ci_head_w.resize(params.ci_heads.size());
  s.ci_head_b.resize(params.ci_heads.size());
  for (std::size_t i = 0; i < params.ci_heads.size(); ++i) {
    stage_mlp(g, params.ci_heads[i], opts.ci_heads_grad, s.ci_head_w[i], s.ci_head_b[i]);
  }
  if (!params.assoc_logits.empty()) {
    s.assoc_logits = g.leaf(params.assoc_logits, opts.assoc_grad);
  }
  return s;
}

int mlp_forward(Graph& g, const std::vector<int>& w, const std::vector<int>& b, int x) {
  int h = x;
  for (std::size_t l = 0; l < w.size(); ++l) {
    h = g.affine(h, w[l], b[l]);
    if (l + 1 < w.size()) h = g.relu(h);
  }
  return h;
}

int encode(Graph& g, const ModelParams& params, const StagedModel& staged, int x) {
  return mlp_forward(g, staged.encoder_w, staged.encoder_b, x);
}

std::vector<int> predict_source(Graph& g, const ModelParams& params, const StagedModel& staged,
                                int z) {
  std::vector<int> out;
  int k_count = params.cfg.factor_count();
  for (int k = 0; k < k_count; ++k) {
    int input = z;
    if (params.cfg.representation == Representation::factor) {
      input = g.slice_cols(z, static_cast<std::size_t>(k) * params.cfg.factor_dim,
                           params.cfg.factor_dim);
    }
    out.push_back(mlp_forward(g, staged.source_head_w[static_cast<std::size_t>(k)],
                              staged.source_head_b[static_cast<std::size_t>(k)], input));
  }
  return out;
}

std::pair<int, int> apply_association(Graph& g, const ModelParams& params, int z, int assoc) {
  int mixed = g.factor_mix(z, assoc, static_cast<std::size_t>(params.cfg.factor_count()),
                           static_cast<std::size_t>(params.cfg.factor_dim));
  int z_attr = g.slice_cols(mixed, 0, static_cast<std::size_t>(params.cfg.factor_dim));
  int z_obj = g.slice_cols(mixed, static_cast<std::size_t>(params.cfg.factor_dim),
                           static_cast<std::size_t>(params.cfg.factor_dim));
  return {z_attr, z_obj};
}

std::pair<int, int> predict_target(Graph& g, const ModelParams& params, const StagedModel& staged,
                                   int z_attr, int z_obj) {
  int attr = mlp_forward(g, staged.attr_w, staged.attr_b, z_attr);
  int obj = mlp_forward(g, staged.obj_w, staged.obj_b, z_obj);
  return {attr, obj};
}

int soft_association(Graph& g, int assoc_logits) { return g.softmax_cols(assoc_logits); }

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
json config_to_json(const ModelConfig& c) {
  return json{{"representation", to_string(c.representation)},
              {"constraint", to_string(c.constraint)},
              {"association", to_string(c.association)},
              {"use_source", c.use_source},
              {"input_dim", c.input_dim},
              {"factor_dim", c.factor_dim},
              {"encoder_hidden", c.encoder_hidden},
              {"head_hidden", c.head_hidden},
              {"source_class_counts", c.source_class_counts},
              {"attr_classes", c.attr_classes},
              {"obj_classes", c.obj_classes},
              {"attr_factor", c.attr_factor},
              {"obj_factor", c.obj_factor}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.representation = representation_from_string(j.at("representation").get<std::string>());
  c.constraint = constraint_from_string(j.at("constraint").get<std::string>());
  c.association = association_from_string(j.at("association").get<std::string>());
  c.use_source = j.at("use_source").get<bool>();
  c.input_dim = j.at("input_dim").get<int>();
  c.factor_dim = j.at("factor_dim").get<int>();
  c.encoder_hidden = j.at("encoder_hidden").get<int>();
  c.head_hidden = j.at("head_hidden").get<int>();
  c.source_class_counts = j.at("source_class_counts").get<std::vector<int>>();
  c.attr_classes = j.at("attr_classes").get<int>();
  c.obj_classes = j.at("obj_classes").get<int>();
  c.attr_factor = j.at("attr_factor").get<int>();
  c.obj_factor = j.at("obj_factor").get<int>();
  return c;
}
}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path, std::uint64_t seed,
                     std::uint64_t catalog_hash) {
  std::uint64_t blob_hash = kFnvOffsetBasis;
  std::size_t blob_doubles = 0;
  params.for_each_param([&](const std::string&, const Tensor& t) {
    blob_hash = fnv1a64(t.data.data(), t.data.size() * sizeof(double), blob_hash);
    blob_doubles += t.data.size();
  });

  json header{{"format", "shortcutlab-ckpt-v1"},
              {"model", config_to_json(params.cfg)},
              {"seed", seed},
              {"catalog_hash", catalog_hash},
              {"param_doubles", blob_doubles},
              {"param_digest", blob_hash}};
  std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  std::uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  params.for_each_param([&](const std::string&, const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  });
  if (!out) throw std::runtime_error("checkpoint: short write to " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen == 0 || hlen > (1ull << 20)) {
    throw std::runtime_error("checkpoint: bad header length in " + path);
  }
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("checkpoint: truncated header in " + path);
  json header = json::parse(htext);
  if (header.at("format").get<std::string>() != "shortcutlab-ckpt-v1") {
    throw std::runtime_error("checkpoint: unknown format in " + path);
  }

  ModelParams params = ModelParams::init(config_from_json(header.at("model")), 0);
  std::uint64_t blob_hash = kFnvOffsetBasis;
  params.for_each_param([&](const std::string& name, Tensor& t) {
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated block " + name + " in " + path);
    blob_hash = fnv1a64(t.data.data(), t.data.size() * sizeof(double), blob_hash);
  });
  if (blob_hash != header.at("param_digest").get<std::uint64_t>()) {
    throw std::runtime_error("checkpoint: checksum mismatch in " + path);
  }
  return params;
}

}  // namespace scl
