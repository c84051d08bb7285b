#include "shortcutlab/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "shortcutlab/kernels.hpp"
#include "shortcutlab/rng.hpp"

namespace scl {

namespace fs = std::filesystem;
using nlohmann::json;

FactorCatalog FactorCatalog::standard_source() {
  FactorCatalog c;
  c.factors = {{"shape", 50}, {"color", 12}, {"lightness", 4}, {"texture", 5}, {"background", 3}};
  return c;
}

FactorCatalog FactorCatalog::standard_target() {
  FactorCatalog c;
  // Disjoint silhouette bank from the 50 source shapes.
  c.factors = {{"shape", 10}, {"color", 10}, {"lightness", 4}, {"texture", 5}, {"background", 3}};
  c.shape_style_offset = 50;
  return c;
}

int FactorCatalog::index_of(const std::string& name) const {
  for (int i = 0; i < factor_count(); ++i) {
    if (factors[static_cast<std::size_t>(i)].name == name) return i;
  }
  return -1;
}

std::uint64_t FactorCatalog::hash() const {
  std::uint64_t h = kFnvOffsetBasis;
  for (const auto& f : factors) {
    h = fnv1a64(f.name.data(), f.name.size(), h);
    h = fnv1a64(&f.classes, sizeof(f.classes), h);
  }
  h = fnv1a64(&image_h, sizeof(image_h), h);
  h = fnv1a64(&image_w, sizeof(image_w), h);
  h = fnv1a64(&shape_style_offset, sizeof(shape_style_offset), h);
  return h;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double hue_deg, double s, double v) {
  double h = std::fmod(hue_deg, 360.0);
  if (h < 0) h += 360.0;
  double c = v * s;
  double hp = h / 60.0;
  double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c; g = x;
  } else if (hp < 2) {
    r = x; g = c;
  } else if (hp < 3) {
    g = c; b = x;
  } else if (hp < 4) {
    g = x; b = c;
  } else if (hp < 5) {
    r = x; b = c;
  } else {
    r = c; b = x;
  }
  double m = v - c;
  return {r + m, g + m, b + m};
}

constexpr int kMaxBackgrounds = 8;
const Rgb kBackgrounds[kMaxBackgrounds] = {
    {0.86, 0.83, 0.79}, {0.55, 0.59, 0.64}, {0.36, 0.40, 0.35}, {0.72, 0.66, 0.72},
    {0.50, 0.46, 0.42}, {0.24, 0.26, 0.31}, {0.66, 0.70, 0.62}, {0.90, 0.88, 0.92}};

struct Polygon {
  std::vector<double> xs, ys;
};

// Base silhouette for a style id: a star polygon with a style-seeded vertex
// count and radius profile. Independent of dataset seeds so shape classes are
// stable across datasets.
Polygon base_polygon(int style_id) {
  Rng rng(derive_seed(0x5ca1ab1e5eedull, "silhouette", static_cast<std::uint64_t>(style_id)));
  int n = 7 + static_cast<int>(rng.below(6));  // 7..12 vertices
  double spikiness = 0.25 + 0.55 * rng.uniform();
  Polygon p;
  p.xs.resize(static_cast<std::size_t>(n));
  p.ys.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double angle = kTau * (static_cast<double>(i) + 0.35 * (rng.uniform() - 0.5)) /
                   static_cast<double>(n);
    double radius = 1.0 - spikiness * rng.uniform();
    p.xs[static_cast<std::size_t>(i)] = radius * std::cos(angle);
    p.ys[static_cast<std::size_t>(i)] = radius * std::sin(angle);
  }
  return p;
}

bool point_in_polygon(const Polygon& p, double px, double py) {
  bool inside = false;
  std::size_t n = p.xs.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    double yi = p.ys[i], yj = p.ys[j];
    if ((yi > py) != (yj > py)) {
      double xi = p.xs[i] + (py - yi) / (yj - yi) * (p.xs[j] - p.xs[i]);
      if (px < xi) inside = !inside;
    }
  }
  return inside;
}

double texture_value(int texture_class, int x, int y, std::uint64_t noise_seed) {
  switch (texture_class) {
    case 0:
      return 1.0;  // solid
    case 1:
      return ((x + y) / 3) % 2 == 0 ? 1.0 : 0.55;  // diagonal stripes
    case 2:
      return ((x / 4) + (y / 4)) % 2 == 0 ? 1.0 : 0.55;  // checker
    case 3: {
      int dx = x % 6 - 3, dy = y % 6 - 3;
      return dx * dx + dy * dy <= 2 ? 0.55 : 1.0;  // dot grid
    }
    default: {
      std::uint64_t h = derive_seed(noise_seed, "texel",
                                    (static_cast<std::uint64_t>(x) << 20) ^
                                        static_cast<std::uint64_t>(y));
      double u = static_cast<double>(h >> 11) * 0x1.0p-53;
      return 0.55 + 0.45 * u;  // per-pixel noise
    }
  }
}

}  // namespace

LabeledImage render_sample(const FactorCatalog& catalog, const std::vector<int>& factor_tuple,
                           std::uint64_t jitter_seed) {
  if (factor_tuple.size() != static_cast<std::size_t>(catalog.factor_count())) {
    throw std::invalid_argument("render_sample: tuple size " + std::to_string(factor_tuple.size()) +
                                " vs " + std::to_string(catalog.factor_count()) + " factors");
  }
  auto factor_value = [&](const char* name, int fallback) {
    int idx = catalog.index_of(name);
    if (idx < 0) return fallback;
    int v = factor_tuple[static_cast<std::size_t>(idx)];
    if (v < 0 || v >= catalog.classes_of(idx)) {
      throw std::out_of_range(std::string("render_sample: ") + name + " class " +
                              std::to_string(v) + " out of range " +
                              std::to_string(catalog.classes_of(idx)));
    }
    return v;
  };

  int shape = factor_value("shape", 0);
  int color = factor_value("color", 0);
  int lightness = factor_value("lightness", -1);
  int texture = factor_value("texture", 0);
  int background = factor_value("background", 0);
  if (background >= kMaxBackgrounds) {
    throw std::out_of_range("render_sample: background palette has " +
                            std::to_string(kMaxBackgrounds) + " entries");
  }

  int h = catalog.image_h, w = catalog.image_w;
  int color_classes = catalog.index_of("color") >= 0 ? catalog.classes_of(catalog.index_of("color")) : 12;
  int lightness_classes =
      catalog.index_of("lightness") >= 0 ? catalog.classes_of(catalog.index_of("lightness")) : 1;

  double hue = 360.0 * static_cast<double>(color) / static_cast<double>(color_classes);
  double level = 1.0;
  if (lightness >= 0 && lightness_classes > 1) {
    level = 0.4 + 0.6 * static_cast<double>(lightness) / static_cast<double>(lightness_classes - 1);
  }

  // Vertex jitter: per-sample displacement up to 10% of image width per axis.
  Polygon poly = base_polygon(catalog.shape_style_offset + shape);
  Rng jit(jitter_seed);
  double scale = 0.36 * static_cast<double>(std::min(h, w));
  double cx = 0.5 * static_cast<double>(w - 1);
  double cy = 0.5 * static_cast<double>(h - 1);
  double jmax = 0.10 * static_cast<double>(w);
  for (std::size_t i = 0; i < poly.xs.size(); ++i) {
    poly.xs[i] = cx + scale * poly.xs[i] + jit.uniform(-jmax, jmax);
    poly.ys[i] = cy + scale * poly.ys[i] + jit.uniform(-jmax, jmax);
  }

  Rgb bg = kBackgrounds[background];
  LabeledImage img;
  img.pixels.resize(static_cast<std::size_t>(h * w * 3));
  std::uint64_t noise_seed = derive_seed(jitter_seed, "texture-noise");
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Rgb px = bg;
      if (point_in_polygon(poly, static_cast<double>(x), static_cast<double>(y))) {
        double v = level * texture_value(texture, x, y, noise_seed);
        px = hsv_to_rgb(hue, 1.0, v);
      }
      std::size_t base = static_cast<std::size_t>((y * w + x) * 3);
      img.pixels[base + 0] = static_cast<float>(px.r);
      img.pixels[base + 1] = static_cast<float>(px.g);
      img.pixels[base + 2] = static_cast<float>(px.b);
    }
  }
  img.labels.assign(factor_tuple.begin(), factor_tuple.end());
  return img;
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

namespace {

std::vector<std::pair<int, int>> compute_seen_pairs(const CorrelationSpec& corr, int attr_classes,
                                                    int obj_classes) {
  std::vector<std::pair<int, int>> seen;
  switch (corr.mode) {
    case CorrelationMode::uncorrelated:
      for (int a = 0; a < attr_classes; ++a) {
        for (int o = 0; o < obj_classes; ++o) seen.emplace_back(a, o);
      }
      break;
    case CorrelationMode::fully_correlated: {
      std::vector<int> pairing = corr.pairing;
      if (pairing.empty()) {
        if (attr_classes != obj_classes) {
          throw std::invalid_argument("fully_correlated: identity pairing needs equal class "
                                      "counts, got " + std::to_string(attr_classes) + " vs " +
                                      std::to_string(obj_classes));
        }
        pairing.resize(static_cast<std::size_t>(obj_classes));
        std::iota(pairing.begin(), pairing.end(), 0);
      }
      if (static_cast<int>(pairing.size()) != obj_classes) {
        throw std::invalid_argument("fully_correlated: pairing has " +
                                    std::to_string(pairing.size()) + " entries for " +
                                    std::to_string(obj_classes) + " object classes");
      }
      std::vector<bool> used(static_cast<std::size_t>(attr_classes), false);
      for (int o = 0; o < obj_classes; ++o) {
        int a = pairing[static_cast<std::size_t>(o)];
        if (a < 0 || a >= attr_classes || used[static_cast<std::size_t>(a)]) {
          throw std::invalid_argument("fully_correlated: pairing is not a bijection");
        }
        used[static_cast<std::size_t>(a)] = true;
        seen.emplace_back(a, o);
      }
      break;
    }
    case CorrelationMode::semi_correlated: {
      if (corr.semi_m < 2) {
        throw std::invalid_argument("semi_correlated: m must be at least 2, got " +
                                    std::to_string(corr.semi_m));
      }
      if (corr.semi_m > attr_classes) {
        throw std::invalid_argument("semi_correlated: m = " + std::to_string(corr.semi_m) +
                                    " exceeds " + std::to_string(attr_classes) +
                                    " attribute classes");
      }
      for (int o = 0; o < obj_classes; ++o) {
        for (int j = 0; j < corr.semi_m; ++j) seen.emplace_back((o + j) % attr_classes, o);
      }
      break;
    }
  }
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  return seen;
}

// Spread `total` samples over `n` combinations with counts differing by at
// most one; the +1 remainders land on a seeded permutation.
std::vector<long> spread_counts(long total, std::size_t n, Rng& rng) {
  std::vector<long> counts(n, total / static_cast<long>(n));
  long rem = total % static_cast<long>(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  for (long i = 0; i < rem; ++i) counts[order[static_cast<std::size_t>(i)]] += 1;
  return counts;
}

long resolve_total(const SplitRequest& req, std::size_t n_combos, const char* split) {
  if ((req.per_combination < 0) == (req.total < 0)) {
    throw std::invalid_argument(std::string("sizes: set exactly one of per_combination/total for ") +
                                split);
  }
  long total = req.per_combination >= 0
                   ? req.per_combination * static_cast<long>(n_combos)
                   : req.total;
  if (total < 0) throw std::invalid_argument(std::string("sizes: negative count for ") + split);
  return total;
}

struct PendingSample {
  std::vector<int> tuple;
  std::uint16_t label_a = 0, label_o = 0;
  std::uint64_t jitter_seed = 0;
};

}  // namespace

Dataset generate_dataset(const DatasetSpec& spec) {
  const FactorCatalog& cat = spec.catalog;
  const CorrelationSpec& corr = spec.correlation;
  int k = cat.factor_count();
  if (corr.attribute_factor < 0 || corr.attribute_factor >= k || corr.object_factor < 0 ||
      corr.object_factor >= k || corr.attribute_factor == corr.object_factor) {
    throw std::invalid_argument("correlation: bad attribute/object factor indices");
  }
  int attr_classes = cat.classes_of(corr.attribute_factor);
  int obj_classes = cat.classes_of(corr.object_factor);

  Dataset ds;
  ds.spec = spec;
  ds.seen_pairs = compute_seen_pairs(corr, attr_classes, obj_classes);

  std::vector<std::pair<int, int>> all_pairs;
  for (int a = 0; a < attr_classes; ++a) {
    for (int o = 0; o < obj_classes; ++o) all_pairs.emplace_back(a, o);
  }

  // Factors enumerated exhaustively alongside the pair grid: all of them for
  // source-role data (every factor is a label), none for target-role data
  // (non-pair factors follow the nuisance policy instead).
  std::vector<int> grid_factors;
  for (int f = 0; f < k; ++f) {
    if (f == corr.attribute_factor || f == corr.object_factor) continue;
    if (spec.role == DatasetRole::source) grid_factors.push_back(f);
  }

  auto build_split = [&](const char* name, const SplitRequest& req, bool full_grid,
                         std::vector<LabeledImage>& out) {
    const auto& pairs = full_grid ? all_pairs : ds.seen_pairs;
    long grid_size = 1;
    for (int f : grid_factors) grid_size *= cat.classes_of(f);
    std::size_t n_combos = pairs.size() * static_cast<std::size_t>(grid_size);
    long total = resolve_total(req, n_combos, name);

    Rng rng(derive_seed(spec.seed, std::string("split/") + name));
    std::vector<long> counts = spread_counts(total, n_combos, rng);

    std::vector<PendingSample> pending;
    pending.reserve(static_cast<std::size_t>(total));
    std::size_t combo = 0;
    std::uint64_t emit_index = 0;
    for (const auto& [a, o] : pairs) {
      for (long gi = 0; gi < grid_size; ++gi, ++combo) {
        // Decode the grid index into the non-pair factor values.
        std::vector<int> grid_vals(grid_factors.size());
        long rest = gi;
        for (std::size_t t = grid_factors.size(); t-- > 0;) {
          int classes = cat.classes_of(grid_factors[t]);
          grid_vals[t] = static_cast<int>(rest % classes);
          rest /= classes;
        }
        for (long inst = 0; inst < counts[combo]; ++inst, ++emit_index) {
          PendingSample s;
          s.tuple.assign(static_cast<std::size_t>(k), 0);
          s.tuple[static_cast<std::size_t>(corr.attribute_factor)] = a;
          s.tuple[static_cast<std::size_t>(corr.object_factor)] = o;
          for (std::size_t t = 0; t < grid_factors.size(); ++t) {
            s.tuple[static_cast<std::size_t>(grid_factors[t])] = grid_vals[t];
          }
          if (spec.role == DatasetRole::target) {
            for (int f = 0; f < k; ++f) {
              if (f == corr.attribute_factor || f == corr.object_factor) continue;
              NuisancePolicy policy;
              if (static_cast<std::size_t>(f) < corr.nuisance.size()) {
                policy = corr.nuisance[static_cast<std::size_t>(f)];
              }
              s.tuple[static_cast<std::size_t>(f)] =
                  policy.uniform ? static_cast<int>(rng.below(
                                       static_cast<std::uint64_t>(cat.classes_of(f))))
                                 : policy.fixed_class;
            }
          }
          s.label_a = static_cast<std::uint16_t>(a);
          s.label_o = static_cast<std::uint16_t>(o);
          s.jitter_seed = derive_seed(spec.seed, std::string("jitter/") + name, emit_index);
          pending.push_back(std::move(s));
        }
      }
    }

    out.resize(pending.size());
    int nth = kernels::max_threads();
#pragma omp parallel for num_threads(nth) schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(pending.size()); ++i) {
      const PendingSample& s = pending[static_cast<std::size_t>(i)];
      LabeledImage img = render_sample(cat, s.tuple, s.jitter_seed);
      if (spec.role == DatasetRole::target) {
        img.labels = {s.label_a, s.label_o};
      }
      out[static_cast<std::size_t>(i)] = std::move(img);
    }
  };

  build_split("train", spec.sizes.train, corr.mode == CorrelationMode::uncorrelated, ds.train);
  build_split("val", spec.sizes.val, corr.mode == CorrelationMode::uncorrelated, ds.val);
  build_split("test", spec.sizes.test, true, ds.test);
  return ds;
}

int Dataset::attr_classes() const {
  return spec.catalog.classes_of(spec.correlation.attribute_factor);
}
int Dataset::obj_classes() const { return spec.catalog.classes_of(spec.correlation.object_factor); }

bool Dataset::is_seen(int attr, int obj) const {
  return std::binary_search(seen_pairs.begin(), seen_pairs.end(), std::make_pair(attr, obj));
}

std::vector<std::pair<int, int>> Dataset::unseen_pairs() const {
  std::vector<std::pair<int, int>> out;
  for (int a = 0; a < attr_classes(); ++a) {
    for (int o = 0; o < obj_classes(); ++o) {
      if (!is_seen(a, o)) out.emplace_back(a, o);
    }
  }
  return out;
}

std::uint64_t split_digest(const std::vector<LabeledImage>& split, std::uint64_t h) {
  for (const auto& img : split) {
    h = fnv1a64(img.pixels.data(), img.pixels.size() * sizeof(float), h);
    h = fnv1a64(img.labels.data(), img.labels.size() * sizeof(std::uint16_t), h);
  }
  return h;
}

std::uint64_t dataset_digest(const Dataset& ds) {
  std::uint64_t h = split_digest(ds.train);
  h = split_digest(ds.val, h);
  h = split_digest(ds.test, h);
  return h;
}

// ---------------------------------------------------------------------------
// Disk format
// ---------------------------------------------------------------------------

namespace {

json correlation_to_json(const CorrelationSpec& c) {
  const char* mode = c.mode == CorrelationMode::uncorrelated        ? "uncorrelated"
                     : c.mode == CorrelationMode::fully_correlated ? "fully_correlated"
                                                                    : "semi_correlated";
  json nuis = json::array();
  for (const auto& n : c.nuisance) {
    nuis.push_back(json{{"uniform", n.uniform}, {"fixed_class", n.fixed_class}});
  }
  return json{{"mode", mode},
              {"semi_m", c.semi_m},
              {"attribute_factor", c.attribute_factor},
              {"object_factor", c.object_factor},
              {"pairing", c.pairing},
              {"nuisance", nuis}};
}

CorrelationSpec correlation_from_json(const json& j) {
  CorrelationSpec c;
  std::string mode = j.at("mode").get<std::string>();
  if (mode == "uncorrelated") c.mode = CorrelationMode::uncorrelated;
  else if (mode == "fully_correlated") c.mode = CorrelationMode::fully_correlated;
  else if (mode == "semi_correlated") c.mode = CorrelationMode::semi_correlated;
  else throw std::invalid_argument("manifest: unknown correlation mode " + mode);
  c.semi_m = j.at("semi_m").get<int>();
  c.attribute_factor = j.at("attribute_factor").get<int>();
  c.object_factor = j.at("object_factor").get<int>();
  c.pairing = j.at("pairing").get<std::vector<int>>();
  for (const auto& n : j.at("nuisance")) {
    c.nuisance.push_back({n.at("uniform").get<bool>(), n.at("fixed_class").get<int>()});
  }
  return c;
}

json catalog_to_json(const FactorCatalog& c) {
  json factors = json::array();
  for (const auto& f : c.factors) factors.push_back(json{{"name", f.name}, {"classes", f.classes}});
  return json{{"factors", factors},
              {"image_h", c.image_h},
              {"image_w", c.image_w},
              {"shape_style_offset", c.shape_style_offset}};
}

FactorCatalog catalog_from_json(const json& j) {
  FactorCatalog c;
  for (const auto& f : j.at("factors")) {
    c.factors.push_back({f.at("name").get<std::string>(), f.at("classes").get<int>()});
  }
  c.image_h = j.at("image_h").get<int>();
  c.image_w = j.at("image_w").get<int>();
  c.shape_style_offset = j.at("shape_style_offset").get<int>();
  return c;
}

void write_split(std::ofstream& out, const std::vector<LabeledImage>& split) {
  for (const auto& img : split) {
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(img.labels.data()),
              static_cast<std::streamsize>(img.labels.size() * sizeof(std::uint16_t)));
  }
}

void read_split(std::ifstream& in, std::vector<LabeledImage>& split, std::size_t count,
                std::size_t pixels, std::size_t label_width) {
  split.resize(count);
  for (auto& img : split) {
    img.pixels.resize(pixels);
    img.labels.resize(label_width);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(pixels * sizeof(float)));
    in.read(reinterpret_cast<char*>(img.labels.data()),
            static_cast<std::streamsize>(label_width * sizeof(std::uint16_t)));
    if (!in) throw std::runtime_error("dataset: samples.bin truncated");
  }
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  std::size_t label_width = ds.spec.role == DatasetRole::target
                                ? 2
                                : static_cast<std::size_t>(ds.spec.catalog.factor_count());
  json seen = json::array();
  for (const auto& [a, o] : ds.seen_pairs) seen.push_back(json::array({a, o}));
  json manifest{{"format", "shortcutlab-dataset-v1"},
                {"role", ds.spec.role == DatasetRole::target ? "target" : "source"},
                {"seed", ds.spec.seed},
                {"catalog", catalog_to_json(ds.spec.catalog)},
                {"correlation", correlation_to_json(ds.spec.correlation)},
                {"label_width", label_width},
                {"counts", json{{"train", ds.train.size()},
                                {"val", ds.val.size()},
                                {"test", ds.test.size()}}},
                {"seen_pairs", seen},
                {"digests", json{{"train", split_digest(ds.train)},
                                 {"val", split_digest(ds.val)},
                                 {"test", split_digest(ds.test)},
                                 {"all", dataset_digest(ds)}}}};
  std::ofstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw std::runtime_error("dataset: cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";

  std::ofstream bin(fs::path(dir) / "samples.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("dataset: cannot write samples.bin in " + dir);
  write_split(bin, ds.train);
  write_split(bin, ds.val);
  write_split(bin, ds.test);
  if (!bin) throw std::runtime_error("dataset: short write in " + dir);
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw std::runtime_error("dataset: cannot open manifest in " + dir);
  json manifest = json::parse(mf);
  if (manifest.at("format").get<std::string>() != "shortcutlab-dataset-v1") {
    throw std::runtime_error("dataset: unknown format in " + dir);
  }
  Dataset ds;
  ds.spec.role = manifest.at("role").get<std::string>() == "target" ? DatasetRole::target
                                                                    : DatasetRole::source;
  ds.spec.seed = manifest.at("seed").get<std::uint64_t>();
  ds.spec.catalog = catalog_from_json(manifest.at("catalog"));
  ds.spec.correlation = correlation_from_json(manifest.at("correlation"));
  for (const auto& p : manifest.at("seen_pairs")) {
    ds.seen_pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
  }
  std::size_t label_width = manifest.at("label_width").get<std::size_t>();
  std::size_t pixels = static_cast<std::size_t>(ds.spec.catalog.pixel_count());

  std::ifstream bin(fs::path(dir) / "samples.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("dataset: cannot open samples.bin in " + dir);
  read_split(bin, ds.train, manifest.at("counts").at("train").get<std::size_t>(), pixels,
             label_width);
  read_split(bin, ds.val, manifest.at("counts").at("val").get<std::size_t>(), pixels, label_width);
  read_split(bin, ds.test, manifest.at("counts").at("test").get<std::size_t>(), pixels,
             label_width);

  if (split_digest(ds.train) != manifest.at("digests").at("train").get<std::uint64_t>() ||
      split_digest(ds.val) != manifest.at("digests").at("val").get<std::uint64_t>() ||
      split_digest(ds.test) != manifest.at("digests").at("test").get<std::uint64_t>()) {
    throw std::runtime_error("dataset: digest mismatch in " + dir);
  }
  return ds;
}

void dump_ppm(const Dataset& ds, const std::string& dir, int count) {
  fs::create_directories(dir);
  auto dump = [&](const char* split, const std::vector<LabeledImage>& samples) {
    int n = std::min<int>(count, static_cast<int>(samples.size()));
    for (int i = 0; i < n; ++i) {
      fs::path p = fs::path(dir) / (std::string(split) + "_" + std::to_string(i) + ".ppm");
      std::ofstream out(p, std::ios::binary);
      out << "P6\n" << ds.spec.catalog.image_w << " " << ds.spec.catalog.image_h << "\n255\n";
      for (float v : samples[static_cast<std::size_t>(i)].pixels) {
        double d = std::lround(std::min(1.0f, std::max(0.0f, v)) * 255.0f);
        out.put(static_cast<char>(static_cast<unsigned char>(d)));
      }
    }
  };
  dump("train", ds.train);
  dump("val", ds.val);
  dump("test", ds.test);
}

}  // namespace scl
