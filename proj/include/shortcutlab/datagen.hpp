#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace scl {

struct FactorSpec {
  std::string name;  // one of: shape, color, lightness, texture, background
  int classes = 1;
};

/// Ordered factor list plus rendering geometry. `shape_style_offset` selects a
/// disjoint bank of silhouettes, so two catalogs can use non-overlapping shape
/// sets (the source/target split needs that).
struct FactorCatalog {
  std::vector<FactorSpec> factors;
  int image_h = 32;
  int image_w = 32;
  int shape_style_offset = 0;

  static FactorCatalog standard_source();  // shape 50, color 12, lightness 4, texture 5, background 3
  static FactorCatalog standard_target();  // shape 10 (disjoint bank), color 10, nuisance factors

  int factor_count() const { return static_cast<int>(factors.size()); }
  int index_of(const std::string& name) const;  // -1 when absent
  int classes_of(int factor) const { return factors[static_cast<std::size_t>(factor)].classes; }
  int pixel_count() const { return image_h * image_w * 3; }
  std::uint64_t hash() const;
};

/// Pixels in [0,1], float32 (the exported precision), row-major H x W x 3.
/// Labels are the factor tuple for source-role samples or the
/// (attribute, object) pair for target-role samples.
struct LabeledImage {
  std::vector<float> pixels;
  std::vector<std::uint16_t> labels;
};

enum class CorrelationMode { uncorrelated, fully_correlated, semi_correlated };

struct NuisancePolicy {
  bool uniform = true;  // otherwise pinned to fixed_class
  int fixed_class = 0;
};

struct CorrelationSpec {
  CorrelationMode mode = CorrelationMode::uncorrelated;
  int semi_m = 2;
  int attribute_factor = 1;
  int object_factor = 0;
  /// fully_correlated only: pairing[object] = attribute. Empty means identity.
  std::vector<int> pairing;
  /// Per factor; consulted for factors that are neither attribute nor object
  /// when generating target-role samples.
  std::vector<NuisancePolicy> nuisance;
};

struct SplitRequest {
  long per_combination = -1;  // one of the two must be set
  long total = -1;
};

struct SplitSizes {
  SplitRequest train, val, test;
};

enum class DatasetRole { source, target };

struct DatasetSpec {
  FactorCatalog catalog;
  CorrelationSpec correlation;
  SplitSizes sizes;
  DatasetRole role = DatasetRole::source;
  std::uint64_t seed = 0;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<LabeledImage> train, val, test;
  std::vector<std::pair<int, int>> seen_pairs;  // sorted (attribute, object)

  int attr_classes() const;
  int obj_classes() const;
  bool is_seen(int attr, int obj) const;
  std::vector<std::pair<int, int>> unseen_pairs() const;
};

/// Deterministic function of (catalog, tuple, jitter_seed): silhouette from the
/// shape class with per-sample vertex jitter up to 10% of image width, hue from
/// the color class, value scaled by lightness and texture pattern, background
/// from a fixed desaturated palette. Corner pixels always show pure background.
LabeledImage render_sample(const FactorCatalog& catalog, const std::vector<int>& factor_tuple,
                           std::uint64_t jitter_seed);

/// Pure function of the spec. Train/val cover only the seen pairs induced by
/// the correlation; test covers the full attribute x object grid. Uncorrelated
/// splits spread counts over the combination grid within +-1.
Dataset generate_dataset(const DatasetSpec& spec);

/// Order-sensitive checksum over pixels (float32 bytes) and labels of all
/// splits in train/val/test order. The empty dataset hashes to the FNV-1a
/// offset basis 0xcbf29ce484222325.
std::uint64_t dataset_digest(const Dataset& ds);
std::uint64_t split_digest(const std::vector<LabeledImage>& split,
                           std::uint64_t h = 0xcbf29ce484222325ull);

/// Directory layout: manifest.json plus samples.bin (per sample: H*W*3
/// float32 little-endian pixels, then the labels as uint16).
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

/// Writes the first `count` samples of each split as binary PPM for eyeballing.
void dump_ppm(const Dataset& ds, const std::string& dir, int count);

}  // namespace scl
