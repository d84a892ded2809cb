#pragma once

// Procedural tri-domain road-scene generator.
//
// Domain s: clear scenes with the source style, labeled.
// Domain m: clear scenes with the target style, labels hidden.
// Domain t: target style plus fog, labels hidden.
// For matched seeds, s and m differ only through apply_style and m and t only through apply_fog.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cudanet/image.hpp"

namespace cudanet {

enum class Domain { kSource, kIntermediate, kTarget };

inline constexpr std::array<Domain, 3> kAllDomains{Domain::kSource, Domain::kIntermediate, Domain::kTarget};

std::string_view domain_tag(Domain d);  // "s", "m", "t"
Domain parse_domain(std::string_view tag);

inline constexpr int kDefaultNumClasses = 5;
std::string_view class_name(int id);  // sky, road, building, vegetation, vehicle

struct LayoutParams {
  double horizon_min = 0.35;  // fraction of image height
  double horizon_max = 0.5;
  int max_buildings = 4;
  int max_trees = 3;
  int max_vehicles = 3;
  double noise_sigma = 0.03;

  bool operator==(const LayoutParams&) const = default;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int height = 32;
  int width = 32;
  int num_classes = kDefaultNumClasses;
  LayoutParams layout;
};

struct Scene {
  Image image;
  LabelMap labels;
};

struct StyleParams {
  std::array<float, 3> channel_gain{1.0F, 1.0F, 1.0F};
  std::array<float, 3> channel_bias{0.0F, 0.0F, 0.0F};
  float gamma = 1.0F;
  float hue_rotation = 0.0F;  // radians, rotation about the gray axis

  [[nodiscard]] static StyleParams identity() { return {}; }
  [[nodiscard]] bool is_identity() const;
  bool operator==(const StyleParams&) const = default;
};

// Depth increases linearly towards the top row (the horizon side), plus a per-class offset.
struct DepthModel {
  float near_depth = 0.5F;  // bottom row
  float far_depth = 3.0F;   // top row
  std::vector<float> class_offset{4.0F, 0.0F, 0.0F, 0.0F, 0.0F};

  bool operator==(const DepthModel&) const = default;
};

struct FogParams {
  float beta = 0.0F;
  std::array<float, 3> airlight{0.85F, 0.85F, 0.85F};
  DepthModel depth_model;

  bool operator==(const FogParams&) const = default;
};

Scene generate_scene(const SceneSpec& spec);

Image apply_style(const Image& image, const StyleParams& params);

// exp(-beta * depth)
float transmission(float beta, float depth);
std::vector<float> depth_map(const LabelMap& labels, const DepthModel& model);

// I = J * t + A * (1 - t), t = exp(-beta * d), clamped to [0, 1].
Image apply_fog(const Image& image, std::span<const float> depth, const FogParams& fog);
Image apply_fog(const Image& image, const LabelMap& labels, const FogParams& fog);

struct DatasetConfig {
  int height = 32;
  int width = 32;
  int num_classes = kDefaultNumClasses;
  int n_s = 64;
  int n_m = 32;
  int n_t = 64;
  std::uint64_t seed_s = 1000;
  std::uint64_t seed_m = 2000;
  std::uint64_t seed_t = 3000;
  StyleParams source_style;
  StyleParams target_style{{0.85F, 1.0F, 1.15F}, {0.06F, 0.0F, -0.04F}, 1.3F, 1.4F};  // shared by m and t
  FogParams fog{0.6F, {0.85F, 0.85F, 0.85F}, {}};                                     // applied to t only
  LayoutParams layout;

  [[nodiscard]] int count(Domain d) const;
  [[nodiscard]] std::uint64_t seed_begin(Domain d) const;
  // Throws ConfigError on bad sizes or overlapping seed ranges.
  void validate() const;
};

// Render one dataset entry. The clear rendering of a t scene is available through apply_fog's input.
Scene render_domain_scene(const DatasetConfig& cfg, Domain domain, std::uint64_t seed);
// Target-style, fog-free rendering of the scene with this seed.
Scene render_clear_target_scene(const DatasetConfig& cfg, std::uint64_t seed);

struct ManifestEntry {
  std::string image;  // relative to the manifest root
  std::string label;  // relative path, empty when absent
  Domain domain = Domain::kSource;
  bool label_hidden = false;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  int n_s = 0;
  int n_m = 0;
  int n_t = 0;
  nlohmann::json config;

  [[nodiscard]] std::vector<const ManifestEntry*> split(Domain d) const;
  [[nodiscard]] int count(Domain d) const;
  void validate() const;
};

void to_json(nlohmann::json& j, const StyleParams& p);
void from_json(const nlohmann::json& j, StyleParams& p);
void to_json(nlohmann::json& j, const FogParams& p);
void from_json(const nlohmann::json& j, FogParams& p);
void to_json(nlohmann::json& j, const LayoutParams& p);
void from_json(const nlohmann::json& j, LayoutParams& p);
void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);
void to_json(nlohmann::json& j, const DatasetManifest& m);

// Generates every scene, writes the directory tree and manifest.json under root.
// `config_echo` is stored verbatim in the manifest; defaults to the dataset config.
DatasetManifest build_tridomain_dataset(const DatasetConfig& cfg, const std::filesystem::path& root,
                                        const std::optional<nlohmann::json>& config_echo = std::nullopt);
DatasetManifest load_manifest(const std::filesystem::path& root);

}  // namespace cudanet
