#include "cudanet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "cudanet/errors.hpp"
#include "cudanet/json_util.hpp"

namespace cudanet {
namespace {

// Portable draws on top of mt19937_64 so generated data does not depend on the
// standard library's distribution implementations.
class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

using Rgb = std::array<float, 3>;

constexpr int kSky = 0;
constexpr int kRoad = 1;
constexpr int kBuilding = 2;
constexpr int kVegetation = 3;
constexpr int kVehicle = 4;

constexpr std::array<Rgb, 3> kBuildingPalette{{{0.62F, 0.42F, 0.32F}, {0.55F, 0.52F, 0.48F}, {0.72F, 0.62F, 0.45F}}};
constexpr std::array<Rgb, 4> kVehiclePalette{
    {{0.75F, 0.12F, 0.10F}, {0.12F, 0.18F, 0.60F}, {0.85F, 0.80F, 0.15F}, {0.10F, 0.10F, 0.12F}}};

struct Canvas {
  int h;
  int w;
  std::vector<Rgb> color;
  std::vector<int> cls;

  Canvas(int height, int width) : h(height), w(width), color(static_cast<size_t>(height) * width), cls(color.size()) {}
  void put(int y, int x, int c, const Rgb& rgb) {
    if (y < 0 || y >= h || x < 0 || x >= w) return;
    const size_t i = static_cast<size_t>(y) * w + x;
    cls[i] = c;
    color[i] = rgb;
  }
  [[nodiscard]] int cls_at(int y, int x) const { return cls[static_cast<size_t>(y) * w + x]; }
};

void check_finite(float v, const char* what) {
  if (!std::isfinite(v)) throw ConfigError(std::string("non-finite style parameter: ") + what);
}

// Rotation about the (1,1,1)/sqrt(3) axis.
std::array<float, 9> hue_matrix(float angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double k = 1.0 / std::sqrt(3.0);
  const double t = 1.0 - c;
  const double kk = t * k * k;
  const double ks = s * k;
  return {static_cast<float>(c + kk), static_cast<float>(kk - ks), static_cast<float>(kk + ks),
          static_cast<float>(kk + ks), static_cast<float>(c + kk), static_cast<float>(kk - ks),
          static_cast<float>(kk - ks), static_cast<float>(kk + ks), static_cast<float>(c + kk)};
}

}  // namespace

std::string_view domain_tag(Domain d) {
  switch (d) {
    case Domain::kSource:
      return "s";
    case Domain::kIntermediate:
      return "m";
    case Domain::kTarget:
      return "t";
  }
  return "?";
}

Domain parse_domain(std::string_view tag) {
  if (tag == "s") return Domain::kSource;
  if (tag == "m") return Domain::kIntermediate;
  if (tag == "t") return Domain::kTarget;
  throw ConfigError("unknown domain tag '" + std::string(tag) + "' (expected s, m or t)");
}

std::string_view class_name(int id) {
  static constexpr std::array<std::string_view, 5> kNames{"sky", "road", "building", "vegetation", "vehicle"};
  if (id >= 0 && id < static_cast<int>(kNames.size())) return kNames[id];
  return "class";
}

bool StyleParams::is_identity() const { return *this == StyleParams::identity(); }

Scene generate_scene(const SceneSpec& spec) {
  if (spec.height < 16 || spec.width < 16) throw ConfigError("scene dimensions must be at least 16x16");
  if (spec.num_classes < 2) throw ConfigError("num_classes must be at least 2");
  const LayoutParams& lp = spec.layout;
  if (!(lp.horizon_min > 0.0 && lp.horizon_min <= lp.horizon_max && lp.horizon_max < 1.0)) {
    throw ConfigError("layout horizon range must satisfy 0 < min <= max < 1");
  }
  if (lp.max_buildings < 1 || lp.max_trees < 0 || lp.max_vehicles < 0 || lp.noise_sigma < 0.0) {
    throw ConfigError("invalid layout counts or noise level");
  }

  const int h = spec.height;
  const int w = spec.width;
  SceneRng rng(spec.seed);
  Canvas canvas(h, w);

  const int horizon = std::clamp(static_cast<int>(std::lround(h * rng.uniform(lp.horizon_min, lp.horizon_max))), 2, h - 4);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (y < horizon) {
        const float lift = 0.18F * static_cast<float>(y) / static_cast<float>(horizon);
        canvas.put(y, x, kSky, {0.50F + lift, 0.68F + lift, 0.90F + 0.5F * lift});
      } else {
        canvas.put(y, x, kVegetation, {0.32F, 0.55F, 0.24F});
      }
    }
  }

  const double road_center = w * rng.uniform(0.4, 0.6);
  const double span = std::max(1, h - 1 - horizon);
  for (int y = horizon; y < h; ++y) {
    const double half = w * (0.04 + 0.5 * (y - horizon) / span);
    for (int x = 0; x < w; ++x) {
      const double dx = x + 0.5 - road_center;
      if (std::abs(dx) <= half) {
        const bool marking = std::abs(dx) < 0.6 && (y % 4) < 2;
        canvas.put(y, x, kRoad, marking ? Rgb{0.88F, 0.88F, 0.82F} : Rgb{0.42F, 0.42F, 0.44F});
      }
    }
  }

  const int n_buildings = rng.uniform_int(1, lp.max_buildings);
  for (int b = 0; b < n_buildings; ++b) {
    const int bw = std::max(3, static_cast<int>(std::lround(w * rng.uniform(0.15, 0.35))));
    const int x0 = rng.uniform_int(-bw / 2, w - bw / 2);
    const int top = std::max(0, horizon - static_cast<int>(std::lround(h * rng.uniform(0.1, 0.35))));
    const Rgb base = kBuildingPalette[rng.uniform_int(0, static_cast<int>(kBuildingPalette.size()) - 1)];
    for (int y = top; y <= horizon; ++y) {
      for (int x = x0; x < x0 + bw; ++x) {
        if (x < 0 || x >= w || y >= h || canvas.cls_at(y, x) == kRoad) continue;
        const bool window = ((y - top) % 4 == 1) && ((x - x0) % 3 == 1);
        canvas.put(y, x, kBuilding, window ? Rgb{0.22F, 0.24F, 0.30F} : base);
      }
    }
  }

  const int n_trees = rng.uniform_int(0, lp.max_trees);
  for (int i = 0; i < n_trees; ++i) {
    const double cx = rng.uniform(0.0, w);
    const double cy = horizon - rng.uniform(0.0, 0.1 * h);
    const double r = rng.uniform(1.5, std::max(2.0, 0.12 * w));
    for (int y = static_cast<int>(cy - r) - 1; y <= static_cast<int>(cy + r) + 1; ++y) {
      for (int x = static_cast<int>(cx - r) - 1; x <= static_cast<int>(cx + r) + 1; ++x) {
        const double dy = y + 0.5 - cy;
        const double dx = x + 0.5 - cx;
        if (dx * dx + dy * dy <= r * r) canvas.put(y, x, kVegetation, {0.16F, 0.42F, 0.14F});
      }
    }
  }

  const int n_vehicles = rng.uniform_int(0, lp.max_vehicles);
  for (int i = 0; i < n_vehicles; ++i) {
    const int bottom = static_cast<int>(std::lround(rng.uniform(horizon + 0.3 * (h - horizon), h - 1.0)));
    const double scale = (bottom - horizon) / span;
    const int vw = std::max(2, static_cast<int>(std::lround(w * 0.25 * scale + 1.0)));
    const int vh = std::max(2, static_cast<int>(std::lround(vw * 0.6)));
    const double half = w * (0.04 + 0.5 * (bottom - horizon) / span);
    const double cx = road_center + rng.uniform(-0.6, 0.6) * half;
    const Rgb paint = kVehiclePalette[rng.uniform_int(0, static_cast<int>(kVehiclePalette.size()) - 1)];
    const int x0 = static_cast<int>(std::lround(cx - vw / 2.0));
    for (int y = bottom - vh + 1; y <= bottom; ++y) {
      for (int x = x0; x < x0 + vw; ++x) {
        const bool glass = y == bottom - vh + 1 && x > x0 && x < x0 + vw - 1;
        canvas.put(y, x, kVehicle, glass ? Rgb{0.55F, 0.65F, 0.75F} : paint);
      }
    }
  }

  Scene scene{Image(h, w), LabelMap(h, w)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      scene.labels.at(y, x) = static_cast<std::uint8_t>(std::min(canvas.cls[i], spec.num_classes - 1));
      for (int c = 0; c < 3; ++c) {
        const double v = canvas.color[i][c] + lp.noise_sigma * rng.normal();
        scene.image.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return scene;
}

Image apply_style(const Image& image, const StyleParams& params) {
  for (int c = 0; c < 3; ++c) {
    check_finite(params.channel_gain[c], "channel_gain");
    check_finite(params.channel_bias[c], "channel_bias");
  }
  check_finite(params.gamma, "gamma");
  check_finite(params.hue_rotation, "hue_rotation");
  if (params.gamma <= 0.0F) throw ConfigError("style gamma must be positive");

  Image out = image;
  const bool affine = params.channel_gain != std::array<float, 3>{1.0F, 1.0F, 1.0F} ||
                      params.channel_bias != std::array<float, 3>{0.0F, 0.0F, 0.0F};
  const size_t n = static_cast<size_t>(image.height) * image.width;
  if (affine) {
    for (size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) {
        float& v = out.pixels[i * 3 + c];
        v = std::clamp(params.channel_gain[c] * v + params.channel_bias[c], 0.0F, 1.0F);
      }
    }
  }
  if (params.gamma != 1.0F) {
    for (float& v : out.pixels) v = std::clamp(std::pow(std::max(v, 0.0F), params.gamma), 0.0F, 1.0F);
  }
  if (params.hue_rotation != 0.0F) {
    const auto m = hue_matrix(params.hue_rotation);
    for (size_t i = 0; i < n; ++i) {
      const float r = out.pixels[i * 3];
      const float g = out.pixels[i * 3 + 1];
      const float b = out.pixels[i * 3 + 2];
      out.pixels[i * 3] = std::clamp(m[0] * r + m[1] * g + m[2] * b, 0.0F, 1.0F);
      out.pixels[i * 3 + 1] = std::clamp(m[3] * r + m[4] * g + m[5] * b, 0.0F, 1.0F);
      out.pixels[i * 3 + 2] = std::clamp(m[6] * r + m[7] * g + m[8] * b, 0.0F, 1.0F);
    }
  }
  return out;
}

float transmission(float beta, float depth) { return std::exp(-beta * depth); }

std::vector<float> depth_map(const LabelMap& labels, const DepthModel& model) {
  if (!(model.near_depth > 0.0F) || !(model.far_depth > 0.0F)) throw ConfigError("fog depth range must be positive");
  std::vector<float> depth(labels.ids.size());
  const float denom = static_cast<float>(std::max(1, labels.height - 1));
  for (int y = 0; y < labels.height; ++y) {
    const float base = model.far_depth - (model.far_depth - model.near_depth) * static_cast<float>(y) / denom;
    for (int x = 0; x < labels.width; ++x) {
      const int cls = labels.at(y, x);
      const float offset = cls < static_cast<int>(model.class_offset.size()) ? model.class_offset[cls] : 0.0F;
      const float d = base + offset;
      if (!(d > 0.0F)) throw ConfigError("depth model produced a non-positive depth");
      depth[static_cast<size_t>(y) * labels.width + x] = d;
    }
  }
  return depth;
}

Image apply_fog(const Image& image, std::span<const float> depth, const FogParams& fog) {
  if (!std::isfinite(fog.beta) || fog.beta < 0.0F) throw ConfigError("fog beta must be finite and >= 0");
  if (depth.size() != static_cast<size_t>(image.height) * image.width) throw ShapeError("depth map size mismatch");
  if (fog.beta == 0.0F) return image;
  Image out = image;
  for (size_t i = 0; i < depth.size(); ++i) {
    const float t = transmission(fog.beta, depth[i]);
    for (int c = 0; c < 3; ++c) {
      float& v = out.pixels[i * 3 + c];
      v = std::clamp(v * t + fog.airlight[c] * (1.0F - t), 0.0F, 1.0F);
    }
  }
  return out;
}

Image apply_fog(const Image& image, const LabelMap& labels, const FogParams& fog) {
  if (labels.height != image.height || labels.width != image.width) throw ShapeError("label/image size mismatch");
  const auto depth = depth_map(labels, fog.depth_model);
  return apply_fog(image, depth, fog);
}

int DatasetConfig::count(Domain d) const {
  switch (d) {
    case Domain::kSource:
      return n_s;
    case Domain::kIntermediate:
      return n_m;
    case Domain::kTarget:
      return n_t;
  }
  return 0;
}

std::uint64_t DatasetConfig::seed_begin(Domain d) const {
  switch (d) {
    case Domain::kSource:
      return seed_s;
    case Domain::kIntermediate:
      return seed_m;
    case Domain::kTarget:
      return seed_t;
  }
  return 0;
}

void DatasetConfig::validate() const {
  if (height < 16 || width < 16) throw ConfigError("dataset.height/width must be at least 16");
  if (height % 16 != 0 || width % 16 != 0) throw ConfigError("dataset.height/width must be multiples of 16");
  if (num_classes < 2 || num_classes > 254) throw ConfigError("dataset.num_classes must be in [2, 254]");
  if (n_s < 1 || n_m < 1 || n_t < 1) throw ConfigError("dataset counts n_s, n_m, n_t must be positive");
  if (fog.beta < 0.0F || !std::isfinite(fog.beta)) throw ConfigError("dataset.fog.beta must be finite and >= 0");
  for (size_t a = 0; a < kAllDomains.size(); ++a) {
    for (size_t b = a + 1; b < kAllDomains.size(); ++b) {
      const auto a0 = seed_begin(kAllDomains[a]);
      const auto a1 = a0 + static_cast<std::uint64_t>(count(kAllDomains[a]));
      const auto b0 = seed_begin(kAllDomains[b]);
      const auto b1 = b0 + static_cast<std::uint64_t>(count(kAllDomains[b]));
      if (a0 < b1 && b0 < a1) {
        throw ConfigError("seed ranges of domains " + std::string(domain_tag(kAllDomains[a])) + " and " +
                          std::string(domain_tag(kAllDomains[b])) + " overlap; domains must not share scenes");
      }
    }
  }
}

namespace {
SceneSpec spec_for(const DatasetConfig& cfg, std::uint64_t seed) {
  return SceneSpec{seed, cfg.height, cfg.width, cfg.num_classes, cfg.layout};
}
}  // namespace

Scene render_clear_target_scene(const DatasetConfig& cfg, std::uint64_t seed) {
  Scene scene = generate_scene(spec_for(cfg, seed));
  scene.image = apply_style(scene.image, cfg.target_style);
  return scene;
}

Scene render_domain_scene(const DatasetConfig& cfg, Domain domain, std::uint64_t seed) {
  if (domain == Domain::kSource) {
    Scene scene = generate_scene(spec_for(cfg, seed));
    scene.image = apply_style(scene.image, cfg.source_style);
    return scene;
  }
  Scene scene = render_clear_target_scene(cfg, seed);
  if (domain == Domain::kTarget) scene.image = apply_fog(scene.image, scene.labels, cfg.fog);
  return scene;
}

std::vector<const ManifestEntry*> DatasetManifest::split(Domain d) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.domain == d) out.push_back(&e);
  }
  return out;
}

int DatasetManifest::count(Domain d) const {
  switch (d) {
    case Domain::kSource:
      return n_s;
    case Domain::kIntermediate:
      return n_m;
    case Domain::kTarget:
      return n_t;
  }
  return 0;
}

void DatasetManifest::validate() const {
  for (const Domain d : kAllDomains) {
    if (static_cast<int>(split(d).size()) != count(d)) {
      throw DataError("manifest count for domain " + std::string(domain_tag(d)) + " does not match its entries");
    }
  }
  for (const auto& e : entries) {
    if (e.domain == Domain::kSource && (e.label.empty() || e.label_hidden)) {
      throw DataError("source entry " + e.image + " must carry a visible label");
    }
    if (e.domain != Domain::kSource && !e.label.empty() && !e.label_hidden) {
      throw DataError("entry " + e.image + " of an unlabeled domain exposes its label");
    }
  }
}

void to_json(nlohmann::json& j, const StyleParams& p) {
  j = {{"channel_gain", p.channel_gain}, {"channel_bias", p.channel_bias}, {"gamma", p.gamma}, {"hue_rotation", p.hue_rotation}};
}

void from_json(const nlohmann::json& j, StyleParams& p) {
  read_optional(j, "channel_gain", p.channel_gain);
  read_optional(j, "channel_bias", p.channel_bias);
  read_optional(j, "gamma", p.gamma);
  read_optional(j, "hue_rotation", p.hue_rotation);
}

void to_json(nlohmann::json& j, const FogParams& p) {
  j = {{"beta", p.beta},
       {"airlight", p.airlight},
       {"depth_model",
        {{"near_depth", p.depth_model.near_depth},
         {"far_depth", p.depth_model.far_depth},
         {"class_offset", p.depth_model.class_offset}}}};
}

void from_json(const nlohmann::json& j, FogParams& p) {
  read_optional(j, "beta", p.beta);
  read_optional(j, "airlight", p.airlight);
  if (const auto it = j.find("depth_model"); it != j.end()) {
    read_optional(*it, "near_depth", p.depth_model.near_depth);
    read_optional(*it, "far_depth", p.depth_model.far_depth);
    read_optional(*it, "class_offset", p.depth_model.class_offset);
  }
}

void to_json(nlohmann::json& j, const LayoutParams& p) {
  j = {{"horizon_min", p.horizon_min}, {"horizon_max", p.horizon_max}, {"max_buildings", p.max_buildings},
       {"max_trees", p.max_trees},     {"max_vehicles", p.max_vehicles}, {"noise_sigma", p.noise_sigma}};
}

void from_json(const nlohmann::json& j, LayoutParams& p) {
  read_optional(j, "horizon_min", p.horizon_min);
  read_optional(j, "horizon_max", p.horizon_max);
  read_optional(j, "max_buildings", p.max_buildings);
  read_optional(j, "max_trees", p.max_trees);
  read_optional(j, "max_vehicles", p.max_vehicles);
  read_optional(j, "noise_sigma", p.noise_sigma);
}

void to_json(nlohmann::json& j, const DatasetConfig& c) {
  j = {{"height", c.height},           {"width", c.width},   {"num_classes", c.num_classes},
       {"n_s", c.n_s},                 {"n_m", c.n_m},       {"n_t", c.n_t},
       {"seed_s", c.seed_s},           {"seed_m", c.seed_m}, {"seed_t", c.seed_t},
       {"source_style", c.source_style}, {"target_style", c.target_style}, {"fog", c.fog},
       {"layout", c.layout}};
}

void from_json(const nlohmann::json& j, DatasetConfig& c) {
  read_optional(j, "height", c.height);
  read_optional(j, "width", c.width);
  read_optional(j, "num_classes", c.num_classes);
  read_optional(j, "n_s", c.n_s);
  read_optional(j, "n_m", c.n_m);
  read_optional(j, "n_t", c.n_t);
  read_optional(j, "seed_s", c.seed_s);
  read_optional(j, "seed_m", c.seed_m);
  read_optional(j, "seed_t", c.seed_t);
  read_optional(j, "source_style", c.source_style);
  read_optional(j, "target_style", c.target_style);
  read_optional(j, "fog", c.fog);
  read_optional(j, "layout", c.layout);
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json je = {{"image", e.image}, {"domain", std::string(domain_tag(e.domain))}, {"seed", e.seed}};
    je["label"] = e.label.empty() ? nlohmann::json(nullptr) : nlohmann::json(e.label);
    je["label_hidden"] = e.label_hidden;
    entries.push_back(std::move(je));
  }
  j = {{"counts", {{"s", m.n_s}, {"m", m.n_m}, {"t", m.n_t}}}, {"entries", std::move(entries)}, {"config", m.config}};
}

DatasetManifest build_tridomain_dataset(const DatasetConfig& cfg, const std::filesystem::path& root,
                                        const std::optional<nlohmann::json>& config_echo) {
  cfg.validate();
  DatasetManifest manifest;
  manifest.root = root;
  manifest.n_s = cfg.n_s;
  manifest.n_m = cfg.n_m;
  manifest.n_t = cfg.n_t;
  manifest.config = config_echo.value_or(nlohmann::json(cfg));

  for (const Domain d : kAllDomains) {
    const std::string tag(domain_tag(d));
    const char* label_dir = d == Domain::kTarget ? "lbl_hidden" : "lbl";
    for (int i = 0; i < cfg.count(d); ++i) {
      const std::uint64_t seed = cfg.seed_begin(d) + static_cast<std::uint64_t>(i);
      const Scene scene = render_domain_scene(cfg, d, seed);
      std::ostringstream name;
      name << std::setw(4) << std::setfill('0') << i << ".png";
      ManifestEntry entry;
      entry.domain = d;
      entry.seed = seed;
      entry.image = tag + "/img/" + name.str();
      entry.label = tag + "/" + label_dir + "/" + name.str();
      entry.label_hidden = d != Domain::kSource;
      write_png(root / entry.image, scene.image);
      write_png(root / entry.label, scene.labels);
      manifest.entries.push_back(std::move(entry));
    }
  }
  manifest.validate();
  std::ofstream out(root / "manifest.json");
  out << nlohmann::json(manifest).dump(2) << '\n';
  if (!out) throw DataError("cannot write " + (root / "manifest.json").string());
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& root) {
  const auto path = root / "manifest.json";
  std::ifstream in(path);
  if (!in) throw PrerequisiteError("dataset manifest not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.root = root;
  try {
    m.n_s = j.at("counts").at("s").get<int>();
    m.n_m = j.at("counts").at("m").get<int>();
    m.n_t = j.at("counts").at("t").get<int>();
    m.config = j.value("config", nlohmann::json::object());
    for (const auto& je : j.at("entries")) {
      ManifestEntry e;
      e.image = je.at("image").get<std::string>();
      e.domain = parse_domain(je.at("domain").get<std::string>());
      e.seed = je.value("seed", std::uint64_t{0});
      if (je.contains("label") && !je.at("label").is_null()) e.label = je.at("label").get<std::string>();
      e.label_hidden = je.value("label_hidden", false);
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

}  // namespace cudanet
