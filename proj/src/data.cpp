#include "pfnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>

#include "pfnet/error.hpp"
#include "pfnet/image_io.hpp"

namespace pfnet::data {

namespace fs = std::filesystem;

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool coin(Rng& rng) { return std::bernoulli_distribution(0.5)(rng); }

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

void stretch_unit(std::vector<double>& field) {
  const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
  const double a = *lo, span = *hi - *lo;
  for (double& v : field) v = span > 0.0 ? (v - a) / span : 0.5;
}

std::vector<double> value_noise(int h, int w, Rng& rng) {
  constexpr int kOctaves = 4;
  std::vector<double> field(static_cast<std::size_t>(h) * w, 0.0);
  double cell = std::max(2.0, std::min(h, w) / 4.0);
  double amplitude = 1.0;
  for (int o = 0; o < kOctaves; ++o) {
    const int gh = static_cast<int>(std::ceil(h / cell)) + 2;
    const int gw = static_cast<int>(std::ceil(w / cell)) + 2;
    std::vector<double> lattice(static_cast<std::size_t>(gh) * gw);
    for (double& v : lattice) v = uniform(rng, 0.0, 1.0);
    for (int y = 0; y < h; ++y) {
      const double fy = (y + 0.5) / cell;
      const int y0 = static_cast<int>(fy);
      const double ty = smoothstep(fy - y0);
      for (int x = 0; x < w; ++x) {
        const double fx = (x + 0.5) / cell;
        const int x0 = static_cast<int>(fx);
        const double tx = smoothstep(fx - x0);
        const double a = lattice[y0 * gw + x0], b = lattice[y0 * gw + x0 + 1];
        const double c = lattice[(y0 + 1) * gw + x0], d = lattice[(y0 + 1) * gw + x0 + 1];
        const double top = a + (b - a) * tx, bottom = c + (d - c) * tx;
        field[y * w + x] += amplitude * (top + (bottom - top) * ty);
      }
    }
    cell = std::max(1.0, cell / 2.0);
    amplitude *= 0.5;
  }
  stretch_unit(field);
  return field;
}

std::vector<double> gabor_field(int h, int w, Rng& rng) {
  constexpr int kComponents = 3;
  struct Wave {
    double kx, ky, phase, cx, cy, sigma;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < kComponents; ++k) {
    const double theta = uniform(rng, 0.0, std::numbers::pi);
    const double freq = uniform(rng, 0.08, 0.25) * 2.0 * std::numbers::pi;
    waves.push_back({freq * std::cos(theta), freq * std::sin(theta),
                     uniform(rng, 0.0, 2.0 * std::numbers::pi), uniform(rng, 0.0, w),
                     uniform(rng, 0.0, h), uniform(rng, 0.4, 0.8) * std::max(h, w)});
  }
  std::vector<double> field(static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (const Wave& g : waves) {
        const double dx = x - g.cx, dy = y - g.cy;
        const double envelope = std::exp(-(dx * dx + dy * dy) / (2.0 * g.sigma * g.sigma));
        v += envelope * std::cos(g.kx * x + g.ky * y + g.phase);
      }
      field[y * w + x] = v;
    }
  stretch_unit(field);
  return field;
}

std::vector<char> region_mask(const SynthSpec& spec, Rng& rng) {
  const int h = spec.height, w = spec.width;
  const double size = std::min(h, w);
  const double cx = uniform(rng, 0.35, 0.65) * w;
  const double cy = uniform(rng, 0.35, 0.65) * h;
  std::vector<char> mask(static_cast<std::size_t>(h) * w, 0);
  if (spec.region == Region::kEllipse) {
    const double a = uniform(rng, 0.15, 0.3) * size;
    const double b = uniform(rng, 0.15, 0.3) * size;
    const double rot = uniform(rng, 0.0, std::numbers::pi);
    const double c = std::cos(rot), s = std::sin(rot);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double u = (c * dx + s * dy) / a, v = (-s * dx + c * dy) / b;
        mask[y * w + x] = u * u + v * v <= 1.0;
      }
  } else {
    const double r0 = uniform(rng, 0.18, 0.28) * size;
    double amp[3], phase[3];
    for (int k = 0; k < 3; ++k) {
      amp[k] = uniform(rng, 0.0, 0.15);
      phase[k] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double theta = std::atan2(dy, dx);
        double r = 1.0;
        for (int k = 0; k < 3; ++k) r += amp[k] * std::cos((k + 2) * theta + phase[k]);
        mask[y * w + x] = std::hypot(dx, dy) <= r0 * r;
      }
  }
  // The pixel nearest the centre is always part of the object.
  const int px = std::clamp(static_cast<int>(cx), 0, w - 1);
  const int py = std::clamp(static_cast<int>(cy), 0, h - 1);
  mask[py * w + px] = 1;
  return mask;
}

}  // namespace

Texture parse_texture(std::string_view name) {
  if (name == "noise-octaves") return Texture::kNoiseOctaves;
  if (name == "gabor-field") return Texture::kGaborField;
  throw ConfigError("unknown texture '" + std::string(name) + "'");
}

Region parse_region(std::string_view name) {
  if (name == "ellipse") return Region::kEllipse;
  if (name == "smooth-blob") return Region::kSmoothBlob;
  throw ConfigError("unknown shape '" + std::string(name) + "'");
}

std::string to_string(Texture t) {
  return t == Texture::kNoiseOctaves ? "noise-octaves" : "gabor-field";
}

std::string to_string(Region r) { return r == Region::kEllipse ? "ellipse" : "smooth-blob"; }

void SynthSpec::validate() const {
  if (height <= 0 || width <= 0 || height % 32 != 0 || width % 32 != 0) {
    throw ConfigError("synthetic size must be a positive multiple of 32, got " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  if (!(delta >= 0.0 && delta <= 1.0)) {
    throw ConfigError("delta must lie in [0, 1], got " + std::to_string(delta));
  }
}

Perturbation draw_perturbation(double delta, std::mt19937_64& rng) {
  Perturbation p;
  p.contrast = 1.0 + (coin(rng) ? 0.5 : -0.5) * delta;
  p.shift = (coin(rng) ? 0.25 : -0.25) * delta;
  return p;
}

Sample generate_sample(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int h = spec.height, w = spec.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  const std::vector<double> field = spec.texture == Texture::kNoiseOctaves
                                        ? value_noise(h, w, rng)
                                        : gabor_field(h, w, rng);
  double base[3], amp[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = uniform(rng, 0.35, 0.65);
    amp[c] = uniform(rng, 0.4, 0.6);
  }
  const std::vector<char> mask = region_mask(spec, rng);
  const Perturbation pert = draw_perturbation(spec.delta, rng);

  double inside = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < plane; ++i)
    if (mask[i]) {
      inside += field[i];
      ++count;
    }
  const double mean = inside / static_cast<double>(count);

  Sample s;
  s.image = Tensor(Shape{1, 3, h, w});
  s.mask = Tensor(Shape{1, 1, h, w});
  for (std::size_t i = 0; i < plane; ++i) {
    double t = field[i], shift = 0.0;
    if (mask[i]) {
      t = mean + (t - mean) * pert.contrast;
      shift = pert.shift;
      s.mask[i] = 1.0;
    }
    for (int c = 0; c < 3; ++c) {
      s.image[c * plane + i] = std::clamp(base[c] + amp[c] * (t - 0.5) + shift, 0.0, 1.0);
    }
  }
  return s;
}

std::vector<Sample> generate_dataset(const SynthSpec& spec, int count) {
  spec.validate();
  std::vector<Sample> out(static_cast<std::size_t>(std::max(count, 0)));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    SynthSpec item = spec;
    item.seed = spec.seed + static_cast<std::uint64_t>(i);
    out[i] = generate_sample(item);
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%05d", i);
    out[i].name = name;
  }
  return out;
}

// ---- augmentation ---------------------------------------------------------

AugmentParams draw_augment(std::mt19937_64& rng, const AugmentConfig& config) {
  AugmentParams p;
  p.flip = std::bernoulli_distribution(config.flip_probability)(rng);
  const double lo = 1.0 - config.jitter, hi = 1.0 + config.jitter;
  p.brightness = uniform(rng, lo, hi);
  p.contrast = uniform(rng, lo, hi);
  p.saturation = uniform(rng, lo, hi);
  return p;
}

Tensor flip_horizontal(const Tensor& x) {
  const Shape s = x.shape();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* src = x.plane(n, c);
      double* dst = out.plane(n, c);
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx) dst[y * s.w + xx] = src[y * s.w + (s.w - 1 - xx)];
    }
  return out;
}

Sample apply_augment(const Sample& sample, const AugmentParams& params) {
  Sample out;
  out.name = sample.name;
  out.image = params.flip ? flip_horizontal(sample.image) : sample.image;
  out.mask = params.flip ? flip_horizontal(sample.mask) : sample.mask;

  const Shape s = out.image.shape();
  if (s.c != 3) throw DimensionError("augment: expected an RGB image, got " + s.str());
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    double* r = out.image.plane(n, 0);
    double* g = out.image.plane(n, 1);
    double* b = out.image.plane(n, 2);
    auto gray = [&](std::size_t i) { return 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]; };
    // A unit factor leaves the image bit-identical.
    if (params.brightness != 1.0) {
      for (double* ch : {r, g, b})
        for (std::size_t i = 0; i < plane; ++i) {
          ch[i] = std::clamp(ch[i] * params.brightness, 0.0, 1.0);
        }
    }
    if (params.contrast != 1.0) {
      double mean_gray = 0.0;
      for (std::size_t i = 0; i < plane; ++i) mean_gray += gray(i);
      mean_gray /= static_cast<double>(plane);
      for (double* ch : {r, g, b})
        for (std::size_t i = 0; i < plane; ++i) {
          ch[i] = std::clamp(mean_gray + (ch[i] - mean_gray) * params.contrast, 0.0, 1.0);
        }
    }
    if (params.saturation != 1.0) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double y = gray(i);
        r[i] = std::clamp(y + (r[i] - y) * params.saturation, 0.0, 1.0);
        g[i] = std::clamp(y + (g[i] - y) * params.saturation, 0.0, 1.0);
        b[i] = std::clamp(y + (b[i] - y) * params.saturation, 0.0, 1.0);
      }
    }
  }
  return out;
}

Sample augment(const Sample& sample, std::uint64_t seed, const AugmentConfig& config) {
  Rng rng(seed);
  return apply_augment(sample, draw_augment(rng, config));
}

// ---- directories ----------------------------------------------------------

void validate_target_size(int size) {
  if (size <= 0 || size % 32 != 0) {
    throw ConfigError("target size must be a positive multiple of 32, got " +
                      std::to_string(size));
  }
}

LoadResult load_dataset(const std::string& image_dir, const std::string& mask_dir,
                        int target_size) {
  validate_target_size(target_size);
  LoadResult result;
  auto index = [&result](const std::string& dir) {
    std::map<std::string, fs::path> files;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) {
      result.errors.push_back("not a directory: " + dir);
      return files;
    }
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file() || !is_image_file(e.path())) continue;
      const std::string stem = e.path().stem().string();
      if (!files.emplace(stem, e.path()).second) {
        result.errors.push_back("duplicate stem '" + stem + "' in " + dir);
      }
    }
    return files;
  };
  const auto images = index(image_dir);
  const auto masks = index(mask_dir);
  for (const auto& [stem, path] : images) {
    auto it = masks.find(stem);
    if (it == masks.end()) {
      result.errors.push_back(stem + ": no mask in " + mask_dir);
      continue;
    }
    try {
      Sample s;
      s.name = stem;
      s.image = resize_bilinear(read_image_rgb(path.string()), target_size, target_size);
      Tensor mask = binarize_mask(read_image_gray(it->second.string()));
      mask = resize_bilinear(mask, target_size, target_size);
      for (auto& v : mask.values()) v = v >= 0.5 ? 1.0 : 0.0;
      s.mask = std::move(mask);
      result.samples.push_back(std::move(s));
    } catch (const std::exception& e) {
      result.errors.push_back(stem + ": " + e.what());
    }
  }
  for (const auto& [stem, path] : masks) {
    if (!images.count(stem)) result.errors.push_back(stem + ": no image in " + image_dir);
  }
  return result;
}

LoadResult load_dataset(const std::string& root, int target_size) {
  return load_dataset((fs::path(root) / "images").string(), (fs::path(root) / "masks").string(),
                      target_size);
}

void write_dataset(const std::string& root, const std::vector<Sample>& samples) {
  const fs::path images = fs::path(root) / "images";
  const fs::path masks = fs::path(root) / "masks";
  fs::create_directories(images);
  fs::create_directories(masks);
  for (const Sample& s : samples) {
    write_png_rgb((images / (s.name + ".png")).string(), s.image);
    write_png_gray((masks / (s.name + ".png")).string(), s.mask);
  }
}

}  // namespace pfnet::data
