#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pfnet/tensor.hpp"

namespace pfnet::data {

enum class Texture { kNoiseOctaves, kGaborField };
enum class Region { kEllipse, kSmoothBlob };

Texture parse_texture(std::string_view name);
Region parse_region(std::string_view name);
std::string to_string(Texture t);
std::string to_string(Region r);

/// Synthetic camouflage scene. `delta` in [0, 1] scales how far the object's
/// texture departs from the background (0: invisible).
struct SynthSpec {
  int height = 64;
  int width = 64;
  Texture texture = Texture::kNoiseOctaves;
  double delta = 0.4;
  Region region = Region::kSmoothBlob;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless H, W are positive multiples of 32 and
  /// delta lies in [0, 1].
  void validate() const;
};

/// An RGB image (1, 3, H, W) in [0, 1] and its binary mask (1, 1, H, W).
struct Sample {
  std::string name;
  Tensor image;
  Tensor mask;
};

Sample generate_sample(const SynthSpec& spec);

/// Mean-centred contrast (1 +- delta/2) and luminance shift (+- delta/4)
/// applied to the texture field inside the mask; signs come from `rng`.
struct Perturbation {
  double contrast = 1.0;
  double shift = 0.0;
};
Perturbation draw_perturbation(double delta, std::mt19937_64& rng);

/// `count` samples; sample i uses seed spec.seed + i and is named
/// "synth_<i>" zero-padded to five digits.
std::vector<Sample> generate_dataset(const SynthSpec& spec, int count);

// ---- augmentation ---------------------------------------------------------

struct AugmentConfig {
  double flip_probability = 0.5;
  /// Brightness, contrast and saturation factors are drawn from
  /// [1 - jitter, 1 + jitter].
  double jitter = 0.1;
};

struct AugmentParams {
  bool flip = false;
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
};

AugmentParams draw_augment(std::mt19937_64& rng, const AugmentConfig& config = {});

/// Horizontal flip of image and mask, then brightness, contrast (about the
/// mean gray level) and saturation (about per-pixel gray) on the image only.
/// Results are clipped to [0, 1].
Sample apply_augment(const Sample& sample, const AugmentParams& params);

/// Flip only, for testing the involution.
Tensor flip_horizontal(const Tensor& x);

Sample augment(const Sample& sample, std::uint64_t seed, const AugmentConfig& config = {});

// ---- directories ----------------------------------------------------------

struct LoadResult {
  std::vector<Sample> samples;
  /// Unpaired or unreadable files; these are skipped.
  std::vector<std::string> errors;
};

/// Throws ConfigError unless `size` is a positive multiple of 32.
void validate_target_size(int size);

/// Pairs image and mask files by stem (sorted). Images are resized
/// bilinearly to size x size; masks are resized then thresholded at 0.5.
LoadResult load_dataset(const std::string& image_dir, const std::string& mask_dir,
                        int target_size);

/// `root/images` and `root/masks`.
LoadResult load_dataset(const std::string& root, int target_size);

/// Writes root/images/<name>.png and root/masks/<name>.png.
void write_dataset(const std::string& root, const std::vector<Sample>& samples);

}  // namespace pfnet::data
