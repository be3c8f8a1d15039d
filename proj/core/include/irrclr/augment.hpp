#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "irrclr/raster.hpp"
#include "irrclr/rng.hpp"

namespace irrclr {

struct SpecOutOfRange : ValidationError { using ValidationError::ValidationError; };
struct BadSpecString : ValidationError { using ValidationError::ValidationError; };

enum class TransformKind {
  CropResize,      // frac in [0.6,1.0]; oy,ox in [0,1] (fraction of slack)
  FlipH,
  FlipV,
  Rotate90,        // k in {1,2,3} quarter turns
  BandBrightness,  // scale in [0.8,1.2], uniform across bands
  BandContrast,    // factor in [0.8,1.2] around each band's mean
  GaussianNoise,   // sigma in [0,0.05]; key_hi/key_lo seed the noise field
  GaussianBlur,    // 3x3 kernel, sigma in [0.5,1.5]
  Cutout,          // square side frac in (0,0.25], filled with band means
};

const char* transform_kind_name(TransformKind kind);

struct TransformStep {
  TransformKind kind;
  std::vector<std::pair<std::string, double>> params;

  double param(std::string_view name) const;
  bool has_param(std::string_view name) const;
};

// Serializes to "kind:a=1,b=2|kind:c=3" for logging and replay.
struct AugmentationSpec {
  std::vector<TransformStep> steps;

  std::string to_string() const;
  static AugmentationSpec parse(std::string_view text);
  void validate() const;  // SpecOutOfRange on any out-of-range parameter
};

// Stream key for one augmented view: (stage, epoch, sample, view) fully
// determine every draw.
struct AugmentationRng {
  std::uint64_t seed = 0;
  std::string stage = "pretrain";
  std::int64_t epoch = 0;
  std::int64_t sample_index = 0;
  int view_index = 0;

  rng::Stream stream() const;
};

// One geometric transform followed by one photometric transform.
AugmentationSpec sample_augmentation(const AugmentationRng& key);

// The two views of one sample: view indices 0 and 1 of the same
// (stage, epoch, sample) key.
std::pair<AugmentationSpec, AugmentationSpec> sample_augmentation_pair(const AugmentationRng& key);

// Geometric steps move all bands identically; photometric steps apply the
// same scale everywhere. Output has the chip's size and band registry.
MultispectralChip apply_augmentation(const MultispectralChip& chip, const AugmentationSpec& spec);

}  // namespace irrclr
