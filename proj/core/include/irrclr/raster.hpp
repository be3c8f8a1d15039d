#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "irrclr/errors.hpp"
#include "irrclr/tensor.hpp"

namespace irrclr {

// The ten Sentinel-2 bands kept after dropping the 60 m atmospheric ones.
// 20 m bands are upsampled to the 10 m grid at ingestion.
enum class Band : std::uint8_t { B02, B03, B04, B05, B06, B07, B08, B8A, B11, B12 };

inline constexpr int kBandCount = 10;

struct BandInfo {
  Band band;
  const char* code;
  int native_resolution_m;
};

const std::array<BandInfo, kBandCount>& band_registry();
const char* band_code(Band b);
std::optional<Band> band_from_code(std::string_view code);
std::vector<Band> all_bands();

struct BadMagic : ValidationError { using ValidationError::ValidationError; };
struct UnsupportedVersion : ValidationError { using ValidationError::ValidationError; };
struct TruncatedPayload : ValidationError { using ValidationError::ValidationError; };
struct TrailingBytes : ValidationError { using ValidationError::ValidationError; };
struct UnknownBand : ValidationError { using ValidationError::ValidationError; };
struct DuplicateBand : ValidationError { using ValidationError::ValidationError; };
struct NonFiniteValue : ValidationError { using ValidationError::ValidationError; };
struct BadDimensions : ValidationError { using ValidationError::ValidationError; };
struct ZeroDimension : ValidationError { using ValidationError::ValidationError; };
struct MissingBandStats : ValidationError { using ValidationError::ValidationError; };
struct EmptyManifest : ValidationError { using ValidationError::ValidationError; };
struct InconsistentBands : ValidationError { using ValidationError::ValidationError; };
struct OddLabeledCount : ValidationError { using ValidationError::ValidationError; };
struct BadManifestLine : ValidationError { using ValidationError::ValidationError; };

// Scaled surface reflectance, row-major [band][row][col].
struct MultispectralChip {
  int height = 0;
  int width = 0;
  std::vector<Band> bands;
  std::vector<float> data;

  static MultispectralChip zeros(int height, int width, std::vector<Band> bands);

  std::int64_t plane_size() const { return std::int64_t(height) * width; }
  std::span<const float> plane(int band_index) const;
  std::span<float> plane(int band_index);
  std::optional<int> band_index(Band b) const;

  // Throws if any invariant is broken (dims, duplicate bands, non-finite
  // values, data length).
  void validate() const;
};

// MSC1 chip file:
//   "MSC1" | version u8=1 | band count u8 | height u16 LE | width u16 LE |
//   band codes (4-byte ASCII, space padded) | payload float32 LE [band][row][col]
std::vector<std::uint8_t> write_chip(const MultispectralChip& chip);
MultispectralChip read_chip(std::span<const std::uint8_t> bytes);
MultispectralChip load_chip(const std::filesystem::path& path);
void store_chip(const std::filesystem::path& path, const MultispectralChip& chip);

// Corner-aligned bilinear resampling: source corner pixels map exactly to
// target corner pixels. Output range is bounded by the input range.
std::vector<float> resample_band(const std::vector<float>& src, int src_h, int src_w,
                                 int dst_h, int dst_w);

struct BandStats {
  std::vector<Band> bands;
  std::vector<double> mean;
  std::vector<double> stddev;  // population std, clamped to >= 1e-8

  std::optional<int> index_of(Band b) const;
};

MultispectralChip normalize_chip(const MultispectralChip& chip, const BandStats& stats);
MultispectralChip denormalize_chip(const MultispectralChip& chip, const BandStats& stats);

void write_band_stats(const std::filesystem::path& path, const BandStats& stats);
BandStats read_band_stats(const std::filesystem::path& path);

enum class SplitTag { Train, Holdout, UnlabeledPool };

std::string split_tag_name(SplitTag tag);
std::optional<SplitTag> split_tag_from_name(std::string_view name);

struct ManifestEntry {
  std::string chip_path;
  std::optional<bool> irrigated;
  std::optional<std::string> region;
  std::optional<SplitTag> split;
};

// Manifest file: one record per line, tab separated:
//   path <TAB> label ("1"/"0"/"-") <TAB> region (or "-") <TAB> split (or "-")
struct DatasetManifest {
  std::filesystem::path base_dir;  // chip paths resolve against this
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const ManifestEntry& e) const { return base_dir / e.chip_path; }
  void validate() const;  // unique paths
};

std::string format_manifest_entry(const ManifestEntry& e);
ManifestEntry parse_manifest_entry(std::string_view line);
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

BandStats compute_band_stats(const DatasetManifest& manifest);

struct SyntheticConfig {
  std::uint64_t seed = 0;
  int n_unlabeled = 0;
  int n_labeled = 0;
  int chip_size = 32;
  double class_signal = 0.6;
};

// Writes chip files under out_dir/chips and a manifest.tsv next to them.
// Irrigated chips carry a striped rectangular field in B08/B11/B12 scaled
// by class_signal, on top of a per-chip brightness factor and correlated
// background noise shared by both classes. Fully determined by (seed,
// parameters). Labeled entries carry round-robin region tags.
DatasetManifest generate_synthetic_dataset(const SyntheticConfig& cfg,
                                           const std::filesystem::path& out_dir);

// (bands, height, width) tensor of raw chip values.
TensorF chip_to_tensor(const MultispectralChip& chip);

}  // namespace irrclr
