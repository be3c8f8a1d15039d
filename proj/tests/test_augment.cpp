#include <doctest.h>

#include <map>

#include "irrclr/augment.hpp"
#include "irrclr/rng.hpp"
#include "oracles.hpp"

using namespace irrclr;

namespace {

MultispectralChip random_chip(int size, std::uint64_t key) {
  auto chip = MultispectralChip::zeros(size, size, all_bands());
  rng::Stream s(key);
  for (auto& v : chip.data) v = static_cast<float>(s.uniform(0.0, 1.5));
  return chip;
}

AugmentationSpec single(TransformKind kind,
                        std::vector<std::pair<std::string, double>> params = {}) {
  AugmentationSpec spec;
  spec.steps.push_back({kind, std::move(params)});
  return spec;
}

}  // namespace

TEST_CASE("sampling is deterministic per key and views are independent") {
  AugmentationRng key{42, "pretrain", 3, 17, 0};
  auto [a1, b1] = sample_augmentation_pair(key);
  auto [a2, b2] = sample_augmentation_pair(key);
  CHECK(a1.to_string() == a2.to_string());
  CHECK(b1.to_string() == b2.to_string());

  int differing = 0;
  for (int i = 0; i < 1000; ++i) {
    AugmentationRng k{7, "pretrain", 0, i, 0};
    auto [va, vb] = sample_augmentation_pair(k);
    if (va.to_string() != vb.to_string()) ++differing;
  }
  CHECK(differing >= 990);
}

TEST_CASE("sampled pairs are geometric+photometric with uniform geometric picks") {
  std::map<std::string, int> kind_count;
  std::map<std::string, int> geo_count;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    AugmentationRng key{11, "freq", 0, i, 0};
    auto spec = sample_augmentation(key);
    REQUIRE(spec.steps.size() == 2);
    spec.validate();
    kind_count[transform_kind_name(spec.steps[0].kind)]++;
    kind_count[transform_kind_name(spec.steps[1].kind)]++;
    geo_count[transform_kind_name(spec.steps[0].kind)]++;
  }
  // every registry kind appears
  for (const char* kind : {"crop_resize", "flip_h", "flip_v", "rotate90", "band_brightness",
                           "band_contrast", "gaussian_noise", "gaussian_blur", "cutout"}) {
    CHECK(kind_count[kind] > 0);
  }
  // chi^2 over the 4 geometric kinds, 3 dof; p > 0.01 means chi2 < 11.345
  double chi2 = 0.0;
  for (const char* kind : {"crop_resize", "flip_h", "flip_v", "rotate90"}) {
    const double expected = n / 4.0;
    const double d = geo_count[kind] - expected;
    chi2 += d * d / expected;
  }
  CHECK(chi2 < 11.345);
}

TEST_CASE("spec string round-trips") {
  AugmentationRng key{5, "roundtrip", 1, 2, 1};
  for (int i = 0; i < 50; ++i) {
    key.sample_index = i;
    auto spec = sample_augmentation(key);
    auto back = AugmentationSpec::parse(spec.to_string());
    CHECK(back.to_string() == spec.to_string());
  }
  CHECK_THROWS_AS(AugmentationSpec::parse("nonsense:a=1"), BadSpecString);
  CHECK_THROWS_AS(AugmentationSpec::parse(""), BadSpecString);
}

TEST_CASE("involutions and identities act exactly") {
  auto chip = random_chip(16, rng::derive(1, "aug"));

  auto flipped = apply_augmentation(apply_augmentation(chip, single(TransformKind::FlipH)),
                                    single(TransformKind::FlipH));
  CHECK(flipped.data == chip.data);

  auto vflip = apply_augmentation(apply_augmentation(chip, single(TransformKind::FlipV)),
                                  single(TransformKind::FlipV));
  CHECK(vflip.data == chip.data);

  auto once = single(TransformKind::Rotate90, {{"k", 1.0}});
  auto r = chip;
  for (int i = 0; i < 4; ++i) r = apply_augmentation(r, once);
  CHECK(r.data == chip.data);

  auto identity_crop = apply_augmentation(
      chip, single(TransformKind::CropResize, {{"frac", 1.0}, {"oy", 0.0}, {"ox", 0.0}}));
  CHECK(identity_crop.data == chip.data);
}

TEST_CASE("gaussian noise equals the oracle-regenerated field exactly") {
  auto chip = random_chip(12, rng::derive(2, "noise"));
  const std::uint64_t key = 0x1234567890abcdefull;
  auto spec = single(TransformKind::GaussianNoise,
                     {{"sigma", 0.05},
                      {"key_hi", double(key >> 32)},
                      {"key_lo", double(key & 0xffffffffull)}});
  auto out = apply_augmentation(chip, spec);

  rng::Stream stream(key);
  for (std::size_t i = 0; i < chip.data.size(); ++i) {
    const float expected = static_cast<float>(chip.data[i] + 0.05 * stream.normal());
    CHECK(out.data[i] == expected);
  }
}

TEST_CASE("every sampled spec preserves shape, bands and finiteness") {
  auto chip = random_chip(16, rng::derive(3, "prop"));
  for (int i = 0; i < 60; ++i) {
    AugmentationRng key{13, "prop", 0, i, 0};
    auto spec = sample_augmentation(key);
    auto out = apply_augmentation(chip, spec);
    CHECK(out.height == chip.height);
    CHECK(out.width == chip.width);
    CHECK(out.bands == chip.bands);
    out.validate();  // includes finiteness

    auto again = apply_augmentation(chip, spec);
    CHECK(again.data == out.data);  // (chip, spec) fully determine the output
  }
}

TEST_CASE("geometric transforms commute with band extraction") {
  auto chip = random_chip(12, rng::derive(4, "commute"));
  const std::vector<AugmentationSpec> specs = {
      single(TransformKind::FlipH),
      single(TransformKind::FlipV),
      single(TransformKind::Rotate90, {{"k", 3.0}}),
      single(TransformKind::CropResize, {{"frac", 0.7}, {"oy", 0.35}, {"ox", 0.9}}),
  };
  for (const auto& spec : specs) {
    auto whole = apply_augmentation(chip, spec);
    for (int b = 0; b < kBandCount; ++b) {
      MultispectralChip one = MultispectralChip::zeros(12, 12, {chip.bands[b]});
      auto plane = chip.plane(b);
      std::copy(plane.begin(), plane.end(), one.data.begin());
      auto one_aug = apply_augmentation(one, spec);
      auto whole_plane = whole.plane(b);
      for (std::size_t i = 0; i < one_aug.data.size(); ++i) {
        CHECK(one_aug.data[i] == whole_plane[i]);
      }
    }
  }
}

TEST_CASE("photometric arithmetic: brightness, contrast, cutout fill") {
  auto chip = random_chip(8, rng::derive(5, "photo"));

  auto bright = apply_augmentation(chip, single(TransformKind::BandBrightness, {{"scale", 1.2}}));
  for (std::size_t i = 0; i < chip.data.size(); ++i) {
    CHECK(bright.data[i] == doctest::Approx(chip.data[i] * 1.2f));
  }

  auto contrast = apply_augmentation(chip, single(TransformKind::BandContrast, {{"factor", 0.8}}));
  for (int b = 0; b < kBandCount; ++b) {
    auto plane = chip.plane(b);
    double mean = 0.0;
    for (float v : plane) mean += v;
    mean /= double(plane.size());
    auto out_plane = contrast.plane(b);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      CHECK(out_plane[i] == doctest::Approx(mean + 0.8 * (plane[i] - mean)).epsilon(1e-5));
    }
  }

  auto cut = apply_augmentation(
      chip, single(TransformKind::Cutout, {{"frac", 0.25}, {"cy", 0.0}, {"cx", 0.0}}));
  for (int b = 0; b < kBandCount; ++b) {
    auto plane = chip.plane(b);
    double mean = 0.0;
    for (float v : plane) mean += v;
    const float fill = static_cast<float>(mean / double(plane.size()));
    CHECK(cut.plane(b)[0] == fill);
    CHECK(cut.plane(b)[1] == fill);
  }
}

TEST_CASE("out-of-range parameters are rejected") {
  auto chip = random_chip(8, rng::derive(6, "range"));
  CHECK_THROWS_AS(apply_augmentation(chip, single(TransformKind::CropResize,
                                                  {{"frac", 0.5}, {"oy", 0.0}, {"ox", 0.0}})),
                  SpecOutOfRange);
  CHECK_THROWS_AS(
      apply_augmentation(chip, single(TransformKind::BandBrightness, {{"scale", 1.5}})),
      SpecOutOfRange);
  CHECK_THROWS_AS(apply_augmentation(chip, single(TransformKind::Rotate90, {{"k", 4.0}})),
                  SpecOutOfRange);
  CHECK_THROWS_AS(apply_augmentation(chip, AugmentationSpec{}), SpecOutOfRange);
}
