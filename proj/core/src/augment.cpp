#include "irrclr/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace irrclr {

const char* transform_kind_name(TransformKind kind) {
  switch (kind) {
    case TransformKind::CropResize: return "crop_resize";
    case TransformKind::FlipH: return "flip_h";
    case TransformKind::FlipV: return "flip_v";
    case TransformKind::Rotate90: return "rotate90";
    case TransformKind::BandBrightness: return "band_brightness";
    case TransformKind::BandContrast: return "band_contrast";
    case TransformKind::GaussianNoise: return "gaussian_noise";
    case TransformKind::GaussianBlur: return "gaussian_blur";
    case TransformKind::Cutout: return "cutout";
  }
  return "?";
}

namespace {

std::optional<TransformKind> kind_from_name(std::string_view name) {
  static const TransformKind kinds[] = {
      TransformKind::CropResize, TransformKind::FlipH,          TransformKind::FlipV,
      TransformKind::Rotate90,   TransformKind::BandBrightness, TransformKind::BandContrast,
      TransformKind::GaussianNoise, TransformKind::GaussianBlur, TransformKind::Cutout};
  for (TransformKind k : kinds) {
    if (name == transform_kind_name(k)) return k;
  }
  return std::nullopt;
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_range(const TransformStep& s, std::string_view name, double lo, double hi) {
  double v = s.param(name);
  if (!(v >= lo && v <= hi)) {
    throw SpecOutOfRange(std::string(transform_kind_name(s.kind)) + ": " + std::string(name) +
                         "=" + format_value(v) + " outside [" + format_value(lo) + ", " +
                         format_value(hi) + "]");
  }
}

}  // namespace

double TransformStep::param(std::string_view name) const {
  for (const auto& [k, v] : params) {
    if (k == name) return v;
  }
  throw BadSpecString(std::string(transform_kind_name(kind)) + ": missing parameter '" +
                      std::string(name) + "'");
}

bool TransformStep::has_param(std::string_view name) const {
  for (const auto& [k, v] : params) {
    if (k == name) return true;
  }
  return false;
}

std::string AugmentationSpec::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) out += '|';
    out += transform_kind_name(steps[i].kind);
    for (std::size_t j = 0; j < steps[i].params.size(); ++j) {
      out += j == 0 ? ":" : ",";
      out += steps[i].params[j].first;
      out += '=';
      out += format_value(steps[i].params[j].second);
    }
  }
  return out;
}

AugmentationSpec AugmentationSpec::parse(std::string_view text) {
  AugmentationSpec spec;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t bar = text.find('|', pos);
    std::string_view step_text = text.substr(pos, bar == std::string_view::npos ? text.size() - pos
                                                                                : bar - pos);
    if (step_text.empty()) throw BadSpecString("augmentation spec: empty step");

    TransformStep step;
    std::size_t colon = step_text.find(':');
    std::string_view kind_name = step_text.substr(0, colon);
    auto kind = kind_from_name(kind_name);
    if (!kind) throw BadSpecString("augmentation spec: unknown kind '" + std::string(kind_name) + "'");
    step.kind = *kind;

    if (colon != std::string_view::npos) {
      std::string_view rest = step_text.substr(colon + 1);
      std::size_t p = 0;
      while (p <= rest.size()) {
        std::size_t comma = rest.find(',', p);
        std::string_view kv =
            rest.substr(p, comma == std::string_view::npos ? rest.size() - p : comma - p);
        std::size_t eq = kv.find('=');
        if (eq == std::string_view::npos) {
          throw BadSpecString("augmentation spec: bad parameter '" + std::string(kv) + "'");
        }
        std::string key(kv.substr(0, eq));
        std::string val(kv.substr(eq + 1));
        char* end = nullptr;
        double d = std::strtod(val.c_str(), &end);
        if (end == val.c_str() || *end != '\0') {
          throw BadSpecString("augmentation spec: bad number '" + val + "'");
        }
        step.params.emplace_back(std::move(key), d);
        if (comma == std::string_view::npos) break;
        p = comma + 1;
      }
    }
    spec.steps.push_back(std::move(step));
    if (bar == std::string_view::npos) break;
    pos = bar + 1;
  }
  if (spec.steps.empty()) throw BadSpecString("augmentation spec: no steps");
  return spec;
}

void AugmentationSpec::validate() const {
  if (steps.empty()) throw SpecOutOfRange("augmentation spec: no steps");
  for (const auto& s : steps) {
    switch (s.kind) {
      case TransformKind::CropResize:
        check_range(s, "frac", 0.6, 1.0);
        check_range(s, "oy", 0.0, 1.0);
        check_range(s, "ox", 0.0, 1.0);
        break;
      case TransformKind::FlipH:
      case TransformKind::FlipV:
        break;
      case TransformKind::Rotate90: {
        double k = s.param("k");
        if (k != 1.0 && k != 2.0 && k != 3.0) {
          throw SpecOutOfRange("rotate90: k must be 1, 2 or 3");
        }
        break;
      }
      case TransformKind::BandBrightness:
        check_range(s, "scale", 0.8, 1.2);
        break;
      case TransformKind::BandContrast:
        check_range(s, "factor", 0.8, 1.2);
        break;
      case TransformKind::GaussianNoise:
        check_range(s, "sigma", 0.0, 0.05);
        s.param("key_hi");
        s.param("key_lo");
        break;
      case TransformKind::GaussianBlur:
        check_range(s, "sigma", 0.5, 1.5);
        break;
      case TransformKind::Cutout:
        check_range(s, "frac", 0.0, 0.25);
        if (s.param("frac") <= 0.0) throw SpecOutOfRange("cutout: frac must be positive");
        check_range(s, "cy", 0.0, 1.0);
        check_range(s, "cx", 0.0, 1.0);
        break;
    }
  }
}

rng::Stream AugmentationRng::stream() const {
  return rng::Stream(rng::derive(seed, "augment", stage, std::uint64_t(epoch),
                                 std::uint64_t(sample_index), std::uint64_t(view_index)));
}

namespace {

TransformStep sample_geometric(rng::Stream& s) {
  TransformStep step;
  switch (s.below(4)) {
    case 0: {
      step.kind = TransformKind::CropResize;
      step.params = {{"frac", s.uniform(0.6, 1.0)}, {"oy", s.uniform()}, {"ox", s.uniform()}};
      break;
    }
    case 1:
      step.kind = TransformKind::FlipH;
      break;
    case 2:
      step.kind = TransformKind::FlipV;
      break;
    default: {
      step.kind = TransformKind::Rotate90;
      step.params = {{"k", double(1 + s.below(3))}};
      break;
    }
  }
  return step;
}

TransformStep sample_photometric(rng::Stream& s) {
  TransformStep step;
  switch (s.below(5)) {
    case 0:
      step.kind = TransformKind::BandBrightness;
      step.params = {{"scale", s.uniform(0.8, 1.2)}};
      break;
    case 1:
      step.kind = TransformKind::BandContrast;
      step.params = {{"factor", s.uniform(0.8, 1.2)}};
      break;
    case 2: {
      step.kind = TransformKind::GaussianNoise;
      std::uint64_t key = s.next_u64();
      step.params = {{"sigma", s.uniform(0.0, 0.05)},
                     {"key_hi", double(key >> 32)},
                     {"key_lo", double(key & 0xffffffffull)}};
      break;
    }
    case 3:
      step.kind = TransformKind::GaussianBlur;
      step.params = {{"sigma", s.uniform(0.5, 1.5)}};
      break;
    default:
      step.kind = TransformKind::Cutout;
      step.params = {{"frac", s.uniform(0.1, 0.25)}, {"cy", s.uniform()}, {"cx", s.uniform()}};
      break;
  }
  return step;
}

}  // namespace

AugmentationSpec sample_augmentation(const AugmentationRng& key) {
  auto s = key.stream();
  AugmentationSpec spec;
  spec.steps.push_back(sample_geometric(s));
  spec.steps.push_back(sample_photometric(s));
  return spec;
}

std::pair<AugmentationSpec, AugmentationSpec> sample_augmentation_pair(const AugmentationRng& key) {
  AugmentationRng a = key;
  a.view_index = 0;
  AugmentationRng b = key;
  b.view_index = 1;
  return {sample_augmentation(a), sample_augmentation(b)};
}

namespace {

using Plane = std::vector<float>;

void apply_crop_resize(MultispectralChip& chip, const TransformStep& s) {
  const int h = chip.height, w = chip.width;
  const double frac = s.param("frac");
  const int ch = std::max(1, static_cast<int>(std::round(frac * h)));
  const int cw = std::max(1, static_cast<int>(std::round(frac * w)));
  const int oy = static_cast<int>(std::round(s.param("oy") * (h - ch)));
  const int ox = static_cast<int>(std::round(s.param("ox") * (w - cw)));
  if (ch == h && cw == w) return;  // identity crop
  for (std::size_t bi = 0; bi < chip.bands.size(); ++bi) {
    auto plane = chip.plane(static_cast<int>(bi));
    Plane crop(std::size_t(ch) * cw);
    for (int y = 0; y < ch; ++y) {
      std::memcpy(crop.data() + std::size_t(y) * cw, plane.data() + std::size_t(y + oy) * w + ox,
                  sizeof(float) * std::size_t(cw));
    }
    Plane resized = resample_band(crop, ch, cw, h, w);
    std::copy(resized.begin(), resized.end(), plane.begin());
  }
}

void apply_flip(MultispectralChip& chip, bool horizontal) {
  const int h = chip.height, w = chip.width;
  for (std::size_t bi = 0; bi < chip.bands.size(); ++bi) {
    auto plane = chip.plane(static_cast<int>(bi));
    if (horizontal) {
      for (int y = 0; y < h; ++y) {
        float* row = plane.data() + std::size_t(y) * w;
        std::reverse(row, row + w);
      }
    } else {
      for (int y = 0; y < h / 2; ++y) {
        float* a = plane.data() + std::size_t(y) * w;
        float* b = plane.data() + std::size_t(h - 1 - y) * w;
        std::swap_ranges(a, a + w, b);
      }
    }
  }
}

void apply_rotate90(MultispectralChip& chip, int k) {
  const int h = chip.height, w = chip.width;
  if (h != w) throw SpecOutOfRange("rotate90: chip must be square");
  for (int turn = 0; turn < k; ++turn) {
    for (std::size_t bi = 0; bi < chip.bands.size(); ++bi) {
      auto plane = chip.plane(static_cast<int>(bi));
      Plane src(plane.begin(), plane.end());
      // counter-clockwise quarter turn
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          plane[std::size_t(y) * w + x] = src[std::size_t(x) * w + (w - 1 - y)];
        }
      }
    }
  }
}

void apply_brightness(MultispectralChip& chip, double scale) {
  for (float& v : chip.data) v = static_cast<float>(v * scale);
}

void apply_contrast(MultispectralChip& chip, double factor) {
  for (std::size_t bi = 0; bi < chip.bands.size(); ++bi) {
    auto plane = chip.plane(static_cast<int>(bi));
    double acc = 0.0;
    for (float v : plane) acc += v;
    const double mean = acc / double(plane.size());
    for (float& v : plane) v = static_cast<float>(mean + factor * (v - mean));
  }
}

void apply_noise(MultispectralChip& chip, const TransformStep& s) {
  const double sigma = s.param("sigma");
  std::uint64_t key = (std::uint64_t(s.param("key_hi")) << 32) | std::uint64_t(s.param("key_lo"));
  rng::Stream stream(key);
  for (float& v : chip.data) {
    v = static_cast<float>(v + sigma * stream.normal());
  }
}

void apply_blur(MultispectralChip& chip, double sigma) {
  double k[3];
  k[0] = std::exp(-1.0 / (2.0 * sigma * sigma));
  k[1] = 1.0;
  k[2] = k[0];
  const double norm = k[0] + k[1] + k[2];
  for (double& v : k) v /= norm;

  const int h = chip.height, w = chip.width;
  Plane tmp(std::size_t(h) * w);
  for (std::size_t bi = 0; bi < chip.bands.size(); ++bi) {
    auto plane = chip.plane(static_cast<int>(bi));
    // separable 3x3, replicated borders
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int d = -1; d <= 1; ++d) {
          int xx = std::clamp(x + d, 0, w - 1);
          acc += k[d + 1] * plane[std::size_t(y) * w + xx];
        }
        tmp[std::size_t(y) * w + x] = static_cast<float>(acc);
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int d = -1; d <= 1; ++d) {
          int yy = std::clamp(y + d, 0, h - 1);
          acc += k[d + 1] * tmp[std::size_t(yy) * w + x];
        }
        plane[std::size_t(y) * w + x] = static_cast<float>(acc);
      }
    }
  }
}

void apply_cutout(MultispectralChip& chip, const TransformStep& s) {
  const int h = chip.height, w = chip.width;
  const int side = std::max(1, static_cast<int>(std::round(s.param("frac") * std::min(h, w))));
  const int y0 = static_cast<int>(std::round(s.param("cy") * (h - side)));
  const int x0 = static_cast<int>(std::round(s.param("cx") * (w - side)));
  for (std::size_t bi = 0; bi < chip.bands.size(); ++bi) {
    auto plane = chip.plane(static_cast<int>(bi));
    double acc = 0.0;
    for (float v : plane) acc += v;
    const float fill = static_cast<float>(acc / double(plane.size()));
    for (int y = y0; y < y0 + side; ++y) {
      for (int x = x0; x < x0 + side; ++x) {
        plane[std::size_t(y) * w + x] = fill;
      }
    }
  }
}

}  // namespace

MultispectralChip apply_augmentation(const MultispectralChip& chip, const AugmentationSpec& spec) {
  spec.validate();
  MultispectralChip out = chip;
  for (const auto& step : spec.steps) {
    switch (step.kind) {
      case TransformKind::CropResize: apply_crop_resize(out, step); break;
      case TransformKind::FlipH: apply_flip(out, true); break;
      case TransformKind::FlipV: apply_flip(out, false); break;
      case TransformKind::Rotate90: apply_rotate90(out, static_cast<int>(step.param("k"))); break;
      case TransformKind::BandBrightness: apply_brightness(out, step.param("scale")); break;
      case TransformKind::BandContrast: apply_contrast(out, step.param("factor")); break;
      case TransformKind::GaussianNoise: apply_noise(out, step); break;
      case TransformKind::GaussianBlur: apply_blur(out, step.param("sigma")); break;
      case TransformKind::Cutout: apply_cutout(out, step); break;
    }
  }
  return out;
}

}  // namespace irrclr
