#include "wsss/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "wsss/error.hpp"
#include "wsss/image_io.hpp"

namespace wsss {

void CrfConfig::validate() const {
  if (iterations < 1) throw ConfigError("crf iterations must be >= 1");
  if (!(spatial_sigma > 0 && bilateral_spatial_sigma > 0 && bilateral_color_sigma > 0)) {
    throw ConfigError("crf kernel widths must be positive");
  }
  if (spatial_weight < 0 || bilateral_weight < 0) {
    throw ConfigError("crf kernel weights must be non-negative");
  }
}

Tensor upsample_bilinear(const Tensor& grid, std::size_t height, std::size_t width) {
  if (grid.rank() != 3) throw ShapeError("upsample_bilinear: expected [g x g x C] grid");
  if (height == 0 || width == 0) {
    throw ShapeError("upsample_bilinear: zero target size");
  }
  const std::size_t gr = grid.dim(0), gc = grid.dim(1), ch = grid.dim(2);
  const auto src = grid.values();
  struct Tap {
    std::size_t i0, i1;
    double t;
  };
  auto taps = [](std::size_t out, std::size_t in) {
    std::vector<Tap> v(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      double c = (static_cast<double>(i) + 0.5) * ratio - 0.5;
      c = std::clamp(c, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(c));
      v[i] = {i0, std::min(i0 + 1, in - 1), c - static_cast<double>(i0)};
    }
    return v;
  };
  const auto ty = taps(height, gr), tx = taps(width, gc);
  std::vector<double> out(height * width * ch);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const Tap& a = ty[y];
      const Tap& b = tx[x];
      for (std::size_t c = 0; c < ch; ++c) {
        const double v00 = src[(a.i0 * gc + b.i0) * ch + c];
        const double v01 = src[(a.i0 * gc + b.i1) * ch + c];
        const double v10 = src[(a.i1 * gc + b.i0) * ch + c];
        const double v11 = src[(a.i1 * gc + b.i1) * ch + c];
        // Equal neighbours short-circuit so constants survive exactly.
        const double top = v00 == v01 ? v00 : v00 * (1 - b.t) + v01 * b.t;
        const double bottom = v10 == v11 ? v10 : v10 * (1 - b.t) + v11 * b.t;
        out[(y * width + x) * ch + c] = top == bottom ? top : top * (1 - a.t) + bottom * a.t;
      }
    }
  }
  return Tensor::from({height, width, ch}, std::move(out));
}

ProbMap make_probmap(const Tensor& upsampled, double bg_threshold) {
  if (!(bg_threshold > 0.0 && bg_threshold < 1.0)) {
    throw ContractError("background threshold must lie in (0, 1), got " +
                        std::to_string(bg_threshold));
  }
  if (upsampled.rank() != 3) throw ShapeError("make_probmap: expected [H x W x C] scores");
  const std::size_t h = upsampled.dim(0), w = upsampled.dim(1), c = upsampled.dim(2);
  const auto src = upsampled.values();
  std::vector<double> out(h * w * (c + 1));
  for (std::size_t p = 0; p < h * w; ++p) {
    double* dst = &out[p * (c + 1)];
    dst[0] = bg_threshold;
    double total = bg_threshold;
    for (std::size_t k = 0; k < c; ++k) {
      dst[k + 1] = std::max(src[p * c + k], 0.0);
      total += dst[k + 1];
    }
    for (std::size_t k = 0; k <= c; ++k) dst[k] /= total;
  }
  return {Tensor::from({h, w, c + 1}, std::move(out))};
}

PseudoMask argmax_mask(const ProbMap& pm) {
  const std::size_t h = pm.height(), w = pm.width(), ch = pm.channels();
  if (ch > 255) throw ShapeError("argmax_mask: too many classes for 8-bit labels");
  const auto v = pm.probs.values();
  PseudoMask mask{h, w, std::vector<std::uint8_t>(h * w)};
  for (std::size_t p = 0; p < h * w; ++p) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < ch; ++k) {
      if (v[p * ch + k] > v[p * ch + best]) best = k;
    }
    mask.labels[p] = static_cast<std::uint8_t>(best);
  }
  return mask;
}

void write_mask(const std::filesystem::path& path, const PseudoMask& mask) {
  Image8 img;
  img.width = mask.width;
  img.height = mask.height;
  img.channels = 1;
  img.data = mask.labels;
  write_image(path, img);
}

PseudoMask read_mask(const std::filesystem::path& path) {
  const Image8 img = read_image(path);
  if (img.channels != 1) {
    throw DataError("mask " + path.string() + " is not single-channel");
  }
  return {img.height, img.width, img.data};
}

void write_palette(const std::filesystem::path& path,
                   const std::vector<std::string>& class_names) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write palette " + path.string());
  out << "# value name r g b\n";
  out << "0 background 0 0 0\n";
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    const auto rgb = label_color(c + 1);
    out << (c + 1) << ' ' << class_names[c] << ' ' << int(rgb[0]) << ' ' << int(rgb[1])
        << ' ' << int(rgb[2]) << '\n';
  }
  out << int(kIgnoreLabel) << " ignore 224 224 192\n";
  if (!out) throw IoError("failed writing palette " + path.string());
}

}  // namespace wsss
