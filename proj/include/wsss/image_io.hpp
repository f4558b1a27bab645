#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsss/tensor.hpp"

namespace wsss {

// Interleaved 8-bit image, 1 (grey / label) or 3 (RGB) channels.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> data;

  bool operator==(const Image8&) const = default;
};

// PNG (8-bit grey, palette indices, RGB) and binary PPM/PGM. Palette PNGs
// return their raw indices, which is how label masks are stored.
Image8 read_image(const std::filesystem::path& path);
// Format chosen by extension: .png, .ppm, .pgm.
void write_image(const std::filesystem::path& path, const Image8& image);

// [H x W x 3] doubles in [0, 1].
Tensor image_to_tensor(const Image8& image);
Image8 tensor_to_image(const Tensor& rgb);
Tensor resize_image(const Tensor& rgb, std::size_t height, std::size_t width);

// Standard VOC-style label colour.
std::array<std::uint8_t, 3> label_color(std::size_t label);

// Records every path passed to read_image while alive. Used to audit which
// files a code path touches.
class ReadAudit {
 public:
  ReadAudit();
  ~ReadAudit();
  ReadAudit(const ReadAudit&) = delete;
  ReadAudit& operator=(const ReadAudit&) = delete;

  const std::vector<std::filesystem::path>& paths() const { return paths_; }

 private:
  friend void note_read(const std::filesystem::path& path);
  std::vector<std::filesystem::path> paths_;
  ReadAudit* previous_;
};

void note_read(const std::filesystem::path& path);

}  // namespace wsss
