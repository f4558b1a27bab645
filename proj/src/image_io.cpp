#include "wsss/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "wsss/error.hpp"

namespace wsss {

namespace {

thread_local ReadAudit* t_audit = nullptr;

std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

using FilePtr = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode), &std::fclose);
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

Image8 read_png(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  Image8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("malformed PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (depth < 8) png_set_packing(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    // alpha stripped above; stays single channel
  }
  png_read_update_info(png, info);
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.channels = png_get_channels(png, info);
  if (img.channels != 1 && img.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG channel layout in " + path.string());
  }
  img.data.resize(img.width * img.height * img.channels);
  rows.resize(img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    rows[y] = img.data.data() + y * img.width * img.channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::filesystem::path& path, const Image8& img) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y) {
    rows[y] = const_cast<png_bytep>(img.data.data() + y * img.width * img.channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Reads the next whitespace-separated header token, skipping comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

Image8 read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = pnm_token(in);
  if (magic != "P5" && magic != "P6") {
    throw IoError("unsupported PNM type '" + magic + "' in " + path.string());
  }
  Image8 img;
  try {
    img.width = std::stoul(pnm_token(in));
    img.height = std::stoul(pnm_token(in));
    if (std::stoul(pnm_token(in)) != 255) throw IoError("PNM max value must be 255");
  } catch (const std::logic_error&) {
    throw IoError("malformed PNM header in " + path.string());
  }
  img.channels = magic == "P6" ? 3 : 1;
  img.data.resize(img.width * img.height * img.channels);
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (!in) throw IoError("truncated PNM data in " + path.string());
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image8& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (img.channels == 3 ? "P6" : "P5") << '\n'
      << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

ReadAudit::ReadAudit() : previous_(t_audit) { t_audit = this; }
ReadAudit::~ReadAudit() { t_audit = previous_; }

void note_read(const std::filesystem::path& path) {
  for (ReadAudit* a = t_audit; a; a = a->previous_) a->paths_.push_back(path);
}

Image8 read_image(const std::filesystem::path& path) {
  note_read(path);
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open " + path.string());
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6')) return read_pnm(path);
  throw IoError("unrecognised image format: " + path.string() +
                " (expected PNG, binary PPM or PGM)");
}

void write_image(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw IoError("only 1- or 3-channel images can be written");
  }
  if (image.data.size() != image.width * image.height * image.channels) {
    throw IoError("image buffer size does not match its dimensions");
  }
  const std::string ext = lower_ext(path);
  if (ext == ".png") {
    write_png(path, image);
  } else if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
    if ((ext == ".ppm" && image.channels != 3) || (ext == ".pgm" && image.channels != 1)) {
      throw IoError("channel count does not match extension of " + path.string());
    }
    write_pnm(path, image);
  } else {
    throw IoError("unsupported image extension: " + path.string());
  }
}

Tensor image_to_tensor(const Image8& image) {
  std::vector<double> v(image.width * image.height * 3);
  for (std::size_t p = 0; p < image.width * image.height; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = image.channels == 3 ? p * 3 + c : p;
      v[p * 3 + c] = image.data[src] / 255.0;
    }
  }
  return Tensor::from({image.height, image.width, 3}, std::move(v));
}

Image8 tensor_to_image(const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(2) != 3) throw ShapeError("expected [H x W x 3] image");
  Image8 img{rgb.dim(1), rgb.dim(0), 3, {}};
  img.data.reserve(rgb.numel());
  for (double v : rgb.values()) {
    img.data.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return img;
}

Tensor resize_image(const Tensor& rgb, std::size_t height, std::size_t width) {
  if (rgb.rank() != 3) throw ShapeError("resize_image: expected [H x W x C]");
  if (rgb.dim(0) == height && rgb.dim(1) == width) return rgb;
  const std::size_t ih = rgb.dim(0), iw = rgb.dim(1), ch = rgb.dim(2);
  const auto src = rgb.values();
  std::vector<double> out(height * width * ch);
  for (std::size_t y = 0; y < height; ++y) {
    double cy = (y + 0.5) * ih / static_cast<double>(height) - 0.5;
    cy = std::clamp(cy, 0.0, static_cast<double>(ih - 1));
    const auto y0 = static_cast<std::size_t>(cy);
    const std::size_t y1 = std::min(y0 + 1, ih - 1);
    const double ty = cy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      double cx = (x + 0.5) * iw / static_cast<double>(width) - 0.5;
      cx = std::clamp(cx, 0.0, static_cast<double>(iw - 1));
      const auto x0 = static_cast<std::size_t>(cx);
      const std::size_t x1 = std::min(x0 + 1, iw - 1);
      const double tx = cx - static_cast<double>(x0);
      for (std::size_t c = 0; c < ch; ++c) {
        const double top = src[(y0 * iw + x0) * ch + c] * (1 - tx) + src[(y0 * iw + x1) * ch + c] * tx;
        const double bot = src[(y1 * iw + x0) * ch + c] * (1 - tx) + src[(y1 * iw + x1) * ch + c] * tx;
        out[(y * width + x) * ch + c] = top * (1 - ty) + bot * ty;
      }
    }
  }
  return Tensor::from({height, width, ch}, std::move(out));
}

std::array<std::uint8_t, 3> label_color(std::size_t label) {
  std::array<std::uint8_t, 3> rgb{0, 0, 0};
  std::size_t id = label;
  for (int shift = 7; shift >= 0 && id; --shift, id >>= 3) {
    rgb[0] |= static_cast<std::uint8_t>(((id >> 0) & 1) << shift);
    rgb[1] |= static_cast<std::uint8_t>(((id >> 1) & 1) << shift);
    rgb[2] |= static_cast<std::uint8_t>(((id >> 2) & 1) << shift);
  }
  return rgb;
}

}  // namespace wsss
