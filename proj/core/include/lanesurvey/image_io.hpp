#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace lanesurvey {

/// 8-bit luminance raster, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  bool empty() const { return pixels.empty(); }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

/// 8-bit RGB raster, row-major, interleaved.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}
  static RgbImage from_gray(const GrayImage& g);

  void set(int x, int y, Rgb c);
  Rgb get(int x, int y) const;
};

enum class ImageFormat { kPnm, kPng, kJpeg, kUnknown };

ImageFormat sniff_format(const std::vector<std::uint8_t>& bytes);
/// Format implied by a file extension (.pgm/.ppm/.pnm, .png, .jpg/.jpeg).
ImageFormat format_for_extension(const std::filesystem::path& path);

/// Decodes PNM (P2/P3/P5/P6), PNG or JPEG; colour input is converted to luma.
GrayImage read_gray(const std::filesystem::path& path);
RgbImage read_rgb(const std::filesystem::path& path);
GrayImage decode_gray(const std::vector<std::uint8_t>& bytes);
RgbImage decode_rgb(const std::vector<std::uint8_t>& bytes);

/// Encodes according to the file extension. PGM output is binary P5.
void write_gray(const std::filesystem::path& path, const GrayImage& img);
void write_rgb(const std::filesystem::path& path, const RgbImage& img);

void draw_line(RgbImage& img, double x0, double y0, double x1, double y1, Rgb colour, int thickness = 1);
void draw_rect(RgbImage& img, int x0, int y0, int x1, int y1, Rgb colour, int thickness = 2);

}  // namespace lanesurvey
