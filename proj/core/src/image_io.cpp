#include "lanesurvey/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "lanesurvey/errors.hpp"

namespace lanesurvey {
namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read image " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return static_cast<std::uint8_t>(std::lround(0.299 * r + 0.587 * g + 0.114 * b));
}

// ---- PNM ----------------------------------------------------------------

class PnmReader {
 public:
  explicit PnmReader(const std::vector<std::uint8_t>& bytes) : b_(bytes) {}

  RgbImage read() {
    if (b_.size() < 2 || b_[0] != 'P') throw InputError("not a PNM image");
    const char kind = static_cast<char>(b_[1]);
    if (kind != '2' && kind != '3' && kind != '5' && kind != '6') {
      throw InputError(std::string("unsupported PNM type P") + kind);
    }
    pos_ = 2;
    const int w = number();
    const int h = number();
    const int maxval = number();
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw InputError("bad PNM header");
    const bool colour = kind == '3' || kind == '6';
    const bool binary = kind == '5' || kind == '6';
    RgbImage img(w, h);
    const std::size_t samples = static_cast<std::size_t>(w) * h * (colour ? 3 : 1);
    std::vector<int> values(samples);
    if (binary) {
      ++pos_;  // single whitespace after maxval
      const int bytes_per = maxval > 255 ? 2 : 1;
      if (b_.size() < pos_ + samples * bytes_per) throw InputError("truncated PNM data");
      for (std::size_t i = 0; i < samples; ++i) {
        values[i] = bytes_per == 1 ? b_[pos_ + i] : (b_[pos_ + 2 * i] << 8) | b_[pos_ + 2 * i + 1];
      }
    } else {
      for (std::size_t i = 0; i < samples; ++i) values[i] = number();
    }
    for (std::size_t p = 0; p < static_cast<std::size_t>(w) * h; ++p) {
      for (int c = 0; c < 3; ++c) {
        const int v = colour ? values[p * 3 + c] : values[p];
        img.data[p * 3 + c] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0, maxval) / maxval));
      }
    }
    return img;
  }

 private:
  int number() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
    if (pos_ >= b_.size() || !std::isdigit(b_[pos_])) throw InputError("bad PNM number");
    long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_++] - '0');
      if (v > 1'000'000'000) throw InputError("PNM number overflow");
    }
    return static_cast<int>(v);
  }

  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

// ---- PNG ----------------------------------------------------------------

RgbImage decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw InputError(std::string("PNG decode failed: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage img(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, img.data.data(), 0, nullptr)) {
    png_image_free(&image);
    throw InputError(std::string("PNG decode failed: ") + image.message);
  }
  return img;
}

void encode_png(const std::filesystem::path& path, const std::uint8_t* data, int w, int h, bool colour) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr)) {
    throw IoError("PNG encode failed for " + path.string() + ": " + image.message);
  }
}

// ---- JPEG ---------------------------------------------------------------

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

RgbImage decode_jpeg(const std::vector<std::uint8_t>& bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  RgbImage img;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw InputError(std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  img = RgbImage(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.data.data() + static_cast<std::size_t>(cinfo.output_scanline) * img.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

void encode_jpeg(const std::filesystem::path& path, const std::uint8_t* data, int w, int h, bool colour) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + path.string());
  jpeg_compress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::fclose(f);
    throw IoError(std::string("JPEG encode failed: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f);
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = colour ? 3 : 1;
  cinfo.in_color_space = colour ? JCS_RGB : JCS_GRAYSCALE;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, 90, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const int stride = w * (colour ? 3 : 1);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<std::uint8_t*>(data) + static_cast<std::size_t>(cinfo.next_scanline) * stride;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(f);
}

void write_pnm(const std::filesystem::path& path, const std::uint8_t* data, int w, int h, bool colour) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (colour ? "P6\n" : "P5\n") << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(w) * h * (colour ? 3 : 1));
  if (!out) throw IoError("write failed: " + path.string());
}

GrayImage to_gray(const RgbImage& rgb) {
  GrayImage g(rgb.width, rgb.height);
  for (std::size_t p = 0; p < g.pixels.size(); ++p) {
    g.pixels[p] = luma(rgb.data[p * 3], rgb.data[p * 3 + 1], rgb.data[p * 3 + 2]);
  }
  return g;
}

}  // namespace

RgbImage RgbImage::from_gray(const GrayImage& g) {
  RgbImage img(g.width, g.height);
  for (std::size_t p = 0; p < g.pixels.size(); ++p) {
    img.data[p * 3] = img.data[p * 3 + 1] = img.data[p * 3 + 2] = g.pixels[p];
  }
  return img;
}

void RgbImage::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  data[i] = c.r;
  data[i + 1] = c.g;
  data[i + 2] = c.b;
}

Rgb RgbImage::get(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {data[i], data[i + 1], data[i + 2]};
}

ImageFormat sniff_format(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G') {
    return ImageFormat::kPng;
  }
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8) return ImageFormat::kJpeg;
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] >= '1' && bytes[1] <= '6') return ImageFormat::kPnm;
  return ImageFormat::kUnknown;
}

ImageFormat format_for_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return ImageFormat::kPnm;
  if (ext == ".png") return ImageFormat::kPng;
  if (ext == ".jpg" || ext == ".jpeg") return ImageFormat::kJpeg;
  return ImageFormat::kUnknown;
}

RgbImage decode_rgb(const std::vector<std::uint8_t>& bytes) {
  switch (sniff_format(bytes)) {
    case ImageFormat::kPnm:
      return PnmReader(bytes).read();
    case ImageFormat::kPng:
      return decode_png(bytes);
    case ImageFormat::kJpeg:
      return decode_jpeg(bytes);
    case ImageFormat::kUnknown:
      break;
  }
  throw InputError("unrecognized image format");
}

GrayImage decode_gray(const std::vector<std::uint8_t>& bytes) {
  if (sniff_format(bytes) == ImageFormat::kPnm && bytes.size() > 1 && (bytes[1] == '2' || bytes[1] == '5')) {
    RgbImage rgb = PnmReader(bytes).read();
    GrayImage g(rgb.width, rgb.height);
    for (std::size_t p = 0; p < g.pixels.size(); ++p) g.pixels[p] = rgb.data[p * 3];
    return g;
  }
  return to_gray(decode_rgb(bytes));
}

GrayImage read_gray(const std::filesystem::path& path) { return decode_gray(slurp(path)); }
RgbImage read_rgb(const std::filesystem::path& path) { return decode_rgb(slurp(path)); }

void write_gray(const std::filesystem::path& path, const GrayImage& img) {
  switch (format_for_extension(path)) {
    case ImageFormat::kPng:
      return encode_png(path, img.pixels.data(), img.width, img.height, false);
    case ImageFormat::kJpeg:
      return encode_jpeg(path, img.pixels.data(), img.width, img.height, false);
    default:
      return write_pnm(path, img.pixels.data(), img.width, img.height, false);
  }
}

void write_rgb(const std::filesystem::path& path, const RgbImage& img) {
  switch (format_for_extension(path)) {
    case ImageFormat::kPng:
      return encode_png(path, img.data.data(), img.width, img.height, true);
    case ImageFormat::kJpeg:
      return encode_jpeg(path, img.data.data(), img.width, img.height, true);
    default:
      return write_pnm(path, img.data.data(), img.width, img.height, true);
  }
}

void draw_line(RgbImage& img, double x0, double y0, double x1, double y1, Rgb colour, int thickness) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
  const int half = std::max(0, thickness / 2);
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const int cx = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int cy = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    for (int dy = -half; dy <= half; ++dy) {
      for (int dx = -half; dx <= half; ++dx) img.set(cx + dx, cy + dy, colour);
    }
  }
}

void draw_rect(RgbImage& img, int x0, int y0, int x1, int y1, Rgb colour, int thickness) {
  for (int t = 0; t < thickness; ++t) {
    for (int x = x0; x <= x1; ++x) {
      img.set(x, y0 + t, colour);
      img.set(x, y1 - t, colour);
    }
    for (int y = y0; y <= y1; ++y) {
      img.set(x0 + t, y, colour);
      img.set(x1 - t, y, colour);
    }
  }
}

}  // namespace lanesurvey
