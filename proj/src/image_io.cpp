#include "recurdet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace recurdet {
namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 2;
  auto next_token = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      ++pos;
      any = true;
      if (v > 1'000'000) throw Error(ErrorCode::kIo, "PGM header value out of range");
    }
    if (!any) throw Error(ErrorCode::kIo, "malformed PGM header");
    return v;
  };
  const long w = next_token();
  const long h = next_token();
  const long maxval = next_token();
  if (maxval <= 0 || maxval > 255) throw Error(ErrorCode::kIo, "only 8-bit PGM is supported");
  ++pos;  // single whitespace before the raster
  if (w <= 0 || h <= 0 || bytes.size() < pos + static_cast<std::size_t>(w * h)) {
    throw Error(ErrorCode::kIo, "truncated PGM raster");
  }
  GrayImage img(static_cast<int>(w), static_cast<int>(h));
  for (long i = 0; i < w * h; ++i) img.data()[static_cast<std::size_t>(i)] = bytes[pos + static_cast<std::size_t>(i)] / static_cast<double>(maxval);
  return img;
}

struct PngReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void png_read_callback(png_structp png, png_bytep out, png_size_t n) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + n > cur->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(out, cur->bytes->data() + cur->pos, n);
  cur->pos += n;
}

void png_error_callback(png_structp, png_const_charp msg) { throw Error(ErrorCode::kIo, std::string("PNG: ") + msg); }
void png_warning_callback(png_structp, png_const_charp) {}

GrayImage decode_png(const std::vector<std::uint8_t>& bytes) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_callback, png_warning_callback);
  if (png == nullptr) throw Error(ErrorCode::kIo, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  PngReadCursor cursor{&bytes, 0};
  png_set_read_fn(png, &cursor, png_read_callback);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> raster(rowbytes * static_cast<std::size_t>(h));
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = raster.data() + rowbytes * static_cast<std::size_t>(y);
  png_read_image(png, rows.data());

  GrayImage img(w, h);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* row = rows[static_cast<std::size_t>(y)];
    for (int x = 0; x < w; ++x) {
      double v;
      if (channels >= 3) {
        const std::uint8_t* px = row + static_cast<std::size_t>(x) * channels;
        v = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
      } else {
        v = row[static_cast<std::size_t>(x) * channels];
      }
      img(x, y) = v / 255.0;
    }
  }
  return img;
}

void png_write_callback(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void png_flush_callback(png_structp) {}

}  // namespace

GrayImage decode_image(const std::vector<std::uint8_t>& bytes) {
  static constexpr std::array<std::uint8_t, 8> kPngSig = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() >= 8 && std::equal(kPngSig.begin(), kPngSig.end(), bytes.begin())) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes);
  throw Error(ErrorCode::kIo, "unsupported image format (expected PGM P5 or PNG)");
}

GrayImage read_image(const std::string& path) { return decode_image(read_file(path)); }

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_callback, png_warning_callback);
  if (png == nullptr) throw Error(ErrorCode::kIo, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_set_write_fn(png, &out, png_write_callback, png_flush_callback);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width()));
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) row[static_cast<std::size_t>(x)] = to_byte(img(x, y));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  return out;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : img.data()) out.push_back(to_byte(v));
  return out;
}

void write_png(const GrayImage& img, const std::string& path) { write_file(path, encode_png(img)); }
void write_pgm(const GrayImage& img, const std::string& path) { write_file(path, encode_pgm(img)); }

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i + 1 == bytes.size()) {
    const unsigned v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  unsigned acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || std::isspace(static_cast<unsigned char>(c))) continue;
    const int v = value(c);
    if (v < 0) throw Error(ErrorCode::kIo, "invalid base64 input");
    acc = (acc << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

}  // namespace recurdet
