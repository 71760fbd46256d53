#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recurdet/image.hpp"

namespace recurdet {

/// Decodes 8-bit binary PGM (P5) or PNG, detected by signature. Color PNGs
/// are reduced to luma with the Rec. 601 weights.
GrayImage decode_image(const std::vector<std::uint8_t>& bytes);
GrayImage read_image(const std::string& path);

/// 8-bit grayscale encoders; values are rounded from [0,1] to [0,255].
std::vector<std::uint8_t> encode_png(const GrayImage& img);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);
void write_png(const GrayImage& img, const std::string& path);
void write_pgm(const GrayImage& img, const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::string& path, const std::string& text);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace recurdet
