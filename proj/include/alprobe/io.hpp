#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "alprobe/core.hpp"

namespace alp {

// Receives non-fatal diagnostics (e.g. clamped negative channels). Defaults
// to printing on stderr.
using WarningSink = std::function<void(const std::string &)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string &message);

// Portable float map. Color ("PF") only on save; "Pf" grayscale is accepted on
// load and replicated to RGB. Rows are stored bottom-up; the sign of the scale
// field selects the byte order (negative: little endian).
HdrImage load_hdr(const std::filesystem::path &path);
void save_hdr(const HdrImage &img, const std::filesystem::path &path);
HdrImage decode_pfm(const std::string &bytes, const std::string &origin = "<memory>");
std::string encode_pfm(const HdrImage &img);

// 8-bit grayscale PNG, coverage = value / 255.
MaskImage load_mask(const std::filesystem::path &path);
void save_mask(const MaskImage &mask, const std::filesystem::path &path);

// Display helpers; stored data stays linear.
Rgb reinhard(const Rgb &c, double exposure = 1.0);
void save_png_rgb(const HdrImage &img, const std::filesystem::path &path, double exposure = 1.0);
void save_png_gray(const std::vector<double> &values, int width, int height, const std::filesystem::path &path);

} // namespace alp
