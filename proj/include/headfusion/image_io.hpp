#pragma once

#include <string>

#include "headfusion/image.hpp"

namespace headfusion {

/// Depth files are 16-bit grayscale PNG holding millimeters; in memory depth
/// is meters (0 = invalid). Color files are 8-bit RGB PNG.

Image<double> read_depth_png(const std::string& path);
void write_depth_png(const std::string& path, const Image<double>& depth_m);

Image<Rgb8> read_color_png(const std::string& path);
void write_color_png(const std::string& path, const Image<Rgb8>& color);

/// 8-bit single channel PNG, used for debug masks.
void write_gray_png(const std::string& path, const Image<unsigned char>& gray);

}  // namespace headfusion
