#pragma once

#include <string>

#include "av360/media.hpp"

namespace av360::media {

FrameImage read_ppm(const std::string& path);
void write_ppm(const std::string& path, const FrameImage& frame);

FrameImage read_png(const std::string& path);
void write_png(const std::string& path, const FrameImage& frame);

// Dispatches on the file's magic bytes (PNG signature or PPM "P6").
FrameImage load_frame(const std::string& path);

}  // namespace av360::media
