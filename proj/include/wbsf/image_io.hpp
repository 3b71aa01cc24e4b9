#pragma once

#include <string>

#include "wbsf/raster.hpp"

namespace wbsf {

// Middlebury .flo interchange: little-endian float tag 202021.25, int32 width,
// int32 height, interleaved float32 (u,v) row-major. Round trips bit-exactly,
// including invalid sentinels.
FlowField read_flo(const std::string& path);
void write_flo(const std::string& path, const FlowField& field);

// PFM, little-endian (scale -1), rows stored bottom-to-top per the format.
Raster read_pfm(const std::string& path);
void write_pfm(const std::string& path, const Raster& r);

// PGM masks: 0 = visible, 255 = occluded.
BitMask read_pgm_mask(const std::string& path);
void write_pgm_mask(const std::string& path, const BitMask& mask);

// 8/16-bit PNG or binary PPM/PGM mapped linearly to [0,1], by extension.
Raster read_image(const std::string& path);

void write_png8(const std::string& path, const Raster& r);
void write_png16(const std::string& path, const Raster& r);
void write_ppm(const std::string& path, const Raster& r, int maxval = 255);

}  // namespace wbsf
