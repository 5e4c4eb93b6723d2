#pragma once

#include <string>

#include "angio/geometry.hpp"
#include "angio/tensor.hpp"

namespace angio {

// Volume files are a pair: <path>.json sidecar {dims, extent_mm, dtype}
// and <path>.raw little-endian floats in x-fastest order. `path` is the
// stem without extension. dtype "f32" is the default on write; "f64" is
// honored on read and available for lossless round-trips.
void write_volume(const std::string& path_stem, const VoxelGrid& volume, Dtype dtype = Dtype::kF32);
VoxelGrid read_volume(const std::string& path_stem);

// Detector images use the same raw + sidecar pairing ({dims, spacing_mm,
// dtype}).
void write_detector_image(const std::string& path_stem, const DetectorImage& image, Dtype dtype = Dtype::kF32);
DetectorImage read_detector_image(const std::string& path_stem);

// 16-bit binary PGM (P5, maxval 65535, big-endian samples) with min-max
// scaling; lossy, for quick looks only.
void write_pgm16(const std::string& path, const DetectorImage& image);

}  // namespace angio
