#include "angio/volume_io.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace angio {

using nlohmann::json;

namespace {

void write_raw(const std::string& path, const std::vector<double>& values, Dtype dtype) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  if (dtype == Dtype::kF32) {
    std::vector<float> buf(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) buf[i] = static_cast<float>(values[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  } else {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<double> read_raw(const std::string& path, std::size_t count, Dtype dtype) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<double> values(count);
  if (dtype == Dtype::kF32) {
    std::vector<float> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(float)));
    for (std::size_t i = 0; i < count; ++i) values[i] = static_cast<double>(buf[i]);
  } else {
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(double)));
  }
  if (!in) throw std::runtime_error("truncated raw payload in " + path);
  return values;
}

json read_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sidecar " + path);
  json j;
  in >> j;
  return j;
}

}  // namespace

void write_volume(const std::string& path_stem, const VoxelGrid& volume, Dtype dtype) {
  volume.validate();
  json sidecar;
  sidecar["dims"] = volume.dims;
  sidecar["extent_mm"] = volume.extent_mm;
  sidecar["dtype"] = dtype_name(dtype);
  std::ofstream side(path_stem + ".json");
  if (!side) throw std::runtime_error("cannot open " + path_stem + ".json for writing");
  side << sidecar.dump(2) << "\n";
  write_raw(path_stem + ".raw", volume.values, dtype);
}

VoxelGrid read_volume(const std::string& path_stem) {
  const json sidecar = read_sidecar(path_stem + ".json");
  VoxelGrid g;
  g.dims = sidecar.at("dims").get<std::array<std::int64_t, 3>>();
  g.extent_mm = sidecar.at("extent_mm").get<std::array<double, 3>>();
  const Dtype dtype = dtype_from_name(sidecar.at("dtype").get<std::string>());
  g.values = read_raw(path_stem + ".raw", static_cast<std::size_t>(g.numel()), dtype);
  g.validate();
  return g;
}

void write_detector_image(const std::string& path_stem, const DetectorImage& image, Dtype dtype) {
  json sidecar;
  sidecar["dims"] = image.dims;
  sidecar["spacing_mm"] = image.spacing_mm;
  sidecar["dtype"] = dtype_name(dtype);
  std::ofstream side(path_stem + ".json");
  if (!side) throw std::runtime_error("cannot open " + path_stem + ".json for writing");
  side << sidecar.dump(2) << "\n";
  write_raw(path_stem + ".raw", image.values, dtype);
}

DetectorImage read_detector_image(const std::string& path_stem) {
  const json sidecar = read_sidecar(path_stem + ".json");
  DetectorImage im;
  im.dims = sidecar.at("dims").get<std::array<std::int64_t, 2>>();
  im.spacing_mm = sidecar.at("spacing_mm").get<std::array<double, 2>>();
  const Dtype dtype = dtype_from_name(sidecar.at("dtype").get<std::string>());
  im.values = read_raw(path_stem + ".raw", static_cast<std::size_t>(im.numel()), dtype);
  return im;
}

void write_pgm16(const std::string& path, const DetectorImage& image) {
  const auto [lo_it, hi_it] = std::minmax_element(image.values.begin(), image.values.end());
  const double lo = image.values.empty() ? 0.0 : *lo_it;
  const double hi = image.values.empty() ? 0.0 : *hi_it;
  const double scale = hi > lo ? 65535.0 / (hi - lo) : 0.0;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P5\n" << image.dims[0] << " " << image.dims[1] << "\n65535\n";
  for (std::int64_t iv = 0; iv < image.dims[1]; ++iv) {
    for (std::int64_t iu = 0; iu < image.dims[0]; ++iu) {
      const auto s = static_cast<std::uint16_t>((image.at(iu, iv) - lo) * scale + 0.5);
      const unsigned char bytes[2] = {static_cast<unsigned char>(s >> 8), static_cast<unsigned char>(s & 0xff)};
      out.write(reinterpret_cast<const char*>(bytes), 2);
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace angio
