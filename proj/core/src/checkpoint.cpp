#include "angio/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace angio {

using nlohmann::json;

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json manifest;
  manifest["tensors"] = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["dtype"] = dtype_name(t.dtype());
    entry["offset"] = offset;
    manifest["tensors"].push_back(entry);
    offset += static_cast<std::uint64_t>(t.numel()) * dtype_size(t.dtype());
  }
  manifest["extra"] = json::parse(ckpt.extra_json);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << manifest.dump() << "\n";
  for (const auto& [name, t] : ckpt.tensors) {
    if (t.dtype() == Dtype::kF32) {
      auto d = t.cdata_f32();
      out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(float)));
    } else {
      auto d = t.cdata_f64();
      out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(double)));
    }
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("load_checkpoint: missing manifest line in " + path);
  json manifest = json::parse(header);

  const std::streampos payload_start = in.tellg();
  Checkpoint ckpt;
  ckpt.extra_json = manifest.value("extra", json::object()).dump();
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    const Dtype dtype = dtype_from_name(entry.at("dtype").get<std::string>());
    const auto offset = entry.at("offset").get<std::uint64_t>();
    Tensor t = Tensor::zeros(shape, dtype);
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    if (dtype == Dtype::kF32) {
      auto d = t.data_f32();
      in.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(float)));
    } else {
      auto d = t.data_f64();
      in.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(double)));
    }
    if (!in) throw std::runtime_error("load_checkpoint: truncated payload reading '" + name + "' from " + path);
    ckpt.tensors.emplace_back(name, std::move(t));
  }
  return ckpt;
}

}  // namespace angio
