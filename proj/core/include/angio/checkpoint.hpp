#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "angio/tensor.hpp"

namespace angio {

// Single-file weight container: one UTF-8 JSON manifest line
// {"tensors":[{name,shape,dtype,offset}...],"extra":{...}} terminated by
// '\n', followed by the little-endian IEEE-754 payload. Offsets are bytes
// from the start of the payload.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::string extra_json = "{}";

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace angio
