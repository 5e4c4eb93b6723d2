#pragma once

#include "angio/tensor.hpp"

namespace angio::detail {

// Pure forward computation of one kernel; never records a node.
Tensor kernel_compute(OpKind kind, const std::vector<Tensor>& inputs, const Attrs& attrs);

// Wraps kernel_compute and appends a Node when grad mode is on and any
// input requires grad.
Tensor dispatch(OpKind kind, std::vector<Tensor> inputs, Attrs attrs);

// Pulls the recorded argmax index vector out of a freshly computed
// max-pool output (kernel_compute stores it on the Attrs it was given).
[[noreturn]] void shape_error(OpKind kind, const std::string& detail);

}  // namespace angio::detail
