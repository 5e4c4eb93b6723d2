#include "angio/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace angio {

namespace {
std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;
thread_local bool g_strict_mode = false;
}  // namespace

const char* dtype_name(Dtype d) { return d == Dtype::kF32 ? "f32" : "f64"; }

Dtype dtype_from_name(const std::string& name) {
  if (name == "f32" || name == "float32") return Dtype::kF32;
  if (name == "f64" || name == "float64") return Dtype::kF64;
  throw std::invalid_argument("unknown dtype name: " + name);
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (const auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

bool grad_mode_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool strict_mode_enabled() { return g_strict_mode; }
void set_strict_mode(bool enabled) { g_strict_mode = enabled; }

namespace {

std::shared_ptr<TensorImpl> make_impl(Shape shape, Dtype dtype) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  const auto n = static_cast<std::size_t>(shape_numel(impl->shape));
  if (shape_numel(impl->shape) < 0) throw std::invalid_argument("negative tensor extent in " + shape_str(impl->shape));
  impl->storage = std::make_shared<Storage>();
  if (dtype == Dtype::kF32) {
    *impl->storage = std::vector<float>(n, 0.0f);
  } else {
    *impl->storage = std::vector<double>(n, 0.0);
  }
  impl->id = g_next_id.fetch_add(1);
  return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, Dtype dtype, bool requires_grad) {
  auto impl = make_impl(std::move(shape), dtype);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, Dtype dtype, bool requires_grad) {
  Tensor t = zeros(std::move(shape), dtype, requires_grad);
  if (dtype == Dtype::kF32) {
    for (auto& v : t.data_f32()) v = static_cast<float>(value);
  } else {
    for (auto& v : t.data_f64()) v = value;
  }
  return t;
}

Tensor Tensor::from_vector(Shape shape, const std::vector<double>& values, Dtype dtype, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("from_vector: " + std::to_string(values.size()) +
                                " values do not fill shape " + shape_str(shape));
  }
  Tensor t = zeros(std::move(shape), dtype, requires_grad);
  if (dtype == Dtype::kF32) {
    auto d = t.data_f32();
    for (std::size_t i = 0; i < values.size(); ++i) d[i] = static_cast<float>(values[i]);
  } else {
    auto d = t.data_f64();
    for (std::size_t i = 0; i < values.size(); ++i) d[i] = values[i];
  }
  return t;
}

Tensor& Tensor::set_requires_grad(bool value) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad is leaf-only; detach() first");
  impl_->requires_grad = value;
  return *this;
}

void Tensor::set_grad(const Tensor& g) {
  if (!g.defined()) {
    impl_->grad.reset();
    return;
  }
  if (g.shape() != shape()) {
    throw std::invalid_argument("set_grad: gradient shape " + shape_str(g.shape()) +
                                " does not match tensor shape " + shape_str(shape()));
  }
  impl_->grad = g.impl_ptr();
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->dtype = impl_->dtype;
  impl->storage = impl_->storage;  // immutable share
  impl->requires_grad = false;
  impl->id = g_next_id.fetch_add(1);
  return Tensor(std::move(impl));
}

double Tensor::item() const {
  if (numel() != 1) throw std::logic_error("item(): tensor has " + std::to_string(numel()) + " elements");
  return at(0);
}

double Tensor::at(std::int64_t flat_index) const {
  if (flat_index < 0 || flat_index >= numel()) throw std::out_of_range("Tensor::at index out of range");
  if (dtype() == Dtype::kF32) return static_cast<double>(cdata_f32()[static_cast<std::size_t>(flat_index)]);
  return cdata_f64()[static_cast<std::size_t>(flat_index)];
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(static_cast<std::size_t>(numel()));
  if (dtype() == Dtype::kF32) {
    auto d = cdata_f32();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(d[i]);
  } else {
    auto d = cdata_f64();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i];
  }
  return out;
}

bool Tensor::all_finite() const {
  if (dtype() == Dtype::kF32) {
    for (const auto v : cdata_f32())
      if (!std::isfinite(v)) return false;
  } else {
    for (const auto v : cdata_f64())
      if (!std::isfinite(v)) return false;
  }
  return true;
}

std::span<float> Tensor::data_f32() {
  return std::span<float>(std::get<std::vector<float>>(*impl_->storage));
}
std::span<double> Tensor::data_f64() {
  return std::span<double>(std::get<std::vector<double>>(*impl_->storage));
}
std::span<const float> Tensor::cdata_f32() const {
  return std::span<const float>(std::get<std::vector<float>>(*impl_->storage));
}
std::span<const double> Tensor::cdata_f64() const {
  return std::span<const double>(std::get<std::vector<double>>(*impl_->storage));
}

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kMulScalar: return "mul_scalar";
    case OpKind::kPowScalar: return "pow_scalar";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kErf: return "erf";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kRelu: return "relu";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kAbs: return "abs";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTransposeLast2: return "transpose_last2";
    case OpKind::kReshape: return "reshape";
    case OpKind::kBroadcastTo: return "broadcast_to";
    case OpKind::kSumTo: return "sum_to";
    case OpKind::kConcat: return "concat";
    case OpKind::kNarrow: return "narrow";
    case OpKind::kEmbedNarrow: return "embed_narrow";
    case OpKind::kUnfold3d: return "unfold3d";
    case OpKind::kFold3d: return "fold3d";
    case OpKind::kGatherCells: return "gather_cells";
    case OpKind::kScatterCells: return "scatter_cells";
    case OpKind::kMaxPool3d: return "max_pool3d";
  }
  return "?";
}

std::vector<OpKind> all_kernel_kinds() {
  return {OpKind::kAdd,         OpKind::kSub,          OpKind::kMul,         OpKind::kAddScalar,
          OpKind::kMulScalar,   OpKind::kPowScalar,    OpKind::kExp,         OpKind::kLog,
          OpKind::kErf,         OpKind::kTanh,         OpKind::kSigmoid,     OpKind::kRelu,
          OpKind::kLeakyRelu,   OpKind::kAbs,          OpKind::kMatmul,      OpKind::kTransposeLast2,
          OpKind::kReshape,     OpKind::kBroadcastTo,  OpKind::kSumTo,       OpKind::kConcat,
          OpKind::kNarrow,      OpKind::kEmbedNarrow,  OpKind::kUnfold3d,    OpKind::kFold3d,
          OpKind::kGatherCells, OpKind::kScatterCells, OpKind::kMaxPool3d};
}

bool second_order_capable(OpKind k) { return k != OpKind::kMaxPool3d; }

std::int64_t conv_out_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride, std::int64_t pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace angio
