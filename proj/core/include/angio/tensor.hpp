#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace angio {

using Shape = std::vector<std::int64_t>;

enum class Dtype { kF32, kF64 };

inline std::size_t dtype_size(Dtype d) { return d == Dtype::kF32 ? 4 : 8; }
const char* dtype_name(Dtype d);
Dtype dtype_from_name(const std::string& name);

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Kernel-level operations. Everything else (conv3d, softmax, layer norm,
// grid sampling, ...) is composed from these, which is what makes the
// whole composition differentiable a second time: a backward pass built
// out of kernels is itself a graph of kernels.
enum class OpKind {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kAddScalar,
  kMulScalar,
  kPowScalar,
  kExp,
  kLog,
  kErf,
  kTanh,
  kSigmoid,
  kRelu,
  kLeakyRelu,
  kAbs,
  kMatmul,
  kTransposeLast2,
  kReshape,
  kBroadcastTo,
  kSumTo,
  kConcat,
  kNarrow,
  kEmbedNarrow,
  kUnfold3d,
  kFold3d,
  kGatherCells,
  kScatterCells,
  kMaxPool3d,
};

const char* op_name(OpKind k);
std::vector<OpKind> all_kernel_kinds();
// False only for kernels whose gradient cannot be expressed as a
// differentiable kernel graph (currently max pooling).
bool second_order_capable(OpKind k);

struct Attrs {
  std::array<std::int64_t, 12> i{};
  int ni = 0;
  double a = 0.0;
  double b = 0.0;
  Shape shape;
  // Flat index map for gather/scatter and the saved argmax of max pooling.
  std::shared_ptr<const std::vector<std::int64_t>> idx;

  void push(std::int64_t v) { i[static_cast<std::size_t>(ni++)] = v; }
};

class Tensor;

struct Node {
  OpKind kind = OpKind::kLeaf;
  Attrs attrs;
  std::vector<Tensor> inputs;
  // Which inputs participated in autodiff when the node was recorded;
  // freezing a parameter after the fact must not resurrect its gradient.
  std::vector<std::uint8_t> input_needs_grad;
};

using Storage = std::variant<std::vector<float>, std::vector<double>>;

struct TensorImpl : std::enable_shared_from_this<TensorImpl> {
  Shape shape;
  Dtype dtype = Dtype::kF64;
  std::shared_ptr<Storage> storage;
  bool requires_grad = false;
  std::shared_ptr<TensorImpl> grad;  // populated by backward()
  std::unique_ptr<Node> node;        // null for leaves
  std::uint64_t id = 0;
};

// Value-semantic handle to an immutable dense array. Mutation is limited
// to optimizer updates through data_f32/data_f64 on leaf tensors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, Dtype dtype, bool requires_grad = false);
  static Tensor full(Shape shape, double value, Dtype dtype, bool requires_grad = false);
  static Tensor ones(Shape shape, Dtype dtype, bool requires_grad = false) {
    return full(std::move(shape), 1.0, dtype, requires_grad);
  }
  static Tensor from_vector(Shape shape, const std::vector<double>& values, Dtype dtype,
                            bool requires_grad = false);
  static Tensor scalar(double value, Dtype dtype) { return full({}, value, dtype); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t numel() const { return shape_numel(impl_->shape); }
  std::int64_t dim(int axis) const { return impl_->shape[static_cast<std::size_t>(axis)]; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  Dtype dtype() const { return impl_->dtype; }
  bool requires_grad() const { return impl_->requires_grad; }
  std::uint64_t id() const { return impl_->id; }
  bool is_leaf() const { return impl_->node == nullptr; }
  const Node* node() const { return impl_->node.get(); }

  // Leaf-only: flips participation in autodiff.
  Tensor& set_requires_grad(bool value);

  Tensor grad() const { return impl_->grad ? Tensor(impl_->grad) : Tensor(); }
  void clear_grad() { impl_->grad.reset(); }
  void set_grad(const Tensor& g);

  // Detached leaf sharing this tensor's storage.
  Tensor detach() const;

  double item() const;
  double at(std::int64_t flat_index) const;
  std::vector<double> to_vector() const;
  bool all_finite() const;

  std::span<float> data_f32();
  std::span<double> data_f64();
  std::span<const float> cdata_f32() const;
  std::span<const double> cdata_f64() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Thread-local switch: while disabled, ops do not record graph nodes.
bool grad_mode_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Thread-local strict mode: kernels reject non-finite inputs when enabled.
bool strict_mode_enabled();
void set_strict_mode(bool enabled);

// ---- kernel ops ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor pow_scalar(const Tensor& a, double p);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor erf(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double negative_slope);
Tensor abs(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose_last2(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor broadcast_to(const Tensor& a, Shape shape);
Tensor sum_to(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int dim);
Tensor narrow(const Tensor& a, int dim, std::int64_t start, std::int64_t length);
Tensor embed_narrow(const Tensor& a, int dim, std::int64_t start, std::int64_t out_extent);
// input (N, C, D, H, W) -> columns (N, L, C*kd*kh*kw), L = od*oh*ow.
Tensor unfold3d(const Tensor& a, const std::array<std::int64_t, 3>& kernel,
                const std::array<std::int64_t, 3>& stride, const std::array<std::int64_t, 3>& pad);
// adjoint of unfold3d: columns (N, L, C*k^3) -> volume (N, C, D, H, W).
Tensor fold3d(const Tensor& cols, Shape out_shape, const std::array<std::int64_t, 3>& kernel,
              const std::array<std::int64_t, 3>& stride, const std::array<std::int64_t, 3>& pad);
// out.flat[i] = idx[i] >= 0 ? a.flat[idx[i]] : 0
Tensor gather_cells(const Tensor& a, std::shared_ptr<const std::vector<std::int64_t>> idx, Shape out_shape);
// adjoint of gather_cells: out.flat[idx[i]] += a.flat[i]
Tensor scatter_cells(const Tensor& a, std::shared_ptr<const std::vector<std::int64_t>> idx, Shape out_shape);
Tensor max_pool3d(const Tensor& a, std::int64_t kernel, std::int64_t stride);

// Spec'd primitive entry point: dispatches by kind for generic drivers.
Tensor primitive_forward(OpKind kind, const std::vector<Tensor>& inputs, const Attrs& attrs);

// Eager recomputation of a recorded graph (memoized); used to check replay
// determinism.
Tensor replay_forward(const Tensor& out);

struct BackwardOptions {
  bool accumulate = false;
  bool create_graph = false;
};

// Reverse-mode sweep from a scalar loss; writes leaf gradients in .grad.
// `also_zero` lists leaves that must end up with a (possibly zero) gradient
// even when unreachable from the loss.
void backward(const Tensor& loss, const BackwardOptions& opts = {},
              const std::vector<Tensor>& also_zero = {});

// Gradient of `scalar` w.r.t. `wrt` returned as a graph tensor that can be
// differentiated again. Leaf .grad fields are left untouched.
Tensor backward_as_graph(const Tensor& scalar, const Tensor& wrt);

// ---- composite ops (no kernel of their own) ----
Tensor neg(const Tensor& a);
Tensor div(const Tensor& a, const Tensor& b);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor mean_to(const Tensor& a, Shape shape);
Tensor softmax_lastdim(const Tensor& a);
Tensor layer_norm_lastdim(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor gelu(const Tensor& a);
Tensor l2_norm_all(const Tensor& a);
// x: (..., in), w: (in, out), b: (out) or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// x: (N, Cin, D, H, W), w: (Cout, Cin, kd, kh, kw), b: (Cout) or undefined.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b,
              const std::array<std::int64_t, 3>& stride, const std::array<std::int64_t, 3>& pad);
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride, std::int64_t pad);
// x: (N, Cin, D, H, W), w: (Cin, Cout, kd, kh, kw).
Tensor conv_transpose3d(const Tensor& x, const Tensor& w, const Tensor& b,
                        const std::array<std::int64_t, 3>& stride, const std::array<std::int64_t, 3>& pad);
Tensor upsample_nearest3d(const Tensor& x, std::int64_t factor);
// grid: (N, P, 3) continuous voxel indices (d, h, w) into x (N, C, D, H, W);
// samples outside the volume read as zero. Returns (N, C, P).
Tensor grid_sample_trilinear(const Tensor& x, const Tensor& grid);
Tensor permute(const Tensor& a, const std::vector<int>& axes);
// (N, C, D, H, W) instance normalization over spatial dims with per-channel affine.
Tensor instance_norm3d(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

std::int64_t conv_out_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride, std::int64_t pad);

}  // namespace angio
