#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tensor_detail.hpp"

namespace angio {

namespace {

// Boolean-valued constant derived from a tensor's values; detached by
// construction (computed outside the graph).
Tensor value_mask(const Tensor& x, double on_positive, double on_nonpositive) {
  NoGradGuard ng;
  Tensor m = Tensor::zeros(x.shape(), x.dtype());
  if (x.dtype() == Dtype::kF32) {
    auto in = x.cdata_f32();
    auto out = m.data_f32();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0 ? static_cast<float>(on_positive) : static_cast<float>(on_nonpositive);
  } else {
    auto in = x.cdata_f64();
    auto out = m.data_f64();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0 ? on_positive : on_nonpositive;
  }
  return m;
}

Tensor sign_mask(const Tensor& x) {
  NoGradGuard ng;
  Tensor m = Tensor::zeros(x.shape(), x.dtype());
  if (x.dtype() == Dtype::kF32) {
    auto in = x.cdata_f32();
    auto out = m.data_f32();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0 ? 1.0f : (in[i] < 0 ? -1.0f : 0.0f);
  } else {
    auto in = x.cdata_f64();
    auto out = m.data_f64();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0 ? 1.0 : (in[i] < 0 ? -1.0 : 0.0);
  }
  return m;
}

// Gradients of one node w.r.t. each of its inputs, expressed through the
// public op API so the result is itself differentiable.
std::vector<Tensor> backward_build(const Node& node, const Tensor& grad_out, const Tensor& out) {
  const auto& in = node.inputs;
  switch (node.kind) {
    case OpKind::kAdd:
      return {sum_to(grad_out, in[0].shape()), sum_to(grad_out, in[1].shape())};
    case OpKind::kSub:
      return {sum_to(grad_out, in[0].shape()), neg(sum_to(grad_out, in[1].shape()))};
    case OpKind::kMul:
      return {sum_to(mul(grad_out, in[1]), in[0].shape()), sum_to(mul(grad_out, in[0]), in[1].shape())};
    case OpKind::kAddScalar:
      return {grad_out};
    case OpKind::kMulScalar:
      return {mul_scalar(grad_out, node.attrs.a)};
    case OpKind::kPowScalar: {
      const double p = node.attrs.a;
      return {mul(grad_out, mul_scalar(pow_scalar(in[0], p - 1.0), p))};
    }
    case OpKind::kExp:
      return {mul(grad_out, out)};
    case OpKind::kLog:
      return {mul(grad_out, pow_scalar(in[0], -1.0))};
    case OpKind::kErf: {
      constexpr double two_over_sqrt_pi = 2.0 * std::numbers::inv_sqrtpi;
      Tensor d = mul_scalar(exp(neg(square(in[0]))), two_over_sqrt_pi);
      return {mul(grad_out, d)};
    }
    case OpKind::kTanh:
      return {mul(grad_out, add_scalar(neg(square(out)), 1.0))};
    case OpKind::kSigmoid:
      return {mul(grad_out, mul(out, add_scalar(neg(out), 1.0)))};
    case OpKind::kRelu:
      return {mul(grad_out, value_mask(in[0], 1.0, 0.0))};
    case OpKind::kLeakyRelu:
      return {mul(grad_out, value_mask(in[0], 1.0, node.attrs.a))};
    case OpKind::kAbs:
      return {mul(grad_out, sign_mask(in[0]))};
    case OpKind::kMatmul: {
      const auto& sa = in[0].shape();
      const auto& sb = in[1].shape();
      Tensor ga = matmul(grad_out, transpose_last2(in[1]));
      Tensor gb;
      if (sb.size() == 2 && sa.size() > 2) {
        const std::int64_t k = sa[sa.size() - 1];
        const std::int64_t n = sb[1];
        Tensor a2 = reshape(in[0], {in[0].numel() / k, k});
        Tensor g2 = reshape(grad_out, {grad_out.numel() / n, n});
        gb = matmul(transpose_last2(a2), g2);
      } else {
        gb = matmul(transpose_last2(in[0]), grad_out);
      }
      return {ga, gb};
    }
    case OpKind::kTransposeLast2:
      return {transpose_last2(grad_out)};
    case OpKind::kReshape:
      return {reshape(grad_out, in[0].shape())};
    case OpKind::kBroadcastTo:
      return {sum_to(grad_out, in[0].shape())};
    case OpKind::kSumTo:
      return {broadcast_to(grad_out, in[0].shape())};
    case OpKind::kConcat: {
      const int dim = static_cast<int>(node.attrs.i[0]);
      std::vector<Tensor> grads;
      grads.reserve(in.size());
      std::int64_t offset = 0;
      for (const auto& part : in) {
        const std::int64_t len = part.shape()[static_cast<std::size_t>(dim)];
        grads.push_back(narrow(grad_out, dim, offset, len));
        offset += len;
      }
      return grads;
    }
    case OpKind::kNarrow: {
      const int dim = static_cast<int>(node.attrs.i[0]);
      return {embed_narrow(grad_out, dim, node.attrs.i[1], in[0].shape()[static_cast<std::size_t>(dim)])};
    }
    case OpKind::kEmbedNarrow: {
      const int dim = static_cast<int>(node.attrs.i[0]);
      return {narrow(grad_out, dim, node.attrs.i[1], in[0].shape()[static_cast<std::size_t>(dim)])};
    }
    case OpKind::kUnfold3d: {
      const auto& a = node.attrs;
      return {fold3d(grad_out, in[0].shape(), {a.i[0], a.i[1], a.i[2]}, {a.i[3], a.i[4], a.i[5]},
                     {a.i[6], a.i[7], a.i[8]})};
    }
    case OpKind::kFold3d: {
      const auto& a = node.attrs;
      return {unfold3d(grad_out, {a.i[0], a.i[1], a.i[2]}, {a.i[3], a.i[4], a.i[5]}, {a.i[6], a.i[7], a.i[8]})};
    }
    case OpKind::kGatherCells:
      return {scatter_cells(grad_out, node.attrs.idx, in[0].shape())};
    case OpKind::kScatterCells:
      return {gather_cells(grad_out, node.attrs.idx, in[0].shape())};
    case OpKind::kMaxPool3d:
      return {scatter_cells(reshape(grad_out, grad_out.shape()), node.attrs.idx, in[0].shape())};
    case OpKind::kLeaf:
      break;
  }
  throw std::logic_error("backward_build: unreachable");
}

struct GraphWalk {
  std::vector<TensorImpl*> topo;  // inputs precede outputs
  std::unordered_set<TensorImpl*> seen;
};

void topo_sort(TensorImpl* root, GraphWalk& walk) {
  struct Frame {
    TensorImpl* impl;
    std::size_t next_child = 0;
  };
  if (walk.seen.count(root)) return;
  std::vector<Frame> stack{{root}};
  walk.seen.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.impl->node && f.next_child < f.impl->node->inputs.size()) {
      const std::size_t k = f.next_child++;
      TensorImpl* child = f.impl->node->inputs[k].impl();
      if (f.impl->node->input_needs_grad[k] && !walk.seen.count(child)) {
        walk.seen.insert(child);
        stack.push_back({child});
      }
      continue;
    }
    walk.topo.push_back(f.impl);
    stack.pop_back();
  }
}

// Core reverse sweep shared by backward() and backward_as_graph().
std::unordered_map<TensorImpl*, Tensor> reverse_sweep(const Tensor& loss, bool create_graph) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  GraphWalk walk;
  topo_sort(loss.impl(), walk);

  if (create_graph) {
    for (TensorImpl* impl : walk.topo) {
      if (impl->node && !second_order_capable(impl->node->kind)) {
        throw std::runtime_error(std::string("second-order backward is not supported through op '") +
                                 op_name(impl->node->kind) + "'");
      }
    }
  }

  std::unordered_map<TensorImpl*, Tensor> grads;
  grads.emplace(loss.impl(), Tensor::ones(loss.shape(), loss.dtype()));

  auto run = [&]() {
    for (auto it = walk.topo.rbegin(); it != walk.topo.rend(); ++it) {
      TensorImpl* impl = *it;
      if (!impl->node) continue;
      auto git = grads.find(impl);
      if (git == grads.end()) continue;
      const Tensor grad_out = git->second;
      const Tensor out_handle(impl->shared_from_this());
      std::vector<Tensor> input_grads = backward_build(*impl->node, grad_out, out_handle);
      const auto& inputs = impl->node->inputs;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        TensorImpl* in_impl = inputs[k].impl();
        if (!impl->node->input_needs_grad[k]) continue;
        auto found = grads.find(in_impl);
        if (found == grads.end()) {
          grads.emplace(in_impl, input_grads[k]);
        } else {
          found->second = add(found->second, input_grads[k]);
        }
      }
    }
  };

  if (create_graph) {
    run();
  } else {
    NoGradGuard ng;
    run();
  }
  return grads;
}

}  // namespace

void backward(const Tensor& loss, const BackwardOptions& opts, const std::vector<Tensor>& also_zero) {
  auto grads = reverse_sweep(loss, opts.create_graph);
  GraphWalk walk;
  topo_sort(loss.impl(), walk);
  for (TensorImpl* impl : walk.topo) {
    if (impl->node || !impl->requires_grad) continue;
    auto it = grads.find(impl);
    if (it == grads.end()) continue;
    Tensor g = opts.create_graph ? it->second : it->second.detach();
    if (impl->grad) {
      if (!opts.accumulate) {
        throw std::runtime_error(
            "backward: leaf already holds a gradient; clear_grad() first or pass accumulate=true");
      }
      NoGradGuard ng;
      g = add(Tensor(impl->grad), g);
    }
    impl->grad = g.impl_ptr();
  }
  for (const auto& t : also_zero) {
    if (!t.requires_grad()) continue;
    if (!t.impl()->grad) {
      t.impl()->grad = Tensor::zeros(t.shape(), t.dtype()).impl_ptr();
    }
  }
}

Tensor backward_as_graph(const Tensor& scalar, const Tensor& wrt) {
  auto grads = reverse_sweep(scalar, /*create_graph=*/true);
  auto it = grads.find(wrt.impl());
  if (it == grads.end()) return Tensor::zeros(wrt.shape(), wrt.dtype());
  return it->second;
}

Tensor replay_forward(const Tensor& out) {
  std::unordered_map<const TensorImpl*, Tensor> memo;
  struct Frame {
    const TensorImpl* impl;
    std::size_t next_child = 0;
  };
  std::vector<Frame> stack{{out.impl()}};
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (memo.count(f.impl)) {
      stack.pop_back();
      continue;
    }
    if (!f.impl->node) {
      memo.emplace(f.impl, Tensor(const_cast<TensorImpl*>(f.impl)->shared_from_this()));
      stack.pop_back();
      continue;
    }
    if (f.next_child < f.impl->node->inputs.size()) {
      const TensorImpl* child = f.impl->node->inputs[f.next_child++].impl();
      if (!memo.count(child)) stack.push_back({child});
      continue;
    }
    std::vector<Tensor> ins;
    ins.reserve(f.impl->node->inputs.size());
    for (const auto& t : f.impl->node->inputs) ins.push_back(memo.at(t.impl()));
    Attrs attrs = f.impl->node->attrs;  // copy so max-pool's saved argmax is not clobbered
    NoGradGuard ng;
    memo.emplace(f.impl, detail::kernel_compute(f.impl->node->kind, ins, attrs));
    stack.pop_back();
  }
  return memo.at(out.impl());
}

Tensor primitive_forward(OpKind kind, const std::vector<Tensor>& inputs, const Attrs& attrs) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw std::invalid_argument(std::string(op_name(kind)) + ": expected " + std::to_string(n) + " inputs, got " +
                                  std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::kAdd: need(2); return add(inputs[0], inputs[1]);
    case OpKind::kSub: need(2); return sub(inputs[0], inputs[1]);
    case OpKind::kMul: need(2); return mul(inputs[0], inputs[1]);
    case OpKind::kAddScalar: need(1); return add_scalar(inputs[0], attrs.a);
    case OpKind::kMulScalar: need(1); return mul_scalar(inputs[0], attrs.a);
    case OpKind::kPowScalar: need(1); return pow_scalar(inputs[0], attrs.a);
    case OpKind::kExp: need(1); return exp(inputs[0]);
    case OpKind::kLog: need(1); return log(inputs[0]);
    case OpKind::kErf: need(1); return erf(inputs[0]);
    case OpKind::kTanh: need(1); return tanh(inputs[0]);
    case OpKind::kSigmoid: need(1); return sigmoid(inputs[0]);
    case OpKind::kRelu: need(1); return relu(inputs[0]);
    case OpKind::kLeakyRelu: need(1); return leaky_relu(inputs[0], attrs.a);
    case OpKind::kAbs: need(1); return abs(inputs[0]);
    case OpKind::kMatmul: need(2); return matmul(inputs[0], inputs[1]);
    case OpKind::kTransposeLast2: need(1); return transpose_last2(inputs[0]);
    case OpKind::kReshape: need(1); return reshape(inputs[0], attrs.shape);
    case OpKind::kBroadcastTo: need(1); return broadcast_to(inputs[0], attrs.shape);
    case OpKind::kSumTo: need(1); return sum_to(inputs[0], attrs.shape);
    case OpKind::kConcat: return concat(inputs, static_cast<int>(attrs.i[0]));
    case OpKind::kNarrow: need(1); return narrow(inputs[0], static_cast<int>(attrs.i[0]), attrs.i[1], attrs.i[2]);
    case OpKind::kEmbedNarrow:
      need(1);
      return embed_narrow(inputs[0], static_cast<int>(attrs.i[0]), attrs.i[1], attrs.i[2]);
    case OpKind::kUnfold3d:
      need(1);
      return unfold3d(inputs[0], {attrs.i[0], attrs.i[1], attrs.i[2]}, {attrs.i[3], attrs.i[4], attrs.i[5]},
                      {attrs.i[6], attrs.i[7], attrs.i[8]});
    case OpKind::kFold3d:
      need(1);
      return fold3d(inputs[0], attrs.shape, {attrs.i[0], attrs.i[1], attrs.i[2]}, {attrs.i[3], attrs.i[4], attrs.i[5]},
                    {attrs.i[6], attrs.i[7], attrs.i[8]});
    case OpKind::kGatherCells: need(1); return gather_cells(inputs[0], attrs.idx, attrs.shape);
    case OpKind::kScatterCells: need(1); return scatter_cells(inputs[0], attrs.idx, attrs.shape);
    case OpKind::kMaxPool3d: need(1); return max_pool3d(inputs[0], attrs.i[0], attrs.i[1]);
    case OpKind::kLeaf: break;
  }
  throw std::invalid_argument("primitive_forward: 'leaf' is not a computable op");
}

}  // namespace angio
