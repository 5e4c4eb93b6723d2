#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tensor_detail.hpp"

namespace angio {

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor div(const Tensor& a, const Tensor& b) { return mul(a, pow_scalar(b, -1.0)); }

Tensor square(const Tensor& a) { return pow_scalar(a, 2.0); }

Tensor sqrt(const Tensor& a) { return pow_scalar(a, 0.5); }

Tensor sum_all(const Tensor& a) { return sum_to(a, {}); }

Tensor mean_all(const Tensor& a) { return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean_to(const Tensor& a, Shape shape) {
  const std::int64_t factor = a.numel() / shape_numel(shape);
  return mul_scalar(sum_to(a, std::move(shape)), 1.0 / static_cast<double>(factor));
}

Tensor softmax_lastdim(const Tensor& a) {
  const auto& s = a.shape();
  if (s.empty()) throw std::invalid_argument("softmax_lastdim: rank-0 input");
  // Stability shift by the per-row maximum; the shift is a constant and the
  // composite's derivative is unchanged by it.
  Shape row_shape = s;
  row_shape.back() = 1;
  Tensor shift;
  {
    NoGradGuard ng;
    shift = Tensor::zeros(row_shape, a.dtype());
    const std::int64_t cols = s.back();
    const std::int64_t rows = a.numel() / cols;
    if (a.dtype() == Dtype::kF32) {
      auto in = a.cdata_f32();
      auto out = shift.data_f32();
      for (std::int64_t r = 0; r < rows; ++r) {
        float m = in[static_cast<std::size_t>(r * cols)];
        for (std::int64_t c = 1; c < cols; ++c) m = std::max(m, in[static_cast<std::size_t>(r * cols + c)]);
        out[static_cast<std::size_t>(r)] = m;
      }
    } else {
      auto in = a.cdata_f64();
      auto out = shift.data_f64();
      for (std::int64_t r = 0; r < rows; ++r) {
        double m = in[static_cast<std::size_t>(r * cols)];
        for (std::int64_t c = 1; c < cols; ++c) m = std::max(m, in[static_cast<std::size_t>(r * cols + c)]);
        out[static_cast<std::size_t>(r)] = m;
      }
    }
  }
  Tensor e = exp(sub(a, shift));
  Tensor denom = sum_to(e, row_shape);
  return div(e, denom);
}

Tensor layer_norm_lastdim(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  const auto& s = a.shape();
  if (s.empty()) throw std::invalid_argument("layer_norm_lastdim: rank-0 input");
  Shape row_shape = s;
  row_shape.back() = 1;
  Tensor m = mean_to(a, row_shape);
  Tensor centered = sub(a, m);
  Tensor var = mean_to(square(centered), row_shape);
  Tensor inv = pow_scalar(add_scalar(var, eps), -0.5);
  Tensor normalized = mul(centered, inv);
  if (gamma.defined()) normalized = mul(normalized, gamma);
  if (beta.defined()) normalized = add(normalized, beta);
  return normalized;
}

Tensor gelu(const Tensor& a) {
  // Exact form x * Phi(x) with Phi the standard normal CDF.
  Tensor phi = mul_scalar(add_scalar(erf(mul_scalar(a, 1.0 / std::numbers::sqrt2)), 1.0), 0.5);
  return mul(a, phi);
}

Tensor l2_norm_all(const Tensor& a) { return sqrt(sum_all(square(a))); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor out = matmul(x, w);
  if (b.defined()) out = add(out, b);
  return out;
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, const std::array<std::int64_t, 3>& stride,
              const std::array<std::int64_t, 3>& pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 5 || ws.size() != 5) {
    throw std::invalid_argument("conv3d: expected input (N,Cin,D,H,W) and weight (Cout,Cin,kd,kh,kw), got " +
                                shape_str(xs) + " and " + shape_str(ws));
  }
  if (xs[1] != ws[1]) {
    throw std::invalid_argument("conv3d: input channels " + std::to_string(xs[1]) + " != weight channels " +
                                std::to_string(ws[1]));
  }
  const std::int64_t cout = ws[0];
  const std::array<std::int64_t, 3> kernel{ws[2], ws[3], ws[4]};
  Tensor cols = unfold3d(x, kernel, stride, pad);  // (N, L, Cin*K)
  const std::int64_t l = cols.shape()[1];
  Tensor w2 = transpose_last2(reshape(w, {cout, ws[1] * ws[2] * ws[3] * ws[4]}));  // (Cin*K, Cout)
  Tensor out = matmul(cols, w2);                                                   // (N, L, Cout)
  if (b.defined()) out = add(out, reshape(b, {cout}));
  out = transpose_last2(out);  // (N, Cout, L)
  const std::int64_t od = conv_out_extent(xs[2], kernel[0], stride[0], pad[0]);
  const std::int64_t oh = conv_out_extent(xs[3], kernel[1], stride[1], pad[1]);
  const std::int64_t ow = conv_out_extent(xs[4], kernel[2], stride[2], pad[2]);
  (void)l;
  return reshape(out, {xs[0], cout, od, oh, ow});
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride, std::int64_t pad) {
  return conv3d(x, w, b, {stride, stride, stride}, {pad, pad, pad});
}

Tensor conv_transpose3d(const Tensor& x, const Tensor& w, const Tensor& b, const std::array<std::int64_t, 3>& stride,
                        const std::array<std::int64_t, 3>& pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 5 || ws.size() != 5) {
    throw std::invalid_argument("conv_transpose3d: expected input (N,Cin,D,H,W) and weight (Cin,Cout,kd,kh,kw)");
  }
  if (xs[1] != ws[0]) {
    throw std::invalid_argument("conv_transpose3d: input channels " + std::to_string(xs[1]) +
                                " != weight leading dim " + std::to_string(ws[0]));
  }
  const std::int64_t cin = ws[0], cout = ws[1];
  const std::array<std::int64_t, 3> kernel{ws[2], ws[3], ws[4]};
  const std::int64_t od = (xs[2] - 1) * stride[0] - 2 * pad[0] + kernel[0];
  const std::int64_t oh = (xs[3] - 1) * stride[1] - 2 * pad[1] + kernel[1];
  const std::int64_t ow = (xs[4] - 1) * stride[2] - 2 * pad[2] + kernel[2];
  if (od < 1 || oh < 1 || ow < 1) throw std::invalid_argument("conv_transpose3d: output extent collapses to zero");
  // Columns of the adjoint: (N, L, Cout*K) = x tokens x flattened weight.
  Tensor xt = transpose_last2(reshape(x, {xs[0], cin, xs[2] * xs[3] * xs[4]}));  // (N, L, Cin)
  Tensor w2 = reshape(w, {cin, cout * kernel[0] * kernel[1] * kernel[2]});
  Tensor cols = matmul(xt, w2);  // (N, L, Cout*K)
  Tensor out = fold3d(cols, {xs[0], cout, od, oh, ow}, kernel, stride, pad);
  if (b.defined()) out = add(out, reshape(b, {cout, 1, 1, 1}));
  return out;
}

Tensor upsample_nearest3d(const Tensor& x, std::int64_t factor) {
  const auto& s = x.shape();
  if (s.size() != 5) throw std::invalid_argument("upsample_nearest3d: expected (N,C,D,H,W), got " + shape_str(s));
  if (factor < 1) throw std::invalid_argument("upsample_nearest3d: factor must be >= 1");
  const std::int64_t n = s[0], c = s[1], d = s[2], h = s[3], w = s[4];
  const std::int64_t od = d * factor, oh = h * factor, ow = w * factor;
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  idx->resize(static_cast<std::size_t>(n * c * od * oh * ow));
  std::size_t i = 0;
  for (std::int64_t nn = 0; nn < n; ++nn)
    for (std::int64_t cc = 0; cc < c; ++cc) {
      const std::int64_t base = (nn * c + cc) * d * h * w;
      for (std::int64_t z = 0; z < od; ++z)
        for (std::int64_t y = 0; y < oh; ++y)
          for (std::int64_t xx = 0; xx < ow; ++xx)
            (*idx)[i++] = base + (z / factor) * h * w + (y / factor) * w + (xx / factor);
    }
  return gather_cells(x, idx, {n, c, od, oh, ow});
}

Tensor grid_sample_trilinear(const Tensor& x, const Tensor& grid) {
  const auto& xs = x.shape();
  const auto& gs = grid.shape();
  if (xs.size() != 5) throw std::invalid_argument("grid_sample: volume must be (N,C,D,H,W), got " + shape_str(xs));
  if (gs.size() != 3 || gs[2] != 3 || gs[0] != xs[0]) {
    throw std::invalid_argument("grid_sample: grid must be (N,P,3) with matching batch, got " + shape_str(gs));
  }
  const std::int64_t n = xs[0], c = xs[1], d = xs[2], h = xs[3], w = xs[4];
  const std::int64_t p = gs[1];

  // Integer corner and the fractional remainder. The corner is a constant
  // of the graph; the remainder keeps the dependence on `grid`.
  Tensor corner_const;
  std::vector<std::int64_t> cz(static_cast<std::size_t>(n * p)), cy(cz.size()), cx(cz.size());
  {
    NoGradGuard ng;
    corner_const = Tensor::zeros(gs, grid.dtype());
    const auto vals = grid.to_vector();
    std::vector<double> floors(vals.size());
    for (std::size_t i = 0; i < static_cast<std::size_t>(n * p); ++i) {
      const double fz = std::floor(vals[i * 3 + 0]);
      const double fy = std::floor(vals[i * 3 + 1]);
      const double fx = std::floor(vals[i * 3 + 2]);
      floors[i * 3 + 0] = fz;
      floors[i * 3 + 1] = fy;
      floors[i * 3 + 2] = fx;
      cz[i] = static_cast<std::int64_t>(fz);
      cy[i] = static_cast<std::int64_t>(fy);
      cx[i] = static_cast<std::int64_t>(fx);
    }
    if (grid.dtype() == Dtype::kF32) {
      auto out = corner_const.data_f32();
      for (std::size_t i = 0; i < floors.size(); ++i) out[i] = static_cast<float>(floors[i]);
    } else {
      auto out = corner_const.data_f64();
      for (std::size_t i = 0; i < floors.size(); ++i) out[i] = floors[i];
    }
  }
  Tensor frac = sub(grid, corner_const);  // (N,P,3), differentiable in grid

  // Per-axis weights (N,1,P) for the low corner (1-f) and high corner (f).
  auto axis_frac = [&](int axis) {
    Tensor fa = narrow(frac, 2, axis, 1);      // (N,P,1)
    return reshape(fa, {n, 1, p});             // broadcasts over channels
  };
  Tensor fz_t = axis_frac(0), fy_t = axis_frac(1), fx_t = axis_frac(2);
  Tensor one_minus_fz = add_scalar(neg(fz_t), 1.0);
  Tensor one_minus_fy = add_scalar(neg(fy_t), 1.0);
  Tensor one_minus_fx = add_scalar(neg(fx_t), 1.0);

  Tensor acc;
  for (int bit = 0; bit < 8; ++bit) {
    const int dz = (bit >> 2) & 1, dy = (bit >> 1) & 1, dx = bit & 1;
    auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n * c * p));
    for (std::int64_t nn = 0; nn < n; ++nn) {
      for (std::int64_t pp = 0; pp < p; ++pp) {
        const std::size_t g = static_cast<std::size_t>(nn * p + pp);
        const std::int64_t z = cz[g] + dz, y = cy[g] + dy, xx = cx[g] + dx;
        const bool inside = z >= 0 && z < d && y >= 0 && y < h && xx >= 0 && xx < w;
        const std::int64_t flat = inside ? z * h * w + y * w + xx : -1;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          (*idx)[static_cast<std::size_t>((nn * c + ch) * p + pp)] =
              flat < 0 ? -1 : (nn * c + ch) * d * h * w + flat;
        }
      }
    }
    Tensor v = gather_cells(x, idx, {n, c, p});
    Tensor wgt = mul(mul(dz ? fz_t : one_minus_fz, dy ? fy_t : one_minus_fy), dx ? fx_t : one_minus_fx);
    Tensor term = mul(v, wgt);
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc;
}

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
  const auto& s = a.shape();
  const std::size_t rank = s.size();
  if (axes.size() != rank) throw std::invalid_argument("permute: axes size mismatch");
  Shape out_shape(rank);
  for (std::size_t k = 0; k < rank; ++k) out_shape[k] = s[static_cast<std::size_t>(axes[k])];
  std::vector<std::int64_t> in_strides(rank, 1);
  for (std::size_t k = rank - 1; k-- > 0;) in_strides[k] = in_strides[k + 1] * s[k + 1];
  std::vector<std::int64_t> perm_strides(rank);
  for (std::size_t k = 0; k < rank; ++k) perm_strides[k] = in_strides[static_cast<std::size_t>(axes[k])];
  auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(a.numel()));
  std::vector<std::int64_t> pos(rank, 0);
  std::int64_t src = 0;
  for (std::size_t i = 0; i < idx->size(); ++i) {
    (*idx)[i] = src;
    for (std::size_t k = rank; k-- > 0;) {
      if (++pos[k] < out_shape[k]) {
        src += perm_strides[k];
        break;
      }
      pos[k] = 0;
      src -= perm_strides[k] * (out_shape[k] - 1);
    }
  }
  return gather_cells(a, idx, out_shape);
}

Tensor instance_norm3d(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const auto& s = x.shape();
  if (s.size() != 5) throw std::invalid_argument("instance_norm3d: expected (N,C,D,H,W), got " + shape_str(s));
  const Shape stat_shape{s[0], s[1], 1, 1, 1};
  Tensor m = mean_to(x, stat_shape);
  Tensor centered = sub(x, m);
  Tensor var = mean_to(square(centered), stat_shape);
  Tensor inv = pow_scalar(add_scalar(var, eps), -0.5);
  Tensor normalized = mul(centered, inv);
  if (gamma.defined()) normalized = mul(normalized, reshape(gamma, {s[1], 1, 1, 1}));
  if (beta.defined()) normalized = add(normalized, reshape(beta, {s[1], 1, 1, 1}));
  return normalized;
}

}  // namespace angio
