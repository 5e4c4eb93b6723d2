#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "tensor_detail.hpp"

namespace angio {
namespace detail {

void shape_error(OpKind kind, const std::string& detail) {
  throw std::invalid_argument(std::string(op_name(kind)) + ": " + detail);
}

namespace {

void check_finite_inputs(OpKind kind, const std::vector<Tensor>& inputs) {
  if (!strict_mode_enabled()) return;
  for (const auto& t : inputs) {
    if (!t.all_finite()) {
      throw std::runtime_error(std::string(op_name(kind)) + ": non-finite input in strict mode");
    }
  }
}

Shape broadcast_shapes(OpKind kind, const Shape& a, const Shape& b) {
  const std::size_t ra = a.size(), rb = b.size();
  const std::size_t r = std::max(ra, rb);
  Shape out(r);
  for (std::size_t k = 0; k < r; ++k) {
    const std::int64_t da = k < ra ? a[ra - 1 - k] : 1;
    const std::int64_t db = k < rb ? b[rb - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      shape_error(kind, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[r - 1 - k] = std::max(da, db);
  }
  return out;
}

// Strides for reading a tensor of shape `in` as if broadcast to `out`
// (right-aligned; size-1 axes get stride 0).
std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::int64_t> strides(out.size(), 0);
  std::int64_t s = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t ai = in.size() - 1 - k;
    const std::size_t oi = out.size() - 1 - k;
    strides[oi] = (in[ai] == 1 && out[oi] != 1) ? 0 : s;
    s *= in[ai];
  }
  return strides;
}

bool sum_to_compatible(const Shape& src, const Shape& dst) {
  if (dst.size() > src.size()) return false;
  for (std::size_t k = 0; k < dst.size(); ++k) {
    const std::int64_t d = dst[dst.size() - 1 - k];
    const std::int64_t s = src[src.size() - 1 - k];
    if (d != s && d != 1) return false;
  }
  return true;
}

template <typename T>
struct EigenRowMajor {
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<Matrix>;
  using ConstMap = Eigen::Map<const Matrix>;
};

template <typename T>
std::span<T> data_of(Tensor& t);
template <>
std::span<float> data_of<float>(Tensor& t) { return t.data_f32(); }
template <>
std::span<double> data_of<double>(Tensor& t) { return t.data_f64(); }

template <typename T>
std::span<const T> cdata_of(const Tensor& t);
template <>
std::span<const float> cdata_of<float>(const Tensor& t) { return t.cdata_f32(); }
template <>
std::span<const double> cdata_of<double>(const Tensor& t) { return t.cdata_f64(); }

template <typename T, typename F>
Tensor elementwise_binary(OpKind kind, const Tensor& a, const Tensor& b, F f) {
  const Shape out_shape = broadcast_shapes(kind, a.shape(), b.shape());
  Tensor out = Tensor::zeros(out_shape, a.dtype());
  auto oa = cdata_of<T>(a);
  auto ob = cdata_of<T>(b);
  auto od = data_of<T>(out);
  if (a.shape() == out_shape && b.shape() == out_shape) {
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = f(oa[i], ob[i]);
    return out;
  }
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  const std::size_t rank = out_shape.size();
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < od.size(); ++i) {
    od[i] = f(oa[static_cast<std::size_t>(ia)], ob[static_cast<std::size_t>(ib)]);
    for (std::size_t k = rank; k-- > 0;) {
      if (++idx[k] < out_shape[k]) {
        ia += sa[k];
        ib += sb[k];
        break;
      }
      idx[k] = 0;
      ia -= sa[k] * (out_shape[k] - 1);
      ib -= sb[k] * (out_shape[k] - 1);
    }
  }
  return out;
}

template <typename T, typename F>
Tensor elementwise_unary(const Tensor& a, F f) {
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  auto in = cdata_of<T>(a);
  auto od = data_of<T>(out);
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = f(in[i]);
  return out;
}

template <typename T>
Tensor matmul_impl(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) {
    shape_error(OpKind::kMatmul, "operands must have rank >= 2, got " + shape_str(sa) + " x " + shape_str(sb));
  }
  const std::int64_t m = sa[sa.size() - 2];
  const std::int64_t k = sa[sa.size() - 1];
  const std::int64_t kb = sb[sb.size() - 2];
  const std::int64_t n = sb[sb.size() - 1];
  if (k != kb) {
    shape_error(OpKind::kMatmul, "inner dims disagree: " + shape_str(sa) + " x " + shape_str(sb));
  }
  const bool b_broadcast = sb.size() == 2;
  Shape lead(sa.begin(), sa.end() - 2);
  if (!b_broadcast) {
    Shape leadb(sb.begin(), sb.end() - 2);
    if (lead != leadb) {
      shape_error(OpKind::kMatmul, "batch dims disagree: " + shape_str(sa) + " x " + shape_str(sb));
    }
  }
  const std::int64_t batch = shape_numel(lead);
  Shape out_shape = lead;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out = Tensor::zeros(out_shape, a.dtype());
  auto pa = cdata_of<T>(a);
  auto pb = cdata_of<T>(b);
  auto po = data_of<T>(out);
  using M = typename EigenRowMajor<T>::Map;
  using C = typename EigenRowMajor<T>::ConstMap;
  for (std::int64_t i = 0; i < batch; ++i) {
    C ma(pa.data() + i * m * k, m, k);
    C mb(pb.data() + (b_broadcast ? 0 : i * k * n), k, n);
    M mo(po.data() + i * m * n, m, n);
    mo.noalias() = ma * mb;
  }
  return out;
}

template <typename T>
Tensor transpose_last2_impl(const Tensor& a) {
  const auto& s = a.shape();
  if (s.size() < 2) shape_error(OpKind::kTransposeLast2, "rank must be >= 2, got " + shape_str(s));
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 1], out_shape[s.size() - 2]);
  const std::int64_t r = s[s.size() - 2];
  const std::int64_t c = s[s.size() - 1];
  const std::int64_t batch = a.numel() / (r * c);
  Tensor out = Tensor::zeros(out_shape, a.dtype());
  auto in = cdata_of<T>(a);
  auto od = data_of<T>(out);
  for (std::int64_t bidx = 0; bidx < batch; ++bidx) {
    const T* src = in.data() + bidx * r * c;
    T* dst = od.data() + bidx * r * c;
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  }
  return out;
}

template <typename T>
Tensor broadcast_to_impl(const Tensor& a, const Shape& target) {
  if (broadcast_shapes(OpKind::kBroadcastTo, a.shape(), target) != target) {
    shape_error(OpKind::kBroadcastTo, "cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(target));
  }
  Tensor out = Tensor::zeros(target, a.dtype());
  auto in = cdata_of<T>(a);
  auto od = data_of<T>(out);
  const auto strides = broadcast_strides(a.shape(), target);
  const std::size_t rank = target.size();
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t ia = 0;
  for (std::size_t i = 0; i < od.size(); ++i) {
    od[i] = in[static_cast<std::size_t>(ia)];
    for (std::size_t k = rank; k-- > 0;) {
      if (++idx[k] < target[k]) {
        ia += strides[k];
        break;
      }
      idx[k] = 0;
      ia -= strides[k] * (target[k] - 1);
    }
  }
  return out;
}

template <typename T>
Tensor sum_to_impl(const Tensor& a, const Shape& target) {
  if (!sum_to_compatible(a.shape(), target)) {
    shape_error(OpKind::kSumTo, "cannot reduce " + shape_str(a.shape()) + " to " + shape_str(target));
  }
  Tensor out = Tensor::zeros(target, a.dtype());
  auto in = cdata_of<T>(a);
  auto od = data_of<T>(out);
  const auto strides = broadcast_strides(target, a.shape());
  const auto& src_shape = a.shape();
  const std::size_t rank = src_shape.size();
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t io = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    od[static_cast<std::size_t>(io)] += in[i];
    for (std::size_t k = rank; k-- > 0;) {
      if (++idx[k] < src_shape[k]) {
        io += strides[k];
        break;
      }
      idx[k] = 0;
      io -= strides[k] * (src_shape[k] - 1);
    }
  }
  return out;
}

template <typename T>
Tensor concat_impl(const std::vector<Tensor>& parts, int dim) {
  const auto& s0 = parts[0].shape();
  const std::size_t rank = s0.size();
  if (dim < 0 || static_cast<std::size_t>(dim) >= rank) {
    shape_error(OpKind::kConcat, "dim " + std::to_string(dim) + " out of range for rank " + std::to_string(rank));
  }
  Shape out_shape = s0;
  std::int64_t total = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != rank) shape_error(OpKind::kConcat, "rank mismatch between parts");
    for (std::size_t k = 0; k < rank; ++k) {
      if (k != static_cast<std::size_t>(dim) && s[k] != s0[k]) {
        shape_error(OpKind::kConcat, "part shape " + shape_str(s) + " incompatible with " + shape_str(s0) +
                                         " along dim " + std::to_string(dim));
      }
    }
    total += s[static_cast<std::size_t>(dim)];
  }
  out_shape[static_cast<std::size_t>(dim)] = total;

  std::int64_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < static_cast<std::size_t>(dim); ++k) outer *= s0[k];
  for (std::size_t k = static_cast<std::size_t>(dim) + 1; k < rank; ++k) inner *= s0[k];

  Tensor out = Tensor::zeros(out_shape, parts[0].dtype());
  auto od = data_of<T>(out);
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    auto in = cdata_of<T>(p);
    const std::int64_t d = p.shape()[static_cast<std::size_t>(dim)];
    for (std::int64_t o = 0; o < outer; ++o) {
      std::memcpy(od.data() + (o * total + offset) * inner, in.data() + o * d * inner,
                  static_cast<std::size_t>(d * inner) * sizeof(T));
    }
    offset += d;
  }
  return out;
}

template <typename T>
Tensor narrow_impl(const Tensor& a, int dim, std::int64_t start, std::int64_t length) {
  const auto& s = a.shape();
  if (dim < 0 || static_cast<std::size_t>(dim) >= s.size()) {
    shape_error(OpKind::kNarrow, "dim out of range");
  }
  const std::int64_t d = s[static_cast<std::size_t>(dim)];
  if (start < 0 || length <= 0 || start + length > d) {
    shape_error(OpKind::kNarrow, "window [" + std::to_string(start) + "," + std::to_string(start + length) +
                                     ") outside extent " + std::to_string(d));
  }
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(dim)] = length;
  std::int64_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < static_cast<std::size_t>(dim); ++k) outer *= s[k];
  for (std::size_t k = static_cast<std::size_t>(dim) + 1; k < s.size(); ++k) inner *= s[k];
  Tensor out = Tensor::zeros(out_shape, a.dtype());
  auto in = cdata_of<T>(a);
  auto od = data_of<T>(out);
  for (std::int64_t o = 0; o < outer; ++o) {
    std::memcpy(od.data() + o * length * inner, in.data() + (o * d + start) * inner,
                static_cast<std::size_t>(length * inner) * sizeof(T));
  }
  return out;
}

template <typename T>
Tensor embed_narrow_impl(const Tensor& a, int dim, std::int64_t start, std::int64_t out_extent) {
  const auto& s = a.shape();
  if (dim < 0 || static_cast<std::size_t>(dim) >= s.size()) {
    shape_error(OpKind::kEmbedNarrow, "dim out of range");
  }
  const std::int64_t d = s[static_cast<std::size_t>(dim)];
  if (start < 0 || start + d > out_extent) {
    shape_error(OpKind::kEmbedNarrow, "window does not fit output extent " + std::to_string(out_extent));
  }
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(dim)] = out_extent;
  std::int64_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < static_cast<std::size_t>(dim); ++k) outer *= s[k];
  for (std::size_t k = static_cast<std::size_t>(dim) + 1; k < s.size(); ++k) inner *= s[k];
  Tensor out = Tensor::zeros(out_shape, a.dtype());
  auto in = cdata_of<T>(a);
  auto od = data_of<T>(out);
  for (std::int64_t o = 0; o < outer; ++o) {
    std::memcpy(od.data() + (o * out_extent + start) * inner, in.data() + o * d * inner,
                static_cast<std::size_t>(d * inner) * sizeof(T));
  }
  return out;
}

struct Conv3dDims {
  std::int64_t n, c, d, h, w;
  std::int64_t kd, kh, kw, sd, sh, sw, pd, ph, pw;
  std::int64_t od, oh, ow;
};

Conv3dDims unfold_dims(OpKind kind, const Shape& in_shape, const Attrs& attrs) {
  if (in_shape.size() != 5) {
    shape_error(kind, "expected (N,C,D,H,W) input, got " + shape_str(in_shape));
  }
  Conv3dDims dd{};
  dd.n = in_shape[0];
  dd.c = in_shape[1];
  dd.d = in_shape[2];
  dd.h = in_shape[3];
  dd.w = in_shape[4];
  dd.kd = attrs.i[0];
  dd.kh = attrs.i[1];
  dd.kw = attrs.i[2];
  dd.sd = attrs.i[3];
  dd.sh = attrs.i[4];
  dd.sw = attrs.i[5];
  dd.pd = attrs.i[6];
  dd.ph = attrs.i[7];
  dd.pw = attrs.i[8];
  if (dd.kd < 1 || dd.kh < 1 || dd.kw < 1 || dd.sd < 1 || dd.sh < 1 || dd.sw < 1 || dd.pd < 0 || dd.ph < 0 ||
      dd.pw < 0) {
    shape_error(kind, "kernel/stride must be positive, padding non-negative");
  }
  dd.od = conv_out_extent(dd.d, dd.kd, dd.sd, dd.pd);
  dd.oh = conv_out_extent(dd.h, dd.kh, dd.sh, dd.ph);
  dd.ow = conv_out_extent(dd.w, dd.kw, dd.sw, dd.pw);
  if (dd.od < 1 || dd.oh < 1 || dd.ow < 1) {
    shape_error(kind, "kernel " + std::to_string(dd.kd) + "x" + std::to_string(dd.kh) + "x" + std::to_string(dd.kw) +
                          " does not fit input " + shape_str(in_shape));
  }
  return dd;
}

template <typename T>
Tensor unfold3d_impl(const Tensor& a, const Attrs& attrs) {
  const Conv3dDims dd = unfold_dims(OpKind::kUnfold3d, a.shape(), attrs);
  const std::int64_t l = dd.od * dd.oh * dd.ow;
  const std::int64_t kvol = dd.kd * dd.kh * dd.kw;
  Tensor out = Tensor::zeros({dd.n, l, dd.c * kvol}, a.dtype());
  auto in = cdata_of<T>(a);
  auto od = data_of<T>(out);
  const std::int64_t hw = dd.h * dd.w;
  for (std::int64_t n = 0; n < dd.n; ++n) {
    const T* src = in.data() + n * dd.c * dd.d * hw;
    T* dst = od.data() + n * l * dd.c * kvol;
    std::int64_t lpos = 0;
    for (std::int64_t oz = 0; oz < dd.od; ++oz)
      for (std::int64_t oy = 0; oy < dd.oh; ++oy)
        for (std::int64_t ox = 0; ox < dd.ow; ++ox, ++lpos) {
          T* row = dst + lpos * dd.c * kvol;
          const std::int64_t z0 = oz * dd.sd - dd.pd;
          const std::int64_t y0 = oy * dd.sh - dd.ph;
          const std::int64_t x0 = ox * dd.sw - dd.pw;
          for (std::int64_t c = 0; c < dd.c; ++c) {
            const T* chan = src + c * dd.d * hw;
            T* cell = row + c * kvol;
            for (std::int64_t kz = 0; kz < dd.kd; ++kz) {
              const std::int64_t z = z0 + kz;
              for (std::int64_t ky = 0; ky < dd.kh; ++ky) {
                const std::int64_t y = y0 + ky;
                for (std::int64_t kx = 0; kx < dd.kw; ++kx) {
                  const std::int64_t x = x0 + kx;
                  const bool inside = z >= 0 && z < dd.d && y >= 0 && y < dd.h && x >= 0 && x < dd.w;
                  *cell++ = inside ? chan[z * hw + y * dd.w + x] : T(0);
                }
              }
            }
          }
        }
  }
  return out;
}

template <typename T>
Tensor fold3d_impl(const Tensor& cols, const Attrs& attrs) {
  const Shape& out_shape = attrs.shape;
  const Conv3dDims dd = unfold_dims(OpKind::kFold3d, out_shape, attrs);
  const std::int64_t l = dd.od * dd.oh * dd.ow;
  const std::int64_t kvol = dd.kd * dd.kh * dd.kw;
  const Shape expect = {dd.n, l, dd.c * kvol};
  if (cols.shape() != expect) {
    shape_error(OpKind::kFold3d, "columns " + shape_str(cols.shape()) + " do not match expected " + shape_str(expect));
  }
  Tensor out = Tensor::zeros(out_shape, cols.dtype());
  auto in = cdata_of<T>(cols);
  auto od = data_of<T>(out);
  const std::int64_t hw = dd.h * dd.w;
  for (std::int64_t n = 0; n < dd.n; ++n) {
    const T* src = in.data() + n * l * dd.c * kvol;
    T* dst = od.data() + n * dd.c * dd.d * hw;
    std::int64_t lpos = 0;
    for (std::int64_t oz = 0; oz < dd.od; ++oz)
      for (std::int64_t oy = 0; oy < dd.oh; ++oy)
        for (std::int64_t ox = 0; ox < dd.ow; ++ox, ++lpos) {
          const T* row = src + lpos * dd.c * kvol;
          const std::int64_t z0 = oz * dd.sd - dd.pd;
          const std::int64_t y0 = oy * dd.sh - dd.ph;
          const std::int64_t x0 = ox * dd.sw - dd.pw;
          for (std::int64_t c = 0; c < dd.c; ++c) {
            T* chan = dst + c * dd.d * hw;
            const T* cell = row + c * kvol;
            for (std::int64_t kz = 0; kz < dd.kd; ++kz) {
              const std::int64_t z = z0 + kz;
              for (std::int64_t ky = 0; ky < dd.kh; ++ky) {
                const std::int64_t y = y0 + ky;
                for (std::int64_t kx = 0; kx < dd.kw; ++kx) {
                  const std::int64_t x = x0 + kx;
                  const bool inside = z >= 0 && z < dd.d && y >= 0 && y < dd.h && x >= 0 && x < dd.w;
                  if (inside) chan[z * hw + y * dd.w + x] += *cell;
                  ++cell;
                }
              }
            }
          }
        }
  }
  return out;
}

template <typename T>
Tensor gather_cells_impl(const Tensor& a, const Attrs& attrs) {
  const auto& idx = *attrs.idx;
  if (static_cast<std::int64_t>(idx.size()) != shape_numel(attrs.shape)) {
    shape_error(OpKind::kGatherCells, "index count " + std::to_string(idx.size()) + " does not fill output " +
                                          shape_str(attrs.shape));
  }
  Tensor out = Tensor::zeros(attrs.shape, a.dtype());
  auto in = cdata_of<T>(a);
  auto od = data_of<T>(out);
  const std::int64_t n = a.numel();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::int64_t j = idx[i];
    if (j >= n) shape_error(OpKind::kGatherCells, "index " + std::to_string(j) + " out of range");
    od[i] = j >= 0 ? in[static_cast<std::size_t>(j)] : T(0);
  }
  return out;
}

template <typename T>
Tensor scatter_cells_impl(const Tensor& a, const Attrs& attrs) {
  const auto& idx = *attrs.idx;
  if (static_cast<std::int64_t>(idx.size()) != a.numel()) {
    shape_error(OpKind::kScatterCells, "index count does not match input size");
  }
  Tensor out = Tensor::zeros(attrs.shape, a.dtype());
  auto in = cdata_of<T>(a);
  auto od = data_of<T>(out);
  const std::int64_t n = shape_numel(attrs.shape);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::int64_t j = idx[i];
    if (j >= n) shape_error(OpKind::kScatterCells, "index " + std::to_string(j) + " out of range");
    if (j >= 0) od[static_cast<std::size_t>(j)] += in[i];
  }
  return out;
}

template <typename T>
Tensor max_pool3d_impl(const Tensor& a, Attrs& attrs) {
  const std::int64_t k = attrs.i[0];
  const std::int64_t s = attrs.i[1];
  const auto& shape = a.shape();
  if (shape.size() != 5) shape_error(OpKind::kMaxPool3d, "expected (N,C,D,H,W), got " + shape_str(shape));
  if (k < 1 || s < 1) shape_error(OpKind::kMaxPool3d, "kernel and stride must be positive");
  const std::int64_t n = shape[0], c = shape[1], d = shape[2], h = shape[3], w = shape[4];
  const std::int64_t od = conv_out_extent(d, k, s, 0);
  const std::int64_t oh = conv_out_extent(h, k, s, 0);
  const std::int64_t ow = conv_out_extent(w, k, s, 0);
  if (od < 1 || oh < 1 || ow < 1) shape_error(OpKind::kMaxPool3d, "window does not fit input " + shape_str(shape));
  Tensor out = Tensor::zeros({n, c, od, oh, ow}, a.dtype());
  auto in = cdata_of<T>(a);
  auto odat = data_of<T>(out);
  auto indices = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(out.numel()));
  const std::int64_t hw = h * w;
  std::size_t oi = 0;
  for (std::int64_t nn = 0; nn < n; ++nn)
    for (std::int64_t cc = 0; cc < c; ++cc) {
      const std::int64_t base = (nn * c + cc) * d * hw;
      for (std::int64_t oz = 0; oz < od; ++oz)
        for (std::int64_t oy = 0; oy < oh; ++oy)
          for (std::int64_t ox = 0; ox < ow; ++ox, ++oi) {
            T best = -std::numeric_limits<T>::infinity();
            std::int64_t best_idx = -1;
            for (std::int64_t kz = 0; kz < k; ++kz) {
              const std::int64_t z = oz * s + kz;
              if (z >= d) break;
              for (std::int64_t ky = 0; ky < k; ++ky) {
                const std::int64_t y = oy * s + ky;
                if (y >= h) break;
                for (std::int64_t kx = 0; kx < k; ++kx) {
                  const std::int64_t x = ox * s + kx;
                  if (x >= w) break;
                  const std::int64_t j = base + z * hw + y * w + x;
                  const T v = in[static_cast<std::size_t>(j)];
                  if (v > best) {
                    best = v;
                    best_idx = j;
                  }
                }
              }
            }
            odat[oi] = best;
            (*indices)[oi] = best_idx;
          }
    }
  attrs.idx = std::move(indices);
  return out;
}

}  // namespace

Tensor kernel_compute(OpKind kind, const std::vector<Tensor>& inputs, const Attrs& attrs) {
  check_finite_inputs(kind, inputs);
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    if (inputs[i].dtype() != inputs[0].dtype()) {
      throw std::invalid_argument(std::string(op_name(kind)) + ": mixed dtypes between inputs");
    }
  }
  const Dtype dt = inputs.empty() ? Dtype::kF64 : inputs[0].dtype();
  auto pick = [&](auto&& fn) -> Tensor {
    if (dt == Dtype::kF32) return fn.template operator()<float>();
    return fn.template operator()<double>();
  };

  switch (kind) {
    case OpKind::kAdd:
      return pick([&]<typename T>() { return elementwise_binary<T>(kind, inputs[0], inputs[1], [](T x, T y) { return x + y; }); });
    case OpKind::kSub:
      return pick([&]<typename T>() { return elementwise_binary<T>(kind, inputs[0], inputs[1], [](T x, T y) { return x - y; }); });
    case OpKind::kMul:
      return pick([&]<typename T>() { return elementwise_binary<T>(kind, inputs[0], inputs[1], [](T x, T y) { return x * y; }); });
    case OpKind::kAddScalar:
      return pick([&]<typename T>() { const T c = static_cast<T>(attrs.a); return elementwise_unary<T>(inputs[0], [c](T x) { return x + c; }); });
    case OpKind::kMulScalar:
      return pick([&]<typename T>() { const T c = static_cast<T>(attrs.a); return elementwise_unary<T>(inputs[0], [c](T x) { return x * c; }); });
    case OpKind::kPowScalar: {
      const double p = attrs.a;
      if (p == 2.0) return pick([&]<typename T>() { return elementwise_unary<T>(inputs[0], [](T x) { return x * x; }); });
      if (p == 0.5) return pick([&]<typename T>() { return elementwise_unary<T>(inputs[0], [](T x) { return std::sqrt(x); }); });
      if (p == 1.0) return pick([&]<typename T>() { return elementwise_unary<T>(inputs[0], [](T x) { return x; }); });
      if (p == -1.0) return pick([&]<typename T>() { return elementwise_unary<T>(inputs[0], [](T x) { return T(1) / x; }); });
      return pick([&]<typename T>() { const T tp = static_cast<T>(p); return elementwise_unary<T>(inputs[0], [tp](T x) { return std::pow(x, tp); }); });
    }
    case OpKind::kExp:
      return pick([&]<typename T>() { return elementwise_unary<T>(inputs[0], [](T x) { return std::exp(x); }); });
    case OpKind::kLog:
      return pick([&]<typename T>() { return elementwise_unary<T>(inputs[0], [](T x) { return std::log(x); }); });
    case OpKind::kErf:
      return pick([&]<typename T>() { return elementwise_unary<T>(inputs[0], [](T x) { return std::erf(x); }); });
    case OpKind::kTanh:
      return pick([&]<typename T>() { return elementwise_unary<T>(inputs[0], [](T x) { return std::tanh(x); }); });
    case OpKind::kSigmoid:
      return pick([&]<typename T>() {
        return elementwise_unary<T>(inputs[0], [](T x) {
          if (x >= 0) return T(1) / (T(1) + std::exp(-x));
          const T e = std::exp(x);
          return e / (T(1) + e);
        });
      });
    case OpKind::kRelu:
      return pick([&]<typename T>() { return elementwise_unary<T>(inputs[0], [](T x) { return x > 0 ? x : T(0); }); });
    case OpKind::kLeakyRelu:
      return pick([&]<typename T>() { const T al = static_cast<T>(attrs.a); return elementwise_unary<T>(inputs[0], [al](T x) { return x > 0 ? x : al * x; }); });
    case OpKind::kAbs:
      return pick([&]<typename T>() { return elementwise_unary<T>(inputs[0], [](T x) { return std::abs(x); }); });
    case OpKind::kMatmul:
      return pick([&]<typename T>() { return matmul_impl<T>(inputs[0], inputs[1]); });
    case OpKind::kTransposeLast2:
      return pick([&]<typename T>() { return transpose_last2_impl<T>(inputs[0]); });
    case OpKind::kReshape: {
      if (shape_numel(attrs.shape) != inputs[0].numel()) {
        shape_error(kind, "cannot view " + shape_str(inputs[0].shape()) + " as " + shape_str(attrs.shape));
      }
      // Contiguous row-major reinterpretation; shares storage.
      auto impl = std::make_shared<TensorImpl>();
      impl->shape = attrs.shape;
      impl->dtype = inputs[0].dtype();
      impl->storage = inputs[0].impl()->storage;
      impl->id = 0;
      Tensor out(std::move(impl));
      return out;
    }
    case OpKind::kBroadcastTo:
      return pick([&]<typename T>() { return broadcast_to_impl<T>(inputs[0], attrs.shape); });
    case OpKind::kSumTo:
      return pick([&]<typename T>() { return sum_to_impl<T>(inputs[0], attrs.shape); });
    case OpKind::kConcat:
      return pick([&]<typename T>() { return concat_impl<T>(inputs, static_cast<int>(attrs.i[0])); });
    case OpKind::kNarrow:
      return pick([&]<typename T>() { return narrow_impl<T>(inputs[0], static_cast<int>(attrs.i[0]), attrs.i[1], attrs.i[2]); });
    case OpKind::kEmbedNarrow:
      return pick([&]<typename T>() { return embed_narrow_impl<T>(inputs[0], static_cast<int>(attrs.i[0]), attrs.i[1], attrs.i[2]); });
    case OpKind::kUnfold3d:
      return pick([&]<typename T>() { return unfold3d_impl<T>(inputs[0], attrs); });
    case OpKind::kFold3d:
      return pick([&]<typename T>() { return fold3d_impl<T>(inputs[0], attrs); });
    case OpKind::kGatherCells:
      return pick([&]<typename T>() { return gather_cells_impl<T>(inputs[0], attrs); });
    case OpKind::kScatterCells:
      return pick([&]<typename T>() { return scatter_cells_impl<T>(inputs[0], attrs); });
    case OpKind::kMaxPool3d:
      return pick([&]<typename T>() { return max_pool3d_impl<T>(inputs[0], const_cast<Attrs&>(attrs)); });
    case OpKind::kLeaf:
      break;
  }
  throw std::logic_error("kernel_compute: not a computable kernel");
}

Tensor dispatch(OpKind kind, std::vector<Tensor> inputs, Attrs attrs) {
  Tensor out = kernel_compute(kind, inputs, attrs);
  bool needs_grad = false;
  if (grad_mode_enabled()) {
    for (const auto& t : inputs) {
      if (t.requires_grad()) {
        needs_grad = true;
        break;
      }
    }
  }
  if (needs_grad) {
    out.impl()->requires_grad = true;
    auto node = std::make_unique<Node>();
    node->kind = kind;
    node->attrs = std::move(attrs);
    node->input_needs_grad.reserve(inputs.size());
    for (const auto& t : inputs) {
      node->input_needs_grad.push_back(t.requires_grad() ? 1 : 0);
    }
    node->inputs = std::move(inputs);
    out.impl()->node = std::move(node);
  }
  return out;
}

}  // namespace detail

// ---- public kernel op wrappers ----

Tensor add(const Tensor& a, const Tensor& b) { return detail::dispatch(OpKind::kAdd, {a, b}, {}); }
Tensor sub(const Tensor& a, const Tensor& b) { return detail::dispatch(OpKind::kSub, {a, b}, {}); }
Tensor mul(const Tensor& a, const Tensor& b) { return detail::dispatch(OpKind::kMul, {a, b}, {}); }

Tensor add_scalar(const Tensor& a, double c) {
  Attrs at;
  at.a = c;
  return detail::dispatch(OpKind::kAddScalar, {a}, std::move(at));
}

Tensor mul_scalar(const Tensor& a, double c) {
  Attrs at;
  at.a = c;
  return detail::dispatch(OpKind::kMulScalar, {a}, std::move(at));
}

Tensor pow_scalar(const Tensor& a, double p) {
  Attrs at;
  at.a = p;
  return detail::dispatch(OpKind::kPowScalar, {a}, std::move(at));
}

Tensor exp(const Tensor& a) { return detail::dispatch(OpKind::kExp, {a}, {}); }
Tensor log(const Tensor& a) { return detail::dispatch(OpKind::kLog, {a}, {}); }
Tensor erf(const Tensor& a) { return detail::dispatch(OpKind::kErf, {a}, {}); }
Tensor tanh(const Tensor& a) { return detail::dispatch(OpKind::kTanh, {a}, {}); }
Tensor sigmoid(const Tensor& a) { return detail::dispatch(OpKind::kSigmoid, {a}, {}); }
Tensor relu(const Tensor& a) { return detail::dispatch(OpKind::kRelu, {a}, {}); }

Tensor leaky_relu(const Tensor& a, double negative_slope) {
  Attrs at;
  at.a = negative_slope;
  return detail::dispatch(OpKind::kLeakyRelu, {a}, std::move(at));
}

Tensor abs(const Tensor& a) { return detail::dispatch(OpKind::kAbs, {a}, {}); }
Tensor matmul(const Tensor& a, const Tensor& b) { return detail::dispatch(OpKind::kMatmul, {a, b}, {}); }
Tensor transpose_last2(const Tensor& a) { return detail::dispatch(OpKind::kTransposeLast2, {a}, {}); }

Tensor reshape(const Tensor& a, Shape shape) {
  Attrs at;
  at.shape = std::move(shape);
  return detail::dispatch(OpKind::kReshape, {a}, std::move(at));
}

Tensor broadcast_to(const Tensor& a, Shape shape) {
  Attrs at;
  at.shape = std::move(shape);
  return detail::dispatch(OpKind::kBroadcastTo, {a}, std::move(at));
}

Tensor sum_to(const Tensor& a, Shape shape) {
  Attrs at;
  at.shape = std::move(shape);
  return detail::dispatch(OpKind::kSumTo, {a}, std::move(at));
}

Tensor concat(const std::vector<Tensor>& parts, int dim) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Attrs at;
  at.push(dim);
  return detail::dispatch(OpKind::kConcat, parts, std::move(at));
}

Tensor narrow(const Tensor& a, int dim, std::int64_t start, std::int64_t length) {
  Attrs at;
  at.push(dim);
  at.push(start);
  at.push(length);
  return detail::dispatch(OpKind::kNarrow, {a}, std::move(at));
}

Tensor embed_narrow(const Tensor& a, int dim, std::int64_t start, std::int64_t out_extent) {
  Attrs at;
  at.push(dim);
  at.push(start);
  at.push(out_extent);
  return detail::dispatch(OpKind::kEmbedNarrow, {a}, std::move(at));
}

namespace {
angio::Attrs conv_attrs(const std::array<std::int64_t, 3>& kernel, const std::array<std::int64_t, 3>& stride,
                        const std::array<std::int64_t, 3>& pad) {
  angio::Attrs at;
  for (const auto v : kernel) at.push(v);
  for (const auto v : stride) at.push(v);
  for (const auto v : pad) at.push(v);
  return at;
}
}  // namespace

Tensor unfold3d(const Tensor& a, const std::array<std::int64_t, 3>& kernel, const std::array<std::int64_t, 3>& stride,
                const std::array<std::int64_t, 3>& pad) {
  return detail::dispatch(OpKind::kUnfold3d, {a}, conv_attrs(kernel, stride, pad));
}

Tensor fold3d(const Tensor& cols, Shape out_shape, const std::array<std::int64_t, 3>& kernel,
              const std::array<std::int64_t, 3>& stride, const std::array<std::int64_t, 3>& pad) {
  Attrs at = conv_attrs(kernel, stride, pad);
  at.shape = std::move(out_shape);
  return detail::dispatch(OpKind::kFold3d, {cols}, std::move(at));
}

Tensor gather_cells(const Tensor& a, std::shared_ptr<const std::vector<std::int64_t>> idx, Shape out_shape) {
  Attrs at;
  at.idx = std::move(idx);
  at.shape = std::move(out_shape);
  return detail::dispatch(OpKind::kGatherCells, {a}, std::move(at));
}

Tensor scatter_cells(const Tensor& a, std::shared_ptr<const std::vector<std::int64_t>> idx, Shape out_shape) {
  Attrs at;
  at.idx = std::move(idx);
  at.shape = std::move(out_shape);
  return detail::dispatch(OpKind::kScatterCells, {a}, std::move(at));
}

Tensor max_pool3d(const Tensor& a, std::int64_t kernel, std::int64_t stride) {
  Attrs at;
  at.push(kernel);
  at.push(stride);
  return detail::dispatch(OpKind::kMaxPool3d, {a}, std::move(at));
}

}  // namespace angio
