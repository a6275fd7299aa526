#include "afgan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "afgan/error.hpp"
#include "gemm.hpp"

namespace afgan {

namespace {

using Index = std::int64_t;

constexpr double kLogFloor = 1e-12;

template <typename T>
std::vector<T> buffer(Index n) {
  return std::vector<T>(static_cast<std::size_t>(n));
}

// Location of a per-channel operand inside a broadcast over dimension 1.
struct Broadcast {
  bool active = false;
  Index channels = 1;
  Index inner = 1;
  Index channel_of(Index i) const { return (i / inner) % channels; }
};

Broadcast resolve_broadcast(const Shape& a, const Shape& b) {
  if (a == b) return {};
  const bool per_channel = b.rank() == 1 || (b.rank() == 4 && b[0] == 1 && b[2] == 1 && b[3] == 1);
  if (per_channel && a.rank() >= 2) {
    const Index c = b.rank() == 1 ? b[0] : b[1];
    if (a[1] == c) {
      Broadcast bc{true, c, 1};
      for (std::size_t d = 2; d < a.rank(); ++d) bc.inner *= a[d];
      return bc;
    }
  }
  throw ShapeError("shape mismatch: cannot combine " + a.str() + " with " + b.str());
}

// Sum of per-element values into the broadcast operand's channels.
template <typename T, typename F>
Tensor<T> reduce_to_channels(const Shape& b_shape, const Broadcast& bc, Index n, F value_at) {
  std::vector<double> acc(static_cast<std::size_t>(bc.channels), 0.0);
  for (Index i = 0; i < n; ++i) acc[static_cast<std::size_t>(bc.channel_of(i))] += value_at(i);
  std::vector<T> out(acc.begin(), acc.end());
  return Tensor<T>(b_shape, std::move(out));
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> binary(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>& b) {
  const Broadcast bc = resolve_broadcast(a.shape(), b.shape());
  const Index n = a.numel();
  auto av = a.data();
  auto bv = b.data();
  auto out = buffer<T>(n);
  auto b_at = [&](Index i) { return bc.active ? bv[static_cast<std::size_t>(bc.channel_of(i))] : bv[static_cast<std::size_t>(i)]; };
  for (Index i = 0; i < n; ++i) {
    const T x = av[static_cast<std::size_t>(i)];
    const T y = b_at(i);
    T r{};
    switch (op) {
      case ElementwiseOp::add: r = x + y; break;
      case ElementwiseOp::sub: r = x - y; break;
      case ElementwiseOp::mul: r = x * y; break;
      default: throw ContractError("not a binary elementwise op");
    }
    out[static_cast<std::size_t>(i)] = r;
  }

  Tensor<T> result(a.shape(), std::move(out));
  const Tensor<T> sa = a.detach();
  const Tensor<T> sb = b.detach();
  return Tape<T>::record(std::move(result), {&a, &b}, [op, bc, sa, sb](const Tensor<T>& g, const std::vector<bool>& needs) {
    std::vector<Tensor<T>> grads(2);
    const Index n = g.numel();
    auto gv = g.data();
    auto av = sa.data();
    auto bv = sb.data();
    auto b_at = [&](Index i) { return bc.active ? bv[static_cast<std::size_t>(bc.channel_of(i))] : bv[static_cast<std::size_t>(i)]; };
    if (needs[0]) {
      if (op == ElementwiseOp::mul) {
        auto ga = buffer<T>(n);
        for (Index i = 0; i < n; ++i) ga[static_cast<std::size_t>(i)] = gv[static_cast<std::size_t>(i)] * b_at(i);
        grads[0] = Tensor<T>(sa.shape(), std::move(ga));
      } else {
        grads[0] = g.detach();
      }
    }
    if (needs[1]) {
      const T sign = op == ElementwiseOp::sub ? T(-1) : T(1);
      auto term = [&](Index i) -> double {
        const T gi = gv[static_cast<std::size_t>(i)];
        return op == ElementwiseOp::mul ? double(gi * av[static_cast<std::size_t>(i)]) : double(sign * gi);
      };
      if (bc.active) {
        grads[1] = reduce_to_channels<T>(sb.shape(), bc, n, term);
      } else {
        auto gb = buffer<T>(n);
        for (Index i = 0; i < n; ++i) gb[static_cast<std::size_t>(i)] = static_cast<T>(term(i));
        grads[1] = Tensor<T>(sb.shape(), std::move(gb));
      }
    }
    return grads;
  });
}

template <typename T>
Tensor<T> unary(ElementwiseOp op, const Tensor<T>& a, double slope) {
  const Index n = a.numel();
  auto av = a.data();
  auto out = buffer<T>(n);
  const T s = static_cast<T>(slope);
  for (Index i = 0; i < n; ++i) {
    const T x = av[static_cast<std::size_t>(i)];
    T r{};
    switch (op) {
      case ElementwiseOp::neg: r = -x; break;
      case ElementwiseOp::log: r = std::log(std::max(x, static_cast<T>(kLogFloor))); break;
      case ElementwiseOp::exp: r = std::exp(x); break;
      case ElementwiseOp::tanh: r = std::tanh(x); break;
      case ElementwiseOp::sigmoid: r = sigmoid_scalar(x); break;
      case ElementwiseOp::relu: r = x > T(0) ? x : T(0); break;
      case ElementwiseOp::leaky_relu: r = x > T(0) ? x : s * x; break;
      default: throw ContractError("not a unary elementwise op");
    }
    out[static_cast<std::size_t>(i)] = r;
  }
  Tensor<T> result(a.shape(), std::move(out));
  const Tensor<T> sx = a.detach();
  const Tensor<T> sy = result.detach();
  return Tape<T>::record(std::move(result), {&a}, [op, s, sx, sy](const Tensor<T>& g, const std::vector<bool>&) {
    const Index n = g.numel();
    auto gv = g.data();
    auto xv = sx.data();
    auto yv = sy.data();
    auto gx = buffer<T>(n);
    for (Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const T x = xv[k];
      const T y = yv[k];
      T d{};
      switch (op) {
        case ElementwiseOp::neg: d = T(-1); break;
        case ElementwiseOp::log: d = x >= static_cast<T>(kLogFloor) ? T(1) / x : T(0); break;
        case ElementwiseOp::exp: d = y; break;
        case ElementwiseOp::tanh: d = T(1) - y * y; break;
        case ElementwiseOp::sigmoid: d = y * (T(1) - y); break;
        case ElementwiseOp::relu: d = x > T(0) ? T(1) : T(0); break;
        case ElementwiseOp::leaky_relu: d = x > T(0) ? T(1) : s; break;
        default: break;
      }
      gx[k] = gv[k] * d;
    }
    return std::vector<Tensor<T>>{Tensor<T>(sx.shape(), std::move(gx))};
  });
}

// (N, C, S) -> (C, N*S)
template <typename T>
std::vector<T> to_channel_major(std::span<const T> src, Index n, Index c, Index s) {
  auto dst = buffer<T>(n * c * s);
  for (Index in = 0; in < n; ++in)
    for (Index ic = 0; ic < c; ++ic)
      std::copy_n(src.data() + (in * c + ic) * s, s, dst.data() + ic * n * s + in * s);
  return dst;
}

// (C, N*S) -> (N, C, S)
template <typename T>
std::vector<T> from_channel_major(std::span<const T> src, Index n, Index c, Index s) {
  auto dst = buffer<T>(n * c * s);
  for (Index in = 0; in < n; ++in)
    for (Index ic = 0; ic < c; ++ic)
      std::copy_n(src.data() + ic * n * s + in * s, s, dst.data() + (in * c + ic) * s);
  return dst;
}

// Patch matrix for cross-correlation of an (N, C, H, W) image producing an
// (OH, OW) map: rows (c, ky, kx), columns (n, oy, ox).
struct PatchGeometry {
  Index n, c, h, w, kh, kw, oh, ow;
  int sh, sw, ph, pw;
  Index rows() const { return c * kh * kw; }
  Index cols() const { return n * oh * ow; }
};

template <typename T>
std::vector<T> im2col(std::span<const T> img, const PatchGeometry& g) {
  auto cols = buffer<T>(g.rows() * g.cols());
  const Index plane = g.oh * g.ow;
  for (Index c = 0; c < g.c; ++c)
    for (Index ky = 0; ky < g.kh; ++ky)
      for (Index kx = 0; kx < g.kw; ++kx) {
        T* row = cols.data() + ((c * g.kh + ky) * g.kw + kx) * g.cols();
        for (Index n = 0; n < g.n; ++n) {
          const T* src = img.data() + (n * g.c + c) * g.h * g.w;
          T* dst = row + n * plane;
          for (Index oy = 0; oy < g.oh; ++oy) {
            const Index iy = oy * g.sh - g.ph + ky;
            if (iy < 0 || iy >= g.h) {
              std::fill_n(dst + oy * g.ow, g.ow, T(0));
              continue;
            }
            for (Index ox = 0; ox < g.ow; ++ox) {
              const Index ix = ox * g.sw - g.pw + kx;
              dst[oy * g.ow + ox] = (ix >= 0 && ix < g.w) ? src[iy * g.w + ix] : T(0);
            }
          }
        }
      }
  return cols;
}

template <typename T>
std::vector<T> col2im(std::span<const T> cols, const PatchGeometry& g) {
  auto img = std::vector<T>(static_cast<std::size_t>(g.n * g.c * g.h * g.w), T(0));
  const Index plane = g.oh * g.ow;
  for (Index c = 0; c < g.c; ++c)
    for (Index ky = 0; ky < g.kh; ++ky)
      for (Index kx = 0; kx < g.kw; ++kx) {
        const T* row = cols.data() + ((c * g.kh + ky) * g.kw + kx) * g.cols();
        for (Index n = 0; n < g.n; ++n) {
          T* dst = img.data() + (n * g.c + c) * g.h * g.w;
          const T* src = row + n * plane;
          for (Index oy = 0; oy < g.oh; ++oy) {
            const Index iy = oy * g.sh - g.ph + ky;
            if (iy < 0 || iy >= g.h) continue;
            for (Index ox = 0; ox < g.ow; ++ox) {
              const Index ix = ox * g.sw - g.pw + kx;
              if (ix >= 0 && ix < g.w) dst[iy * g.w + ix] += src[oy * g.ow + ox];
            }
          }
        }
      }
  return img;
}

template <typename T>
void add_channel_bias(std::vector<T>& out, std::span<const T> bias, Index n, Index c, Index s) {
  for (Index in = 0; in < n; ++in)
    for (Index ic = 0; ic < c; ++ic) {
      T* p = out.data() + (in * c + ic) * s;
      const T b = bias[static_cast<std::size_t>(ic)];
      for (Index k = 0; k < s; ++k) p[k] += b;
    }
}

template <typename T>
Tensor<T> channel_sums(std::span<const T> g, Index n, Index c, Index s) {
  std::vector<T> out(static_cast<std::size_t>(c));
  for (Index ic = 0; ic < c; ++ic) {
    double acc = 0.0;
    for (Index in = 0; in < n; ++in) {
      const T* p = g.data() + (in * c + ic) * s;
      for (Index k = 0; k < s; ++k) acc += p[k];
    }
    out[static_cast<std::size_t>(ic)] = static_cast<T>(acc);
  }
  return Tensor<T>(Shape{c}, std::move(out));
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.rank() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " + s.str());
  }
}

}  // namespace

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>* b, double slope) {
  switch (op) {
    case ElementwiseOp::add:
    case ElementwiseOp::sub:
    case ElementwiseOp::mul:
      if (b == nullptr) throw ContractError("binary elementwise op needs a second operand");
      return binary(op, a, *b);
    default:
      return unary(op, a, slope);
  }
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto av = a.data();
  std::vector<T> out(av.begin(), av.end());
  for (auto& v : out) v *= s;
  return Tape<T>::record(Tensor<T>(a.shape(), std::move(out)), {&a},
                         [s](const Tensor<T>& g, const std::vector<bool>&) {
                           auto gv = g.data();
                           std::vector<T> gx(gv.begin(), gv.end());
                           for (auto& v : gx) v *= s;
                           return std::vector<Tensor<T>>{Tensor<T>(g.shape(), std::move(gx))};
                         });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul lhs");
  require_rank(b.shape(), 2, "matmul rhs");
  const Index m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul inner dimensions disagree: " + a.shape().str() + " . " + b.shape().str());
  }
  auto out = buffer<T>(m * n);
  detail::gemm<T>(false, false, m, n, k, a.data().data(), b.data().data(), out.data());
  const Tensor<T> sa = a.detach();
  const Tensor<T> sb = b.detach();
  return Tape<T>::record(Tensor<T>(Shape{m, n}, std::move(out)), {&a, &b},
                         [sa, sb, m, n, k](const Tensor<T>& g, const std::vector<bool>& needs) {
                           std::vector<Tensor<T>> grads(2);
                           if (needs[0]) {
                             auto ga = buffer<T>(m * k);
                             detail::gemm<T>(false, true, m, k, n, g.data().data(), sb.data().data(), ga.data());
                             grads[0] = Tensor<T>(sa.shape(), std::move(ga));
                           }
                           if (needs[1]) {
                             auto gb = buffer<T>(k * n);
                             detail::gemm<T>(true, false, k, n, m, sa.data().data(), g.data().data(), gb.data());
                             grads[1] = Tensor<T>(sb.shape(), std::move(gb));
                           }
                           return grads;
                         });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape) {
  if (shape.numel() != a.numel()) {
    throw ShapeError("reshape changes element count: " + a.shape().str() + " -> " + shape.str());
  }
  const Shape original = a.shape();
  return Tape<T>::record(a.view(shape), {&a}, [original](const Tensor<T>& g, const std::vector<bool>&) {
    return std::vector<Tensor<T>>{g.view(original)};
  });
}

template <typename T>
Tensor<T> reduce(const Tensor<T>& a, Reduction kind, const std::optional<std::vector<int>>& axes) {
  const Shape& in = a.shape();
  std::vector<bool> reduced(in.rank(), !axes.has_value() || axes->empty());
  if (axes.has_value()) {
    for (int ax : *axes) {
      if (ax < 0 || static_cast<std::size_t>(ax) >= in.rank()) {
        throw ShapeError("reduce axis " + std::to_string(ax) + " out of range for shape " + in.str());
      }
      if (reduced[static_cast<std::size_t>(ax)]) {
        throw ShapeError("reduce axis " + std::to_string(ax) + " repeated");
      }
      reduced[static_cast<std::size_t>(ax)] = true;
    }
  }

  std::vector<std::int64_t> out_dims;
  for (std::size_t d = 0; d < in.rank(); ++d)
    if (!reduced[d]) out_dims.push_back(in[d]);
  const Shape out_shape(out_dims);

  // Map each input element to its output slot via mixed-radix counting.
  std::vector<Index> out_stride(in.rank(), 0);
  Index stride = 1;
  for (std::size_t d = in.rank(); d-- > 0;) {
    if (!reduced[d]) {
      out_stride[d] = stride;
      stride *= in[d];
    }
  }
  const Index n = a.numel();
  auto slots = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(n));
  {
    std::vector<Index> idx(in.rank(), 0);
    for (Index i = 0; i < n; ++i) {
      Index o = 0;
      for (std::size_t d = 0; d < in.rank(); ++d) o += idx[d] * out_stride[d];
      (*slots)[static_cast<std::size_t>(i)] = o;
      for (std::size_t d = in.rank(); d-- > 0;) {
        if (++idx[d] < in[d]) break;
        idx[d] = 0;
      }
    }
  }

  const Index count = n / out_shape.numel();
  const double factor = kind == Reduction::mean ? 1.0 / static_cast<double>(count) : 1.0;
  std::vector<double> acc(static_cast<std::size_t>(out_shape.numel()), 0.0);
  auto av = a.data();
  for (Index i = 0; i < n; ++i) acc[static_cast<std::size_t>((*slots)[static_cast<std::size_t>(i)])] += av[static_cast<std::size_t>(i)];
  std::vector<T> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i] * factor);

  return Tape<T>::record(Tensor<T>(out_shape, std::move(out)), {&a},
                         [in, slots, factor](const Tensor<T>& g, const std::vector<bool>&) {
                           auto gv = g.data();
                           auto gx = buffer<T>(in.numel());
                           for (std::size_t i = 0; i < gx.size(); ++i)
                             gx[i] = static_cast<T>(gv[static_cast<std::size_t>((*slots)[i])] * factor);
                           return std::vector<Tensor<T>>{Tensor<T>(in, std::move(gx))};
                         });
}

std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int padding) {
  if (kernel < 1 || stride < 1 || padding < 0) throw ShapeError("invalid convolution kernel/stride/padding");
  const std::int64_t span = in + 2 * padding - kernel;
  if (span < 0 || span % stride != 0) {
    throw ShapeError("convolution output extent (" + std::to_string(in) + " + 2*" + std::to_string(padding) + " - " +
                     std::to_string(kernel) + ")/" + std::to_string(stride) + " + 1 is not a positive integer");
  }
  return span / stride + 1;
}

std::int64_t conv_transpose_out_extent(std::int64_t in, int kernel, int stride, int padding) {
  if (kernel < 1 || stride < 1 || padding < 0) throw ShapeError("invalid convolution kernel/stride/padding");
  const std::int64_t out = (in - 1) * stride - 2 * padding + kernel;
  if (out < 1) {
    throw ShapeError("transposed convolution output extent (" + std::to_string(in) + " - 1)*" + std::to_string(stride) +
                     " - 2*" + std::to_string(padding) + " + " + std::to_string(kernel) + " = " + std::to_string(out) +
                     " is < 1");
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, const ConvGeometry& geo) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  const Index n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const Index o = weight.shape()[0], kh = weight.shape()[2], kw = weight.shape()[3];
  if (weight.shape()[1] != c) {
    throw ShapeError("conv2d input channels " + x.shape().str() + " do not match weight " + weight.shape().str());
  }
  if (bias != nullptr && bias->shape() != Shape{o}) {
    throw ShapeError("conv2d bias shape " + bias->shape().str() + " must be (" + std::to_string(o) + ")");
  }
  PatchGeometry pg{n, c, h, w, kh, kw,
                   conv_out_extent(h, static_cast<int>(kh), geo.stride[0], geo.padding[0]),
                   conv_out_extent(w, static_cast<int>(kw), geo.stride[1], geo.padding[1]),
                   geo.stride[0], geo.stride[1], geo.padding[0], geo.padding[1]};
  const Index plane = pg.oh * pg.ow;

  auto cols = std::make_shared<std::vector<T>>(im2col<T>(x.data(), pg));
  auto outm = buffer<T>(o * pg.cols());
  detail::gemm<T>(false, false, o, pg.cols(), pg.rows(), weight.data().data(), cols->data(), outm.data());
  auto out = from_channel_major<T>(outm, n, o, plane);
  if (bias != nullptr) add_channel_bias<T>(out, bias->data(), n, o, plane);

  const Tensor<T> sw = weight.detach();
  std::vector<const Tensor<T>*> operands{&x, &weight};
  if (bias != nullptr) operands.push_back(bias);
  const Shape xs = x.shape();
  return Tape<T>::record(
      Tensor<T>(Shape{n, o, pg.oh, pg.ow}, std::move(out)), operands,
      [pg, cols, sw, xs, o, plane](const Tensor<T>& g, const std::vector<bool>& needs) {
        std::vector<Tensor<T>> grads(needs.size());
        auto gm = to_channel_major<T>(g.data(), pg.n, o, plane);
        if (needs[0]) {
          auto dcols = buffer<T>(pg.rows() * pg.cols());
          detail::gemm<T>(true, false, pg.rows(), pg.cols(), o, sw.data().data(), gm.data(), dcols.data());
          grads[0] = Tensor<T>(xs, col2im<T>(dcols, pg));
        }
        if (needs[1]) {
          auto dw = buffer<T>(o * pg.rows());
          detail::gemm<T>(false, true, o, pg.rows(), pg.cols(), gm.data(), cols->data(), dw.data());
          grads[1] = Tensor<T>(sw.shape(), std::move(dw));
        }
        if (needs.size() > 2 && needs[2]) grads[2] = channel_sums<T>(g.data(), pg.n, o, plane);
        return grads;
      });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                           const ConvGeometry& geo) {
  require_rank(x.shape(), 4, "conv_transpose2d input");
  require_rank(weight.shape(), 4, "conv_transpose2d weight");
  const Index n = x.shape()[0], cin = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const Index cout = weight.shape()[1], kh = weight.shape()[2], kw = weight.shape()[3];
  if (weight.shape()[0] != cin) {
    throw ShapeError("conv_transpose2d input channels " + x.shape().str() + " do not match weight " +
                     weight.shape().str());
  }
  if (bias != nullptr && bias->shape() != Shape{cout}) {
    throw ShapeError("conv_transpose2d bias shape " + bias->shape().str() + " must be (" + std::to_string(cout) + ")");
  }
  const Index oh = conv_transpose_out_extent(h, static_cast<int>(kh), geo.stride[0], geo.padding[0]);
  const Index ow = conv_transpose_out_extent(w, static_cast<int>(kw), geo.stride[1], geo.padding[1]);
  // The output plays the role of the convolution input; x is the convolution output.
  PatchGeometry pg{n, cout, oh, ow, kh, kw, h, w, geo.stride[0], geo.stride[1], geo.padding[0], geo.padding[1]};
  const Index in_plane = h * w;

  auto xm = std::make_shared<std::vector<T>>(to_channel_major<T>(x.data(), n, cin, in_plane));
  auto cols = buffer<T>(pg.rows() * pg.cols());
  detail::gemm<T>(true, false, pg.rows(), pg.cols(), cin, weight.data().data(), xm->data(), cols.data());
  auto out = col2im<T>(cols, pg);
  if (bias != nullptr) add_channel_bias<T>(out, bias->data(), n, cout, oh * ow);

  const Tensor<T> sw = weight.detach();
  std::vector<const Tensor<T>*> operands{&x, &weight};
  if (bias != nullptr) operands.push_back(bias);
  const Shape xs = x.shape();
  return Tape<T>::record(
      Tensor<T>(Shape{n, cout, oh, ow}, std::move(out)), operands,
      [pg, xm, sw, xs, cin, cout, in_plane](const Tensor<T>& g, const std::vector<bool>& needs) {
        std::vector<Tensor<T>> grads(needs.size());
        auto dcols = im2col<T>(g.data(), pg);
        if (needs[0]) {
          auto dxm = buffer<T>(cin * pg.cols());
          detail::gemm<T>(false, false, cin, pg.cols(), pg.rows(), sw.data().data(), dcols.data(), dxm.data());
          grads[0] = Tensor<T>(xs, from_channel_major<T>(dxm, pg.n, cin, in_plane));
        }
        if (needs[1]) {
          auto dw = buffer<T>(cin * pg.rows());
          detail::gemm<T>(false, true, cin, pg.rows(), pg.cols(), xm->data(), dcols.data(), dw.data());
          grads[1] = Tensor<T>(sw.shape(), std::move(dw));
        }
        if (needs.size() > 2 && needs[2]) grads[2] = channel_sums<T>(g.data(), pg.n, cout, pg.h * pg.w);
        return grads;
      });
}

namespace {

struct NormDims {
  Index n, c, s;
  Index count() const { return n * s; }
};

NormDims norm_dims(const Shape& x, const Shape& gamma, const Shape& beta) {
  if (x.rank() != 4 && x.rank() != 2) throw ShapeError("batch norm input must be (N, C, H, W) or (N, C), got " + x.str());
  const Index c = x[1];
  if (gamma != Shape{c} || beta != Shape{c}) {
    throw ShapeError("batch norm affine parameters " + gamma.str() + "/" + beta.str() + " do not match " + x.str());
  }
  return {x[0], c, x.rank() == 4 ? x[2] * x[3] : 1};
}

// Gradients shared by both batch-norm modes for gamma and beta.
template <typename T>
void affine_grads(std::span<const T> g, std::span<const T> xhat, const NormDims& d, const std::vector<bool>& needs,
                  std::vector<Tensor<T>>& grads, std::vector<double>* sum_g, std::vector<double>* sum_gx) {
  std::vector<double> sg(static_cast<std::size_t>(d.c), 0.0), sgx(static_cast<std::size_t>(d.c), 0.0);
  for (Index in = 0; in < d.n; ++in)
    for (Index ic = 0; ic < d.c; ++ic) {
      const Index base = (in * d.c + ic) * d.s;
      double a = 0.0, b = 0.0;
      for (Index k = 0; k < d.s; ++k) {
        a += g[static_cast<std::size_t>(base + k)];
        b += static_cast<double>(g[static_cast<std::size_t>(base + k)]) * xhat[static_cast<std::size_t>(base + k)];
      }
      sg[static_cast<std::size_t>(ic)] += a;
      sgx[static_cast<std::size_t>(ic)] += b;
    }
  if (needs[1]) grads[1] = Tensor<T>(Shape{d.c}, std::vector<T>(sgx.begin(), sgx.end()));
  if (needs[2]) grads[2] = Tensor<T>(Shape{d.c}, std::vector<T>(sg.begin(), sg.end()));
  if (sum_g) *sum_g = std::move(sg);
  if (sum_gx) *sum_gx = std::move(sgx);
}

}  // namespace

template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps,
                           BatchStats* stats) {
  const NormDims d = norm_dims(x.shape(), gamma.shape(), beta.shape());
  const Index m = d.count();
  if (m < 2) {
    throw ContractError("batch norm in train mode needs at least 2 values per channel, got " + std::to_string(m) +
                        " for input " + x.shape().str());
  }
  auto xv = x.data();
  std::vector<double> mu(static_cast<std::size_t>(d.c), 0.0), var(static_cast<std::size_t>(d.c), 0.0);
  for (Index in = 0; in < d.n; ++in)
    for (Index ic = 0; ic < d.c; ++ic) {
      const T* p = xv.data() + (in * d.c + ic) * d.s;
      double a = 0.0;
      for (Index k = 0; k < d.s; ++k) a += p[k];
      mu[static_cast<std::size_t>(ic)] += a;
    }
  for (auto& v : mu) v /= static_cast<double>(m);
  for (Index in = 0; in < d.n; ++in)
    for (Index ic = 0; ic < d.c; ++ic) {
      const T* p = xv.data() + (in * d.c + ic) * d.s;
      const double u = mu[static_cast<std::size_t>(ic)];
      double a = 0.0;
      for (Index k = 0; k < d.s; ++k) a += (p[k] - u) * (p[k] - u);
      var[static_cast<std::size_t>(ic)] += a;
    }
  for (auto& v : var) v /= static_cast<double>(m);

  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(d.c));
  for (Index ic = 0; ic < d.c; ++ic)
    (*inv_std)[static_cast<std::size_t>(ic)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(ic)] + eps);

  auto gv = gamma.data();
  auto bv = beta.data();
  auto xhat = buffer<T>(x.numel());
  auto out = buffer<T>(x.numel());
  for (Index in = 0; in < d.n; ++in)
    for (Index ic = 0; ic < d.c; ++ic) {
      const auto c = static_cast<std::size_t>(ic);
      const Index base = (in * d.c + ic) * d.s;
      for (Index k = 0; k < d.s; ++k) {
        const auto i = static_cast<std::size_t>(base + k);
        const T xh = static_cast<T>((xv[i] - mu[c]) * (*inv_std)[c]);
        xhat[i] = xh;
        out[i] = gv[c] * xh + bv[c];
      }
    }
  if (stats != nullptr) *stats = BatchStats{mu, var, m};

  const Tensor<T> sxhat(x.shape(), std::move(xhat));
  const Tensor<T> sgamma = gamma.detach();
  return Tape<T>::record(
      Tensor<T>(x.shape(), std::move(out)), {&x, &gamma, &beta},
      [d, sxhat, sgamma, inv_std](const Tensor<T>& g, const std::vector<bool>& needs) {
        std::vector<Tensor<T>> grads(3);
        std::vector<double> sg, sgx;
        affine_grads<T>(g.data(), sxhat.data(), d, needs, grads, &sg, &sgx);
        if (needs[0]) {
          const double m = static_cast<double>(d.count());
          auto gd = g.data();
          auto xh = sxhat.data();
          auto gamma_v = sgamma.data();
          auto dx = buffer<T>(g.numel());
          for (Index in = 0; in < d.n; ++in)
            for (Index ic = 0; ic < d.c; ++ic) {
              const auto c = static_cast<std::size_t>(ic);
              const double k0 = gamma_v[c] * (*inv_std)[c] / m;
              const Index base = (in * d.c + ic) * d.s;
              for (Index k = 0; k < d.s; ++k) {
                const auto i = static_cast<std::size_t>(base + k);
                dx[i] = static_cast<T>(k0 * (m * gd[i] - sg[c] - xh[i] * sgx[c]));
              }
            }
          grads[0] = Tensor<T>(g.shape(), std::move(dx));
        }
        return grads;
      });
}

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, const Tensor<T>& mean,
                          const Tensor<T>& var, double eps) {
  const NormDims d = norm_dims(x.shape(), gamma.shape(), beta.shape());
  if (mean.shape() != gamma.shape() || var.shape() != gamma.shape()) {
    throw ShapeError("batch norm running statistics do not match " + gamma.shape().str());
  }
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(d.c));
  for (Index ic = 0; ic < d.c; ++ic) (*inv_std)[static_cast<std::size_t>(ic)] = 1.0 / std::sqrt(var[ic] + eps);
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  auto xhat = buffer<T>(x.numel());
  auto out = buffer<T>(x.numel());
  for (Index in = 0; in < d.n; ++in)
    for (Index ic = 0; ic < d.c; ++ic) {
      const auto c = static_cast<std::size_t>(ic);
      const Index base = (in * d.c + ic) * d.s;
      for (Index k = 0; k < d.s; ++k) {
        const auto i = static_cast<std::size_t>(base + k);
        const T xh = static_cast<T>((xv[i] - mean[ic]) * (*inv_std)[c]);
        xhat[i] = xh;
        out[i] = gv[c] * xh + bv[c];
      }
    }
  const Tensor<T> sxhat(x.shape(), std::move(xhat));
  const Tensor<T> sgamma = gamma.detach();
  return Tape<T>::record(Tensor<T>(x.shape(), std::move(out)), {&x, &gamma, &beta},
                         [d, sxhat, sgamma, inv_std](const Tensor<T>& g, const std::vector<bool>& needs) {
                           std::vector<Tensor<T>> grads(3);
                           affine_grads<T>(g.data(), sxhat.data(), d, needs, grads, nullptr, nullptr);
                           if (needs[0]) {
                             auto gd = g.data();
                             auto gamma_v = sgamma.data();
                             auto dx = buffer<T>(g.numel());
                             for (Index in = 0; in < d.n; ++in)
                               for (Index ic = 0; ic < d.c; ++ic) {
                                 const auto c = static_cast<std::size_t>(ic);
                                 const double k0 = gamma_v[c] * (*inv_std)[c];
                                 const Index base = (in * d.c + ic) * d.s;
                                 for (Index k = 0; k < d.s; ++k) {
                                   const auto i = static_cast<std::size_t>(base + k);
                                   dx[i] = static_cast<T>(k0 * gd[i]);
                                 }
                               }
                             grads[0] = Tensor<T>(g.shape(), std::move(dx));
                           }
                           return grads;
                         });
}

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& predictions, const Tensor<T>& targets) {
  if (predictions.shape() != targets.shape()) {
    throw ShapeError("bce_loss shape mismatch: " + predictions.shape().str() + " vs " + targets.shape().str());
  }
  auto pv = predictions.data();
  auto yv = targets.data();
  for (std::size_t i = 0; i < yv.size(); ++i) {
    if (yv[i] != T(0) && yv[i] != T(1)) {
      throw ContractError("bce_loss target at index " + std::to_string(i) + " is " + std::to_string(yv[i]) +
                          ", expected 0 or 1");
    }
  }
  const auto n = static_cast<double>(pv.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = pv[i];
    acc += yv[i] == T(1) ? std::log(std::max(p, kProbabilityClamp)) : std::log(std::max(1.0 - p, kProbabilityClamp));
  }
  const Tensor<T> sp = predictions.detach();
  const Tensor<T> sy = targets.detach();
  return Tape<T>::record(Tensor<T>::scalar(static_cast<T>(-acc / n)), {&predictions, &targets},
                         [sp, sy, n](const Tensor<T>& g, const std::vector<bool>& needs) {
                           std::vector<Tensor<T>> grads(2);
                           if (needs[1]) grads[1] = Tensor<T>::zeros(sy.shape());
                           if (needs[0]) {
                             const double up = g.item() / n;
                             auto pv = sp.data();
                             auto yv = sy.data();
                             auto dp = buffer<T>(sp.numel());
                             for (std::size_t i = 0; i < dp.size(); ++i) {
                               const double p = pv[i];
                               dp[i] = static_cast<T>(yv[i] == T(1) ? -up / std::max(p, kProbabilityClamp)
                                                                    : up / std::max(1.0 - p, kProbabilityClamp));
                             }
                             grads[0] = Tensor<T>(sp.shape(), std::move(dp));
                           }
                           return grads;
                         });
}

#define AFGAN_INSTANTIATE_OPS(T)                                                                              \
  template Tensor<T> elementwise<T>(ElementwiseOp, const Tensor<T>&, const Tensor<T>*, double);              \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                                          \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> reshape<T>(const Tensor<T>&, const Shape&);                                             \
  template Tensor<T> reduce<T>(const Tensor<T>&, Reduction, const std::optional<std::vector<int>>&);         \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, const ConvGeometry&);   \
  template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,               \
                                         const ConvGeometry&);                                               \
  template Tensor<T> batch_norm_train<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double,       \
                                         BatchStats*);                                                       \
  template Tensor<T> batch_norm_eval<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                \
                                        const Tensor<T>&, const Tensor<T>&, double);                         \
  template Tensor<T> bce_loss<T>(const Tensor<T>&, const Tensor<T>&);

AFGAN_INSTANTIATE_OPS(float)
AFGAN_INSTANTIATE_OPS(double)

}  // namespace afgan
