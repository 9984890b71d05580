// SPDX-License-Identifier: Apache-2.0
#include "ugda/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace ugda {
namespace {

template <typename S>
using MatCM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using MapCM = Eigen::Map<MatCM<S>>;
template <typename S>
using ConstMapCM = Eigen::Map<const MatCM<S>>;
template <typename S>
using ConstMapRM = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
template <typename S>
using ConstArrMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

template <typename S>
S stable_sigmoid(S z) {
  if (z >= S(0)) return S(1) / (S(1) + std::exp(-z));
  S e = std::exp(z);
  return e / (S(1) + e);
}

struct BStrides {
  Index n, c, h, w;
};

BStrides strides_for(const Shape& s, const Shape& out) {
  const Index ws = 1, hs = s.w, cs = s.h * s.w, ns = s.c * s.h * s.w;
  return {s.n == out.n ? ns : 0, s.c == out.c ? cs : 0, s.h == out.h ? hs : 0, s.w == out.w ? ws : 0};
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* where) {
  auto axis = [&](Index x, Index y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw std::invalid_argument(std::string(where) + ": incompatible shapes " + a.str() + " and " + b.str());
    return Index(0);
  };
  return {axis(a.n, b.n), axis(a.c, b.c), axis(a.h, b.h), axis(a.w, b.w)};
}

template <typename S, typename F>
Tensor<S> broadcast_binary(const Tensor<S>& A, const Tensor<S>& B, const Shape& os, F f) {
  Tensor<S> out(os);
  const BStrides sa = strides_for(A.shape(), os);
  const BStrides sb = strides_for(B.shape(), os);
  const S* pa = A.data();
  const S* pb = B.data();
  S* po = out.data();
  for (Index n = 0; n < os.n; ++n)
    for (Index c = 0; c < os.c; ++c)
      for (Index h = 0; h < os.h; ++h) {
        const S* ar = pa + n * sa.n + c * sa.c + h * sa.h;
        const S* br = pb + n * sb.n + c * sb.c + h * sb.h;
        for (Index w = 0; w < os.w; ++w) *po++ = f(ar[w * sa.w], br[w * sb.w]);
      }
  return out;
}

/// dst(parent shape) += weight(out linear index) summed over broadcast axes.
template <typename S, typename F>
void reduce_add_into(Tensor<S>& dst, const Shape& os, F contrib) {
  const BStrides sd = strides_for(dst.shape(), os);
  S* pd = dst.data();
  Index i = 0;
  for (Index n = 0; n < os.n; ++n)
    for (Index c = 0; c < os.c; ++c)
      for (Index h = 0; h < os.h; ++h) {
        S* dr = pd + n * sd.n + c * sd.c + h * sd.h;
        for (Index w = 0; w < os.w; ++w) dr[w * sd.w] += contrib(i++);
      }
}

}  // namespace

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  const Shape os = broadcast_shape(a.shape(), b.shape(), "add");
  Tensor<S> y;
  if (a.shape() == b.shape()) {
    y = Tensor<S>(os);
    y.flat() = a.value().flat() + b.value().flat();
  } else {
    y = broadcast_binary(a.value(), b.value(), os, [](S x, S z) { return x + z; });
  }
  const bool rg = Tape<S>::any_requires_grad({a, b});
  Var<S> out = t.push(std::move(y), rg);
  if (rg)
    t.set_backward(out.id, [&t, aid = a.id, bid = b.id, oid = out.id, os]() {
      const Tensor<S>& gy = t.grad(oid);
      const S* pg = gy.data();
      if (t.requires_grad(aid)) {
        Tensor<S>& ga = t.grad(aid);
        if (ga.shape() == os)
          ga.flat() += gy.flat();
        else
          reduce_add_into(ga, os, [&](Index i) { return pg[i]; });
      }
      if (t.requires_grad(bid)) {
        Tensor<S>& gb = t.grad(bid);
        if (gb.shape() == os)
          gb.flat() += gy.flat();
        else
          reduce_add_into(gb, os, [&](Index i) { return pg[i]; });
      }
    });
  return out;
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  const Shape os = broadcast_shape(a.shape(), b.shape(), "mul");
  Tensor<S> y;
  if (a.shape() == b.shape()) {
    y = Tensor<S>(os);
    y.flat() = a.value().flat() * b.value().flat();
  } else {
    y = broadcast_binary(a.value(), b.value(), os, [](S x, S z) { return x * z; });
  }
  const bool rg = Tape<S>::any_requires_grad({a, b});
  Var<S> out = t.push(std::move(y), rg);
  if (rg)
    t.set_backward(out.id, [&t, aid = a.id, bid = b.id, oid = out.id, os]() {
      const Tensor<S>& gy = t.grad(oid);
      const S* pg = gy.data();
      auto side = [&](Index dst_id, Index other_id) {
        if (!t.requires_grad(dst_id)) return;
        Tensor<S>& gd = t.grad(dst_id);
        const Tensor<S>& other = t.value(other_id);
        const BStrides so = strides_for(other.shape(), os);
        const S* po = other.data();
        // contrib(i) = gy[i] * other[mapped i]; recover coords from i
        const BStrides sd = strides_for(gd.shape(), os);
        S* pd = gd.data();
        Index i = 0;
        for (Index n = 0; n < os.n; ++n)
          for (Index c = 0; c < os.c; ++c)
            for (Index h = 0; h < os.h; ++h) {
              S* dr = pd + n * sd.n + c * sd.c + h * sd.h;
              const S* orow = po + n * so.n + c * so.c + h * so.h;
              for (Index w = 0; w < os.w; ++w) dr[w * sd.w] += pg[i++] * orow[w * so.w];
            }
      };
      side(aid, bid);
      side(bid, aid);
    });
  return out;
}

template <typename S>
Var<S> add_const(Var<S> x, S c) {
  Tape<S>& t = *x.tape;
  Tensor<S> y(x.shape());
  y.flat() = x.value().flat() + c;
  Var<S> out = t.push(std::move(y), x.requires_grad());
  if (out.requires_grad())
    t.set_backward(out.id, [&t, xid = x.id, oid = out.id]() { t.grad(xid).flat() += t.grad(oid).flat(); });
  return out;
}

template <typename S>
Var<S> mul_const(Var<S> x, S c) {
  Tape<S>& t = *x.tape;
  Tensor<S> y(x.shape());
  y.flat() = x.value().flat() * c;
  Var<S> out = t.push(std::move(y), x.requires_grad());
  if (out.requires_grad())
    t.set_backward(out.id, [&t, xid = x.id, oid = out.id, c]() { t.grad(xid).flat() += t.grad(oid).flat() * c; });
  return out;
}

template <typename S>
Var<S> relu(Var<S> x) {
  Tape<S>& t = *x.tape;
  Tensor<S> y(x.shape());
  y.flat() = x.value().flat().max(S(0));
  Var<S> out = t.push(std::move(y), x.requires_grad());
  if (out.requires_grad())
    t.set_backward(out.id, [&t, xid = x.id, oid = out.id]() {
      const Tensor<S>& gy = t.grad(oid);
      const Tensor<S>& yv = t.value(oid);
      Tensor<S>& gx = t.grad(xid);
      const S* pg = gy.data();
      const S* py = yv.data();
      S* px = gx.data();
      const Index m = gy.size();
      for (Index i = 0; i < m; ++i)
        if (py[i] > S(0)) px[i] += pg[i];
    });
  return out;
}

template <typename S>
Var<S> sigmoid(Var<S> x) {
  Tape<S>& t = *x.tape;
  Tensor<S> y(x.shape());
  {
    const S* px = x.value().data();
    S* py = y.data();
    const Index m = y.size();
    for (Index i = 0; i < m; ++i) py[i] = stable_sigmoid(px[i]);
  }
  Var<S> out = t.push(std::move(y), x.requires_grad());
  if (out.requires_grad())
    t.set_backward(out.id, [&t, xid = x.id, oid = out.id]() {
      const Tensor<S>& gy = t.grad(oid);
      const Tensor<S>& yv = t.value(oid);
      Tensor<S>& gx = t.grad(xid);
      const S* pg = gy.data();
      const S* py = yv.data();
      S* px = gx.data();
      const Index m = gy.size();
      for (Index i = 0; i < m; ++i) px[i] += pg[i] * py[i] * (S(1) - py[i]);
    });
  return out;
}

template <typename S>
Var<S> sum_all(Var<S> x) {
  Tape<S>& t = *x.tape;
  double acc = 0;
  const S* px = x.value().data();
  for (Index i = 0; i < x.value().size(); ++i) acc += static_cast<double>(px[i]);
  Var<S> out = t.push(Tensor<S>::scalar(static_cast<S>(acc)), x.requires_grad());
  if (out.requires_grad())
    t.set_backward(out.id, [&t, xid = x.id, oid = out.id]() {
      const S g = t.grad(oid).value();
      t.grad(xid).flat() += g;
    });
  return out;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace {

struct ConvGeom {
  Index N, Cin, H, W, Cout, kh, kw, Hout, Wout;
  int stride, pad;
};

Index conv_out_size(Index in, Index k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// Column r = (c*kh+ki)*kw+kj of the (rows x K) col-major patch matrix holds
// the input value under kernel tap (c,ki,kj) for each output position.
template <typename S>
void im2col_image(const S* x, const ConvGeom& g, S* col, Index col_rows, Index row0) {
  for (Index c = 0; c < g.Cin; ++c) {
    const S* xc = x + c * g.H * g.W;
    for (Index ki = 0; ki < g.kh; ++ki)
      for (Index kj = 0; kj < g.kw; ++kj) {
        const Index r = (c * g.kh + ki) * g.kw + kj;
        S* dst = col + r * col_rows + row0;
        for (Index ho = 0; ho < g.Hout; ++ho, dst += g.Wout) {
          const Index hin = ho * g.stride - g.pad + ki;
          if (hin < 0 || hin >= g.H) {
            std::fill(dst, dst + g.Wout, S(0));
            continue;
          }
          const S* row = xc + hin * g.W;
          if (g.stride == 1) {
            const Index off = kj - g.pad;  // win = wo + off
            const Index lo = std::max<Index>(0, -off);
            const Index hi = std::min<Index>(g.Wout, g.W - off);
            if (hi <= lo) {
              std::fill(dst, dst + g.Wout, S(0));
            } else {
              std::fill(dst, dst + lo, S(0));
              std::copy(row + lo + off, row + hi + off, dst + lo);
              std::fill(dst + hi, dst + g.Wout, S(0));
            }
          } else {
            for (Index wo = 0; wo < g.Wout; ++wo) {
              const Index win = wo * g.stride - g.pad + kj;
              dst[wo] = (win >= 0 && win < g.W) ? row[win] : S(0);
            }
          }
        }
      }
  }
}

template <typename S>
void col2im_add_image(const S* col, Index col_rows, Index row0, const ConvGeom& g, S* dx) {
  for (Index c = 0; c < g.Cin; ++c) {
    S* xc = dx + c * g.H * g.W;
    for (Index ki = 0; ki < g.kh; ++ki)
      for (Index kj = 0; kj < g.kw; ++kj) {
        const Index r = (c * g.kh + ki) * g.kw + kj;
        const S* src = col + r * col_rows + row0;
        for (Index ho = 0; ho < g.Hout; ++ho, src += g.Wout) {
          const Index hin = ho * g.stride - g.pad + ki;
          if (hin < 0 || hin >= g.H) continue;
          S* row = xc + hin * g.W;
          if (g.stride == 1) {
            const Index off = kj - g.pad;
            const Index lo = std::max<Index>(0, -off);
            const Index hi = std::min<Index>(g.Wout, g.W - off);
            for (Index wo = lo; wo < hi; ++wo) row[wo + off] += src[wo];
          } else {
            for (Index wo = 0; wo < g.Wout; ++wo) {
              const Index win = wo * g.stride - g.pad + kj;
              if (win >= 0 && win < g.W) row[win] += src[wo];
            }
          }
        }
      }
  }
}

// Image groups sized so the patch matrix stays within a fixed element budget.
Index conv_group_size(Index N, Index HW, Index K) {
  constexpr Index kColBudget = Index(1) << 23;  // elements
  return std::clamp<Index>(kColBudget / std::max<Index>(1, HW * K), 1, N);
}

}  // namespace

template <typename S>
Var<S> conv2d(Var<S> x, Var<S> w, Var<S> bias, int stride, int pad) {
  Tape<S>& t = *x.tape;
  const Tensor<S>& X = x.value();
  const Tensor<S>& W = w.value();
  const Shape& xs = X.shape();
  const Shape& ws = W.shape();
  check(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  check(ws.c == xs.c, "conv2d: weight expects " + std::to_string(ws.c) + " input channels, got " + xs.str());
  ConvGeom g{xs.n, xs.c, xs.h,
             xs.w, ws.n, ws.h,
             ws.w, conv_out_size(xs.h, ws.h, stride, pad), conv_out_size(xs.w, ws.w, stride, pad),
             stride, pad};
  check(g.Hout >= 1 && g.Wout >= 1, "conv2d: input " + xs.str() + " too small for kernel");
  if (bias.valid())
    check_same_shape(bias.shape(), Shape{1, g.Cout, 1, 1}, "conv2d bias");

  const Index HW = g.Hout * g.Wout;
  const Index K = g.Cin * g.kh * g.kw;
  Tensor<S> out(g.N, g.Cout, g.Hout, g.Wout);
  {
    ConstMapCM<S> Wt(W.data(), K, g.Cout);  // (Cout,K) row-major seen as its transpose
    const Index gmax = conv_group_size(g.N, HW, K);
    MatCM<S> col, outbuf;
    for (Index n0 = 0; n0 < g.N; n0 += gmax) {
      const Index gn = std::min(gmax, g.N - n0);
      col.resize(gn * HW, K);
      for (Index i = 0; i < gn; ++i) im2col_image(X.image_ptr(n0 + i), g, col.data(), gn * HW, i * HW);
      if (gn == 1) {
        MapCM<S> o(out.image_ptr(n0), HW, g.Cout);
        o.noalias() = col * Wt;
      } else {
        outbuf.noalias() = col * Wt;
        for (Index i = 0; i < gn; ++i) {
          MapCM<S> o(out.image_ptr(n0 + i), HW, g.Cout);
          o = outbuf.middleRows(i * HW, HW);
        }
      }
    }
    if (bias.valid()) {
      const S* b = bias.value().data();
      for (Index n = 0; n < g.N; ++n) {
        S* p = out.image_ptr(n);
        for (Index co = 0; co < g.Cout; ++co) ArrMap<S>(p + co * HW, HW) += b[co];
      }
    }
  }

  const bool rg = bias.valid() ? Tape<S>::any_requires_grad({x, w, bias}) : Tape<S>::any_requires_grad({x, w});
  Var<S> outv = t.push(std::move(out), rg);
  if (rg) {
    const Index bid = bias.valid() ? bias.id : -1;
    t.set_backward(outv.id, [&t, xid = x.id, wid = w.id, bid, oid = outv.id, g, HW, K]() {
      const Tensor<S>& gy = t.grad(oid);
      const Tensor<S>& X = t.value(xid);
      const Tensor<S>& W = t.value(wid);
      const bool need_dx = t.requires_grad(xid);
      const bool need_dw = t.requires_grad(wid);
      if (bid >= 0 && t.requires_grad(bid)) {
        Tensor<S>& db = t.grad(bid);
        for (Index co = 0; co < g.Cout; ++co) {
          double acc = 0;
          for (Index n = 0; n < g.N; ++n)
            acc += ConstArrMap<S>(gy.image_ptr(n) + co * HW, HW).template cast<double>().sum();
          db.data()[co] += static_cast<S>(acc);
        }
      }
      if (!need_dx && !need_dw) return;
      const Index gmax = conv_group_size(g.N, HW, K);
      MatCM<S> col, gyb, dcol;
      for (Index n0 = 0; n0 < g.N; n0 += gmax) {
        const Index gn = std::min(gmax, g.N - n0);
        const Index rows = gn * HW;
        gyb.resize(rows, g.Cout);
        for (Index i = 0; i < gn; ++i)
          gyb.middleRows(i * HW, HW) = ConstMapCM<S>(gy.image_ptr(n0 + i), HW, g.Cout);
        if (need_dw) {
          col.resize(rows, K);
          for (Index i = 0; i < gn; ++i) im2col_image(X.image_ptr(n0 + i), g, col.data(), rows, i * HW);
          MapCM<S> dWt(t.grad(wid).data(), K, g.Cout);
          dWt.noalias() += col.transpose() * gyb;
        }
        if (need_dx) {
          ConstMapRM<S> Wm(W.data(), g.Cout, K);
          dcol.noalias() = gyb * Wm;
          Tensor<S>& gx = t.grad(xid);
          for (Index i = 0; i < gn; ++i) col2im_add_image(dcol.data(), rows, i * HW, g, gx.image_ptr(n0 + i));
        }
      }
    });
  }
  return outv;
}

// ---------------------------------------------------------------------------
// Pooling and reductions
// ---------------------------------------------------------------------------

template <typename S>
Var<S> max_pool(Var<S> x, int k, int stride, int pad) {
  Tape<S>& t = *x.tape;
  const Tensor<S>& X = x.value();
  const Shape& xs = X.shape();
  const Index Hout = conv_out_size(xs.h, k, stride, pad);
  const Index Wout = conv_out_size(xs.w, k, stride, pad);
  check(Hout >= 1 && Wout >= 1, "max_pool: input too small");

  Tensor<S> out(xs.n, xs.c, Hout, Wout);
  std::vector<std::int32_t> arg(static_cast<std::size_t>(out.size()), -1);
  S* po = out.data();
  std::int32_t* pa = arg.data();
  for (Index n = 0; n < xs.n; ++n)
    for (Index c = 0; c < xs.c; ++c) {
      const S* plane = X.data() + (n * xs.c + c) * xs.h * xs.w;
      for (Index ho = 0; ho < Hout; ++ho)
        for (Index wo = 0; wo < Wout; ++wo) {
          S best = std::numeric_limits<S>::lowest();
          std::int32_t besti = -1;
          const Index h0 = ho * stride - pad, w0 = wo * stride - pad;
          for (Index i = std::max<Index>(0, -h0); i < k && h0 + i < xs.h; ++i)
            for (Index j = std::max<Index>(0, -w0); j < k && w0 + j < xs.w; ++j) {
              const S v = plane[(h0 + i) * xs.w + (w0 + j)];
              if (v > best) {
                best = v;
                besti = static_cast<std::int32_t>((h0 + i) * xs.w + (w0 + j));
              }
            }
          *po++ = besti >= 0 ? best : S(0);
          *pa++ = besti;
        }
    }

  Var<S> out_v = t.push(std::move(out), x.requires_grad());
  if (out_v.requires_grad())
    t.set_backward(out_v.id, [&t, xid = x.id, oid = out_v.id, arg = std::move(arg), xs, Hout, Wout]() {
      const Tensor<S>& gy = t.grad(oid);
      Tensor<S>& gx = t.grad(xid);
      const S* pg = gy.data();
      const std::int32_t* pa = arg.data();
      const Index planes = xs.n * xs.c;
      const Index ohw = Hout * Wout;
      for (Index p = 0; p < planes; ++p) {
        S* plane = gx.data() + p * xs.h * xs.w;
        for (Index i = 0; i < ohw; ++i) {
          const std::int32_t a = pa[p * ohw + i];
          if (a >= 0) plane[a] += pg[p * ohw + i];
        }
      }
    });
  return out_v;
}

template <typename S>
Var<S> global_avg_pool(Var<S> x) {
  Tape<S>& t = *x.tape;
  const Shape& xs = x.shape();
  const Index HW = xs.h * xs.w;
  Tensor<S> out(xs.n, xs.c, 1, 1);
  for (Index p = 0; p < xs.n * xs.c; ++p)
    out.data()[p] = static_cast<S>(ConstArrMap<S>(x.value().data() + p * HW, HW).template cast<double>().mean());
  Var<S> out_v = t.push(std::move(out), x.requires_grad());
  if (out_v.requires_grad())
    t.set_backward(out_v.id, [&t, xid = x.id, oid = out_v.id, HW, planes = xs.n * xs.c]() {
      const Tensor<S>& gy = t.grad(oid);
      Tensor<S>& gx = t.grad(xid);
      const S inv = S(1) / static_cast<S>(HW);
      for (Index p = 0; p < planes; ++p) ArrMap<S>(gx.data() + p * HW, HW) += gy.data()[p] * inv;
    });
  return out_v;
}

template <typename S>
Var<S> channel_mean(Var<S> x) {
  Tape<S>& t = *x.tape;
  const Shape& xs = x.shape();
  const Index HW = xs.h * xs.w;
  Tensor<S> out(xs.n, 1, xs.h, xs.w);
  for (Index n = 0; n < xs.n; ++n) {
    ArrMap<S> o(out.image_ptr(n), HW);
    o.setZero();
    for (Index c = 0; c < xs.c; ++c) o += ConstArrMap<S>(x.value().image_ptr(n) + c * HW, HW);
    o *= S(1) / static_cast<S>(xs.c);
  }
  Var<S> out_v = t.push(std::move(out), x.requires_grad());
  if (out_v.requires_grad())
    t.set_backward(out_v.id, [&t, xid = x.id, oid = out_v.id, xs, HW]() {
      const Tensor<S>& gy = t.grad(oid);
      Tensor<S>& gx = t.grad(xid);
      const S inv = S(1) / static_cast<S>(xs.c);
      for (Index n = 0; n < xs.n; ++n) {
        ConstArrMap<S> g(gy.image_ptr(n), HW);
        for (Index c = 0; c < xs.c; ++c) ArrMap<S>(gx.image_ptr(n) + c * HW, HW) += g * inv;
      }
    });
  return out_v;
}

template <typename S>
Var<S> channel_max(Var<S> x) {
  Tape<S>& t = *x.tape;
  const Shape& xs = x.shape();
  const Index HW = xs.h * xs.w;
  Tensor<S> out(xs.n, 1, xs.h, xs.w);
  std::vector<std::int32_t> arg(static_cast<std::size_t>(xs.n * HW), 0);
  for (Index n = 0; n < xs.n; ++n) {
    const S* base = x.value().image_ptr(n);
    S* po = out.image_ptr(n);
    std::int32_t* pa = arg.data() + n * HW;
    for (Index i = 0; i < HW; ++i) po[i] = base[i];
    for (Index c = 1; c < xs.c; ++c) {
      const S* pc = base + c * HW;
      for (Index i = 0; i < HW; ++i)
        if (pc[i] > po[i]) {
          po[i] = pc[i];
          pa[i] = static_cast<std::int32_t>(c);
        }
    }
  }
  Var<S> out_v = t.push(std::move(out), x.requires_grad());
  if (out_v.requires_grad())
    t.set_backward(out_v.id, [&t, xid = x.id, oid = out_v.id, arg = std::move(arg), xs, HW]() {
      const Tensor<S>& gy = t.grad(oid);
      Tensor<S>& gx = t.grad(xid);
      for (Index n = 0; n < xs.n; ++n) {
        const S* pg = gy.image_ptr(n);
        S* base = gx.image_ptr(n);
        const std::int32_t* pa = arg.data() + n * HW;
        for (Index i = 0; i < HW; ++i) base[pa[i] * HW + i] += pg[i];
      }
    });
  return out_v;
}

template <typename S>
Var<S> channel_std(Var<S> x) {
  Tape<S>& t = *x.tape;
  const Shape& xs = x.shape();
  check(xs.c >= 2, "channel_std: needs at least 2 channels, got " + xs.str());
  const Index HW = xs.h * xs.w;
  Tensor<S> mean(xs.n, 1, xs.h, xs.w);
  Tensor<S> out(xs.n, 1, xs.h, xs.w);
  const S invc = S(1) / static_cast<S>(xs.c);
  for (Index n = 0; n < xs.n; ++n) {
    const S* base = x.value().image_ptr(n);
    ArrMap<S> m(mean.image_ptr(n), HW);
    m.setZero();
    for (Index c = 0; c < xs.c; ++c) m += ConstArrMap<S>(base + c * HW, HW);
    m *= invc;
    ArrMap<S> v(out.image_ptr(n), HW);
    v.setZero();
    for (Index c = 0; c < xs.c; ++c) v += (ConstArrMap<S>(base + c * HW, HW) - m).square();
    v = (v * invc).sqrt();
  }
  Var<S> out_v = t.push(std::move(out), x.requires_grad());
  if (out_v.requires_grad())
    t.set_backward(out_v.id, [&t, xid = x.id, oid = out_v.id, mean = std::move(mean), xs, HW, invc]() {
      const Tensor<S>& gy = t.grad(oid);
      const Tensor<S>& sd = t.value(oid);
      Tensor<S>& gx = t.grad(xid);
      for (Index n = 0; n < xs.n; ++n) {
        const S* pg = gy.image_ptr(n);
        const S* ps = sd.image_ptr(n);
        const S* pm = mean.image_ptr(n);
        const S* px = t.value(xid).image_ptr(n);
        S* pd = gx.image_ptr(n);
        for (Index c = 0; c < xs.c; ++c) {
          const S* xc = px + c * HW;
          S* dc = pd + c * HW;
          for (Index i = 0; i < HW; ++i)
            if (ps[i] > S(0)) dc[i] += pg[i] * (xc[i] - pm[i]) * invc / ps[i];
        }
      }
    });
  return out_v;
}

template <typename S>
Var<S> concat_channels(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  check(as.n == bs.n && as.h == bs.h && as.w == bs.w,
        "concat_channels: shapes " + as.str() + " and " + bs.str() + " differ outside the channel axis");
  const Index HW = as.h * as.w;
  Tensor<S> out(as.n, as.c + bs.c, as.h, as.w);
  for (Index n = 0; n < as.n; ++n) {
    S* po = out.image_ptr(n);
    std::copy_n(a.value().image_ptr(n), as.c * HW, po);
    std::copy_n(b.value().image_ptr(n), bs.c * HW, po + as.c * HW);
  }
  const bool rg = Tape<S>::any_requires_grad({a, b});
  Var<S> out_v = t.push(std::move(out), rg);
  if (rg)
    t.set_backward(out_v.id, [&t, aid = a.id, bid = b.id, oid = out_v.id, as, bs, HW]() {
      const Tensor<S>& gy = t.grad(oid);
      for (Index n = 0; n < as.n; ++n) {
        const S* pg = gy.image_ptr(n);
        if (t.requires_grad(aid))
          ArrMap<S>(t.grad(aid).image_ptr(n), as.c * HW) += ConstArrMap<S>(pg, as.c * HW);
        if (t.requires_grad(bid))
          ArrMap<S>(t.grad(bid).image_ptr(n), bs.c * HW) += ConstArrMap<S>(pg + as.c * HW, bs.c * HW);
      }
    });
  return out_v;
}

namespace {

template <typename S>
struct LerpTap {
  Index i0, i1;
  S f;
};

template <typename S>
std::vector<LerpTap<S>> lerp_table(Index in, Index out) {
  std::vector<LerpTap<S>> tab(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    src = std::max(0.0, std::min(src, static_cast<double>(in - 1)));
    const Index i0 = static_cast<Index>(src);
    tab[o] = {i0, std::min<Index>(i0 + 1, in - 1), static_cast<S>(src - static_cast<double>(i0))};
  }
  return tab;
}

}  // namespace

template <typename S>
Var<S> upsample_bilinear(Var<S> x, Index out_h, Index out_w) {
  Tape<S>& t = *x.tape;
  const Shape& xs = x.shape();
  check(out_h >= 1 && out_w >= 1, "upsample_bilinear: bad target size");
  const auto th = lerp_table<S>(xs.h, out_h);
  const auto tw = lerp_table<S>(xs.w, out_w);
  Tensor<S> out(xs.n, xs.c, out_h, out_w);
  for (Index p = 0; p < xs.n * xs.c; ++p) {
    const S* plane = x.value().data() + p * xs.h * xs.w;
    S* po = out.data() + p * out_h * out_w;
    for (Index oh = 0; oh < out_h; ++oh) {
      const auto& r = th[oh];
      const S* r0 = plane + r.i0 * xs.w;
      const S* r1 = plane + r.i1 * xs.w;
      for (Index ow = 0; ow < out_w; ++ow) {
        const auto& cseg = tw[ow];
        const S top = r0[cseg.i0] + cseg.f * (r0[cseg.i1] - r0[cseg.i0]);
        const S bot = r1[cseg.i0] + cseg.f * (r1[cseg.i1] - r1[cseg.i0]);
        *po++ = top + r.f * (bot - top);
      }
    }
  }
  Var<S> out_v = t.push(std::move(out), x.requires_grad());
  if (out_v.requires_grad())
    t.set_backward(out_v.id, [&t, xid = x.id, oid = out_v.id, xs, out_h, out_w]() {
      const auto th = lerp_table<S>(xs.h, out_h);
      const auto tw = lerp_table<S>(xs.w, out_w);
      const Tensor<S>& gy = t.grad(oid);
      Tensor<S>& gx = t.grad(xid);
      for (Index p = 0; p < xs.n * xs.c; ++p) {
        S* plane = gx.data() + p * xs.h * xs.w;
        const S* pg = gy.data() + p * out_h * out_w;
        for (Index oh = 0; oh < out_h; ++oh) {
          const auto& r = th[oh];
          for (Index ow = 0; ow < out_w; ++ow) {
            const auto& cseg = tw[ow];
            const S g = *pg++;
            plane[r.i0 * xs.w + cseg.i0] += (S(1) - r.f) * (S(1) - cseg.f) * g;
            plane[r.i0 * xs.w + cseg.i1] += (S(1) - r.f) * cseg.f * g;
            plane[r.i1 * xs.w + cseg.i0] += r.f * (S(1) - cseg.f) * g;
            plane[r.i1 * xs.w + cseg.i1] += r.f * cseg.f * g;
          }
        }
      }
    });
  return out_v;
}

template <typename S>
Var<S> batch_norm(Var<S> x, Var<S> gamma, Var<S> beta, Tensor<S>& running_mean,
                  Tensor<S>& running_var, bool training, S momentum, S eps) {
  Tape<S>& t = *x.tape;
  const Shape& xs = x.shape();
  const Index C = xs.c, HW = xs.h * xs.w, N = xs.n;
  const Index M = N * HW;
  check_same_shape(gamma.shape(), Shape{1, C, 1, 1}, "batch_norm gamma");
  check_same_shape(beta.shape(), Shape{1, C, 1, 1}, "batch_norm beta");
  check_same_shape(running_mean.shape(), Shape{1, C, 1, 1}, "batch_norm running_mean");
  check_same_shape(running_var.shape(), Shape{1, C, 1, 1}, "batch_norm running_var");
  if (training) check(M >= 2, "batch_norm: training needs more than one value per channel");

  std::vector<S> mean(static_cast<std::size_t>(C)), invstd(static_cast<std::size_t>(C));
  if (training) {
    for (Index c = 0; c < C; ++c) {
      double sum = 0, sumsq = 0;
      for (Index n = 0; n < N; ++n) {
        ConstArrMap<S> plane(x.value().data() + (n * C + c) * HW, HW);
        sum += plane.template cast<double>().sum();
        sumsq += plane.template cast<double>().square().sum();
      }
      const double m = sum / static_cast<double>(M);
      const double var = std::max(0.0, sumsq / static_cast<double>(M) - m * m);
      mean[c] = static_cast<S>(m);
      invstd[c] = static_cast<S>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const double unbiased = var * static_cast<double>(M) / static_cast<double>(M - 1);
      running_mean.data()[c] = (S(1) - momentum) * running_mean.data()[c] + momentum * static_cast<S>(m);
      running_var.data()[c] = (S(1) - momentum) * running_var.data()[c] + momentum * static_cast<S>(unbiased);
    }
  } else {
    for (Index c = 0; c < C; ++c) {
      mean[c] = running_mean.data()[c];
      invstd[c] = static_cast<S>(
          1.0 / std::sqrt(static_cast<double>(running_var.data()[c]) + static_cast<double>(eps)));
    }
  }

  Tensor<S> out(xs);
  for (Index c = 0; c < C; ++c) {
    const S scale = gamma.value().data()[c] * invstd[c];
    const S shift = beta.value().data()[c] - mean[c] * scale;
    for (Index n = 0; n < N; ++n) {
      ConstArrMap<S> xin(x.value().data() + (n * C + c) * HW, HW);
      ArrMap<S>(out.data() + (n * C + c) * HW, HW) = xin * scale + shift;
    }
  }

  const bool rg = Tape<S>::any_requires_grad({x, gamma, beta});
  Var<S> out_v = t.push(std::move(out), rg);
  if (rg)
    t.set_backward(out_v.id, [&t, xid = x.id, gid = gamma.id, bid = beta.id, oid = out_v.id,
                              mean = std::move(mean), invstd = std::move(invstd), training, C, HW, N, M]() {
      const Tensor<S>& gy = t.grad(oid);
      const Tensor<S>& X = t.value(xid);
      const bool need_dx = t.requires_grad(xid);
      for (Index c = 0; c < C; ++c) {
        double dbeta = 0, dgamma = 0;
        for (Index n = 0; n < N; ++n) {
          const S* pg = gy.data() + (n * C + c) * HW;
          const S* px = X.data() + (n * C + c) * HW;
          for (Index i = 0; i < HW; ++i) {
            dbeta += static_cast<double>(pg[i]);
            dgamma += static_cast<double>(pg[i]) * static_cast<double>((px[i] - mean[c]) * invstd[c]);
          }
        }
        if (t.requires_grad(gid)) t.grad(gid).data()[c] += static_cast<S>(dgamma);
        if (t.requires_grad(bid)) t.grad(bid).data()[c] += static_cast<S>(dbeta);
        if (!need_dx) continue;
        const S scale = t.value(gid).data()[c] * invstd[c];
        if (training) {
          const S k1 = static_cast<S>(dgamma / static_cast<double>(M));
          const S k2 = static_cast<S>(dbeta / static_cast<double>(M));
          for (Index n = 0; n < N; ++n) {
            const S* pg = gy.data() + (n * C + c) * HW;
            const S* px = X.data() + (n * C + c) * HW;
            S* pd = t.grad(xid).data() + (n * C + c) * HW;
            for (Index i = 0; i < HW; ++i) {
              const S xh = (px[i] - mean[c]) * invstd[c];
              pd[i] += scale * (pg[i] - k2 - xh * k1);
            }
          }
        } else {
          for (Index n = 0; n < N; ++n) {
            ConstArrMap<S> g(gy.data() + (n * C + c) * HW, HW);
            ArrMap<S>(t.grad(xid).data() + (n * C + c) * HW, HW) += g * scale;
          }
        }
      }
    });
  return out_v;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

template <typename S>
Var<S> bce_with_logits(Var<S> logits, Var<S> target, Var<S> weights) {
  Tape<S>& t = *logits.tape;
  check_same_shape(logits.shape(), target.shape(), "bce_with_logits");
  if (weights.valid()) check_same_shape(logits.shape(), weights.shape(), "bce_with_logits weights");
  const Index m = logits.value().size();
  const S* pz = logits.value().data();
  const S* pt = target.value().data();
  const S* pw = weights.valid() ? weights.value().data() : nullptr;
  double acc = 0;
  for (Index i = 0; i < m; ++i) {
    const double z = pz[i], tt = pt[i];
    const double term = std::max(z, 0.0) - z * tt + std::log1p(std::exp(-std::abs(z)));
    acc += (pw ? static_cast<double>(pw[i]) : 1.0) * term;
  }
  Var<S> out = t.push(Tensor<S>::scalar(static_cast<S>(acc / static_cast<double>(m))), logits.requires_grad());
  if (out.requires_grad())
    t.set_backward(out.id, [&t, zid = logits.id, tid = target.id,
                            wid = weights.valid() ? weights.id : Index(-1), oid = out.id, m]() {
      const S g = t.grad(oid).value();
      const S* pz = t.value(zid).data();
      const S* pt = t.value(tid).data();
      const S* pw = wid >= 0 ? t.value(wid).data() : nullptr;
      S* pd = t.grad(zid).data();
      const S inv = S(1) / static_cast<S>(m);
      for (Index i = 0; i < m; ++i) {
        const S wv = pw ? pw[i] : S(1);
        pd[i] += g * wv * (stable_sigmoid(pz[i]) - pt[i]) * inv;
      }
    });
  return out;
}

template <typename S>
Var<S> soft_dice_loss(Var<S> probs, Var<S> target, S smooth) {
  Tape<S>& t = *probs.tape;
  check_same_shape(probs.shape(), target.shape(), "soft_dice_loss");
  const Index m = probs.value().size();
  const S* pp = probs.value().data();
  const S* pg = target.value().data();
  double sp = 0, sg = 0, spg = 0;
  for (Index i = 0; i < m; ++i) {
    sp += static_cast<double>(pp[i]);
    sg += static_cast<double>(pg[i]);
    spg += static_cast<double>(pp[i]) * static_cast<double>(pg[i]);
  }
  const double num = 2.0 * spg + static_cast<double>(smooth);
  const double den = sp + sg + static_cast<double>(smooth);
  const double loss = den > 0 ? 1.0 - num / den : 0.0;
  Var<S> out = t.push(Tensor<S>::scalar(static_cast<S>(loss)), probs.requires_grad());
  if (out.requires_grad() && den > 0)
    t.set_backward(out.id, [&t, pid = probs.id, tid = target.id, oid = out.id, m, num, den]() {
      const S g = t.grad(oid).value();
      const S* pg = t.value(tid).data();
      S* pd = t.grad(pid).data();
      const double den2 = den * den;
      for (Index i = 0; i < m; ++i)
        pd[i] += g * static_cast<S>((num - 2.0 * static_cast<double>(pg[i]) * den) / den2);
    });
  return out;
}

template <typename S>
Tensor<S> sigmoid_values(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  const S* px = x.data();
  S* py = y.data();
  for (Index i = 0; i < x.size(); ++i) py[i] = stable_sigmoid(px[i]);
  return y;
}

// ---------------------------------------------------------------------------

#define UGDA_INSTANTIATE_OPS(S)                                               \
  template Var<S> add<S>(Var<S>, Var<S>);                                     \
  template Var<S> mul<S>(Var<S>, Var<S>);                                     \
  template Var<S> add_const<S>(Var<S>, S);                                    \
  template Var<S> mul_const<S>(Var<S>, S);                                    \
  template Var<S> relu<S>(Var<S>);                                            \
  template Var<S> sigmoid<S>(Var<S>);                                         \
  template Var<S> sum_all<S>(Var<S>);                                         \
  template Var<S> conv2d<S>(Var<S>, Var<S>, Var<S>, int, int);                \
  template Var<S> max_pool<S>(Var<S>, int, int, int);                         \
  template Var<S> global_avg_pool<S>(Var<S>);                                 \
  template Var<S> channel_mean<S>(Var<S>);                                    \
  template Var<S> channel_max<S>(Var<S>);                                     \
  template Var<S> channel_std<S>(Var<S>);                                     \
  template Var<S> concat_channels<S>(Var<S>, Var<S>);                         \
  template Var<S> batch_norm<S>(Var<S>, Var<S>, Var<S>, Tensor<S>&, Tensor<S>&, bool, S, S); \
  template Var<S> upsample_bilinear<S>(Var<S>, Index, Index);                 \
  template Var<S> bce_with_logits<S>(Var<S>, Var<S>, Var<S>);                 \
  template Var<S> soft_dice_loss<S>(Var<S>, Var<S>, S);                       \
  template Tensor<S> sigmoid_values<S>(const Tensor<S>&);

UGDA_INSTANTIATE_OPS(float)
UGDA_INSTANTIATE_OPS(double)

#undef UGDA_INSTANTIATE_OPS

}  // namespace ugda
