#pragma once

#include "tgcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>

namespace tgcn {

namespace detail {

inline Index normalize_axis(Index axis, Index rank) {
  Index a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank)
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  return a;
}

struct AxisSplit {
  Index outer, len, inner;
};

inline AxisSplit split_at(const Shape& s, Index axis) {
  AxisSplit r{1, s[axis], 1};
  for (Index i = 0; i < axis; ++i) r.outer *= s[i];
  for (Index i = axis + 1; i < static_cast<Index>(s.size()); ++i) r.inner *= s[i];
  return r;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    Index ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    Index eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1)
      throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                           " are not broadcastable");
    out[i] = std::max(ea, eb);
  }
  return out;
}

// Element strides of `in` laid over `out`; zero on broadcast axes.
inline std::vector<Index> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<Index> strides(out.size(), 0);
  std::size_t off = out.size() - in.size();
  Index stride = 1;
  for (Index i = static_cast<Index>(in.size()) - 1; i >= 0; --i) {
    strides[off + i] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

template <class F>
void for_each_broadcast(const Shape& out, const std::vector<Index>& sa,
                        const std::vector<Index>& sb, F&& f) {
  const Index rank = static_cast<Index>(out.size());
  const Index last = out[rank - 1];
  const Index sal = sa[rank - 1], sbl = sb[rank - 1];
  const Index rows = numel(out) / last;
  std::vector<Index> idx(rank, 0);
  Index ia = 0, ib = 0, o = 0;
  for (Index r = 0; r < rows; ++r) {
    for (Index j = 0; j < last; ++j) f(o + j, ia + j * sal, ib + j * sbl);
    o += last;
    for (Index d = rank - 2; d >= 0; --d) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

template <typename S, class F, class GA, class GB>
Var<S> broadcast_binary(const char* name, const Var<S>& a, const Var<S>& b, F f, GA ga, GB gb) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(name) + ": operands on different tapes");
  Shape out = broadcast_shape(a.shape(), b.shape(), name);
  const bool same = a.shape() == out && b.shape() == out;
  auto sa = broadcast_strides(a.shape(), out);
  auto sb = broadcast_strides(b.shape(), out);
  Buffer<S> y(numel(out));
  const S* pa = a.value().data();
  const S* pb = b.value().data();
  if (same) {
    for (Index i = 0; i < y.size(); ++i) y[i] = f(pa[i], pb[i]);
  } else {
    for_each_broadcast(out, sa, sb, [&](Index o, Index ia, Index ib) { y[o] = f(pa[ia], pb[ib]); });
  }
  const Index ida = a.id(), idb = b.id();
  return a.tape().record(out, std::move(y), {a, b},
                         [=](Tape<S>& t, Index self) {
                           const S* g = t.grad(self).data();
                           const S* va = t.value(ida).data();
                           const S* vb = t.value(idb).data();
                           if (t.tracks(ida)) {
                             S* da = t.grad_slot(ida).data();
                             if (same) {
                               for (Index i = 0; i < numel(out); ++i) da[i] += ga(va[i], vb[i], g[i]);
                             } else {
                               for_each_broadcast(out, sa, sb, [&](Index o, Index ia, Index ib) {
                                 da[ia] += ga(va[ia], vb[ib], g[o]);
                               });
                             }
                           }
                           if (t.tracks(idb)) {
                             S* db = t.grad_slot(idb).data();
                             if (same) {
                               for (Index i = 0; i < numel(out); ++i) db[i] += gb(va[i], vb[i], g[i]);
                             } else {
                               for_each_broadcast(out, sa, sb, [&](Index o, Index ia, Index ib) {
                                 db[ib] += gb(va[ia], vb[ib], g[o]);
                               });
                             }
                           }
                         });
}

// Elementwise map; `dfdx(x, y)` gives the local derivative.
template <typename S, class F, class D>
Var<S> unary(const Var<S>& x, F f, D dfdx) {
  Buffer<S> y = x.value().unaryExpr(f);
  const Index idx = x.id();
  auto yv = std::make_shared<const Buffer<S>>(std::move(y));
  const Index self_size = yv->size();
  return x.tape().record_shared(
      x.shape(), yv, x.requires_grad(), [idx, dfdx, self_size](Tape<S>& t, Index self) {
        const S* g = t.grad(self).data();
        const S* xv = t.value(idx).data();
        const S* yv2 = t.value(self).data();
        S* dx = t.grad_slot(idx).data();
        for (Index i = 0; i < self_size; ++i) dx[i] += g[i] * dfdx(xv[i], yv2[i]);
      });
}

}  // namespace detail

// ---------------------------------------------------------------- structure

/// Same data, new shape. Shares the forward buffer with the source node.
template <typename S>
Var<S> reshape(const Var<S>& x, Shape shape) {
  check_shape(shape);
  if (numel(shape) != x.size())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  const Index idx = x.id();
  auto& tape = x.tape();
  return tape.record_shared(std::move(shape), tape.node(idx).value, x.requires_grad(),
                            [idx](Tape<S>& t, Index self) { t.grad_slot(idx) += t.grad(self); });
}

template <typename S>
Var<S> broadcast_to(const Var<S>& x, const Shape& shape) {
  Shape out = detail::broadcast_shape(x.shape(), shape, "broadcast_to");
  if (out != shape)
    throw DimensionError("broadcast_to: " + shape_str(x.shape()) + " does not expand to " +
                         shape_str(shape));
  auto sx = detail::broadcast_strides(x.shape(), out);
  auto s0 = std::vector<Index>(out.size(), 0);
  Buffer<S> y(numel(out));
  const S* px = x.value().data();
  detail::for_each_broadcast(out, sx, s0, [&](Index o, Index ix, Index) { y[o] = px[ix]; });
  const Index idx = x.id();
  return x.tape().record(out, std::move(y), {x}, [=](Tape<S>& t, Index self) {
    const S* g = t.grad(self).data();
    S* dx = t.grad_slot(idx).data();
    detail::for_each_broadcast(out, sx, s0, [&](Index o, Index ix, Index) { dx[ix] += g[o]; });
  });
}

/// Half-open range [begin, end) along `axis`.
template <typename S>
Var<S> slice(const Var<S>& x, Index axis, Index begin, Index end) {
  axis = detail::normalize_axis(axis, x.rank());
  const Shape& in = x.shape();
  if (begin < 0 || end > in[axis] || begin >= end)
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for extent " + std::to_string(in[axis]));
  auto sp = detail::split_at(in, axis);
  Shape out = in;
  out[axis] = end - begin;
  const Index w = end - begin;
  Buffer<S> y(numel(out));
  const S* px = x.value().data();
  for (Index o = 0; o < sp.outer; ++o)
    std::copy_n(px + (o * sp.len + begin) * sp.inner, w * sp.inner, y.data() + o * w * sp.inner);
  const Index idx = x.id();
  return x.tape().record(out, std::move(y), {x}, [=](Tape<S>& t, Index self) {
    const S* g = t.grad(self).data();
    S* dx = t.grad_slot(idx).data();
    for (Index o = 0; o < sp.outer; ++o) {
      S* dst = dx + (o * sp.len + begin) * sp.inner;
      const S* src = g + o * w * sp.inner;
      for (Index i = 0; i < w * sp.inner; ++i) dst[i] += src[i];
    }
  });
}

template <typename S>
Var<S> concat(const std::vector<Var<S>>& parts, Index axis) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  const Shape& first = parts.front().shape();
  axis = detail::normalize_axis(axis, static_cast<Index>(first.size()));
  Shape out = first;
  out[axis] = 0;
  std::vector<Index> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (static_cast<Index>(i) != axis && s[i] != first[i]) ok = false;
    if (!ok)
      throw DimensionError("concat: extent mismatch between " + shape_str(first) + " and " +
                           shape_str(s) + " off axis " + std::to_string(axis));
    widths.push_back(s[axis]);
    out[axis] += s[axis];
  }
  auto sp = detail::split_at(out, axis);
  Buffer<S> y(numel(out));
  std::vector<Index> ids;
  Index offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const S* src = parts[k].value().data();
    const Index w = widths[k] * sp.inner;
    for (Index o = 0; o < sp.outer; ++o)
      std::copy_n(src + o * w, w, y.data() + o * sp.len * sp.inner + offset * sp.inner);
    offset += widths[k];
    ids.push_back(parts[k].id());
  }
  return parts.front().tape().record(out, std::move(y), parts, [=](Tape<S>& t, Index self) {
    const S* g = t.grad(self).data();
    Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const Index w = widths[k] * sp.inner;
      if (t.tracks(ids[k])) {
        S* dst = t.grad_slot(ids[k]).data();
        for (Index o = 0; o < sp.outer; ++o) {
          const S* src = g + o * sp.len * sp.inner + off * sp.inner;
          for (Index i = 0; i < w; ++i) dst[o * w + i] += src[i];
        }
      }
      off += widths[k];
    }
  });
}

/// Axis permutation: output axis i is input axis perm[i].
template <typename S>
Var<S> transpose(const Var<S>& x, const std::vector<Index>& perm) {
  const Shape& in = x.shape();
  const Index rank = static_cast<Index>(in.size());
  std::vector<bool> seen(rank, false);
  if (static_cast<Index>(perm.size()) != rank)
    throw DimensionError("transpose: permutation length does not match rank of " + shape_str(in));
  for (Index p : perm) {
    if (p < 0 || p >= rank || seen[p]) throw DimensionError("transpose: invalid permutation");
    seen[p] = true;
  }
  Shape out(rank);
  std::vector<Index> in_strides(rank), gather(rank);
  Index stride = 1;
  for (Index i = rank - 1; i >= 0; --i) {
    in_strides[i] = stride;
    stride *= in[i];
  }
  for (Index i = 0; i < rank; ++i) {
    out[i] = in[perm[i]];
    gather[i] = in_strides[perm[i]];
  }
  auto zeros = std::vector<Index>(rank, 0);
  Buffer<S> y(numel(out));
  const S* px = x.value().data();
  detail::for_each_broadcast(out, gather, zeros, [&](Index o, Index ix, Index) { y[o] = px[ix]; });
  const Index idx = x.id();
  return x.tape().record(out, std::move(y), {x}, [=](Tape<S>& t, Index self) {
    const S* g = t.grad(self).data();
    S* dx = t.grad_slot(idx).data();
    detail::for_each_broadcast(out, gather, zeros, [&](Index o, Index ix, Index) { dx[ix] += g[o]; });
  });
}

template <typename S>
Var<S> transpose2d(const Var<S>& x) {
  if (x.rank() != 2) throw DimensionError("transpose2d: expected rank 2, got " + shape_str(x.shape()));
  return transpose(x, {1, 0});
}

// ---------------------------------------------------------------- products

/// Matrix product over the last two axes. Leading (batch) axes must agree,
/// or one operand may be a plain matrix shared across the other's batch.
template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2 || sa[sa.size() - 1] != sb[sb.size() - 2])
    throw DimensionError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  Shape batch_a(sa.begin(), sa.end() - 2), batch_b(sb.begin(), sb.end() - 2);
  if (!batch_a.empty() && !batch_b.empty() && batch_a != batch_b)
    throw DimensionError("matmul: batch extents of " + shape_str(sa) + " and " + shape_str(sb) +
                         " do not broadcast");
  const Index m = sa[sa.size() - 2], k = sa.back(), n = sb.back();
  const Index nb = std::max(numel(batch_a), numel(batch_b));
  const bool shared_b = batch_b.empty();
  const bool shared_a = batch_a.empty() && !shared_b;
  Shape out = shared_b ? batch_a : batch_b;
  out.push_back(m);
  out.push_back(n);

  using CMap = Eigen::Map<const RowMatrix<S>>;
  using MMap = Eigen::Map<RowMatrix<S>>;
  Buffer<S> y(numel(out));
  const S* pa = a.value().data();
  const S* pb = b.value().data();
  if (shared_b) {
    MMap(y.data(), nb * m, n).noalias() = CMap(pa, nb * m, k) * CMap(pb, k, n);
  } else {
    for (Index i = 0; i < nb; ++i)
      MMap(y.data() + i * m * n, m, n).noalias() =
          CMap(pa + (shared_a ? 0 : i * m * k), m, k) * CMap(pb + i * k * n, k, n);
  }
  const Index ida = a.id(), idb = b.id();
  return a.tape().record(out, std::move(y), {a, b}, [=](Tape<S>& t, Index self) {
    const S* g = t.grad(self).data();
    const S* va = t.value(ida).data();
    const S* vb = t.value(idb).data();
    if (t.tracks(ida)) {
      S* da = t.grad_slot(ida).data();
      if (shared_b) {
        MMap(da, nb * m, k).noalias() += CMap(g, nb * m, n) * CMap(vb, k, n).transpose();
      } else {
        for (Index i = 0; i < nb; ++i)
          MMap(da + (shared_a ? 0 : i * m * k), m, k).noalias() +=
              CMap(g + i * m * n, m, n) * CMap(vb + i * k * n, k, n).transpose();
      }
    }
    if (t.tracks(idb)) {
      S* db = t.grad_slot(idb).data();
      if (shared_b) {
        MMap(db, k, n).noalias() += CMap(va, nb * m, k).transpose() * CMap(g, nb * m, n);
      } else {
        for (Index i = 0; i < nb; ++i)
          MMap(db + i * k * n, k, n).noalias() +=
              CMap(va + (shared_a ? 0 : i * m * k), m, k).transpose() * CMap(g + i * m * n, m, n);
      }
    }
  });
}

/// x xᵀ for a matrix x [m, k]. The result is exactly symmetric: the lower
/// triangle is computed once and mirrored.
template <typename S>
Var<S> gram(const Var<S>& x) {
  if (x.rank() != 2) throw DimensionError("gram: expected a matrix, got " + shape_str(x.shape()));
  using CMap = Eigen::Map<const RowMatrix<S>>;
  using MMap = Eigen::Map<RowMatrix<S>>;
  const Index m = x.dim(0), k = x.dim(1);
  Buffer<S> y(m * m);
  MMap out(y.data(), m, m);
  CMap v(x.value().data(), m, k);
  out.noalias() = v * v.transpose();
  out.template triangularView<Eigen::StrictlyUpper>() = out.transpose();
  const Index idx = x.id();
  return x.tape().record({m, m}, std::move(y), {x}, [=](Tape<S>& t, Index self) {
    if (!t.tracks(idx)) return;
    CMap g(t.grad(self).data(), m, m);
    CMap vx(t.value(idx).data(), m, k);
    MMap(t.grad_slot(idx).data(), m, k).noalias() += (g + g.transpose()) * vx;
  });
}

// ---------------------------------------------------------------- pointwise

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  return detail::broadcast_binary<S>(
      "add", a, b, [](S x, S y) { return x + y; }, [](S, S, S g) { return g; },
      [](S, S, S g) { return g; });
}

template <typename S>
Var<S> subtract(const Var<S>& a, const Var<S>& b) {
  return detail::broadcast_binary<S>(
      "subtract", a, b, [](S x, S y) { return x - y; }, [](S, S, S g) { return g; },
      [](S, S, S g) { return -g; });
}

template <typename S>
Var<S> hadamard(const Var<S>& a, const Var<S>& b) {
  return detail::broadcast_binary<S>(
      "hadamard", a, b, [](S x, S y) { return x * y; }, [](S, S y, S g) { return g * y; },
      [](S x, S, S g) { return g * x; });
}

template <typename S>
Var<S> scale(const Var<S>& x, S c) {
  return detail::unary(x, [c](S v) { return c * v; }, [c](S, S) { return c; });
}

template <typename S>
Var<S> add_scalar(const Var<S>& x, S c) {
  return detail::unary(x, [c](S v) { return v + c; }, [](S, S) { return S(1); });
}

template <typename S>
Var<S> sigmoid(const Var<S>& x) {
  return detail::unary(
      x,
      [](S v) {
        if (v >= 0) return S(1) / (S(1) + std::exp(-v));
        S e = std::exp(v);
        return e / (S(1) + e);
      },
      [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Var<S> tanh(const Var<S>& x) {
  return detail::unary(x, [](S v) { return std::tanh(v); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& x, S slope) {
  return detail::unary(
      x, [slope](S v) { return v >= 0 ? v : slope * v; },
      [slope](S v, S) { return v >= 0 ? S(1) : slope; });
}

template <typename S>
Var<S> abs(const Var<S>& x) {
  return detail::unary(
      x, [](S v) { return std::abs(v); },
      [](S v, S) { return v > 0 ? S(1) : (v < 0 ? S(-1) : S(0)); });
}

/// log(max(x, floor)); zero derivative below the floor.
template <typename S>
Var<S> log_clamped(const Var<S>& x, S floor) {
  return detail::unary(
      x, [floor](S v) { return std::log(std::max(v, floor)); },
      [floor](S v, S) { return v > floor ? S(1) / v : S(0); });
}

template <typename S>
Var<S> clamp(const Var<S>& x, S lo, S hi) {
  return detail::unary(
      x, [lo, hi](S v) { return std::clamp(v, lo, hi); },
      [lo, hi](S v, S) { return (v >= lo && v <= hi) ? S(1) : S(0); });
}

// ---------------------------------------------------------------- reductions

/// Sum over one axis; the axis is removed (a full reduction yields shape [1]).
template <typename S>
Var<S> sum(const Var<S>& x, Index axis) {
  axis = detail::normalize_axis(axis, x.rank());
  auto sp = detail::split_at(x.shape(), axis);
  Shape out = x.shape();
  out.erase(out.begin() + axis);
  if (out.empty()) out = {1};
  Buffer<S> y = Buffer<S>::Zero(sp.outer * sp.inner);
  const S* px = x.value().data();
  for (Index o = 0; o < sp.outer; ++o)
    for (Index l = 0; l < sp.len; ++l)
      for (Index i = 0; i < sp.inner; ++i) y[o * sp.inner + i] += px[(o * sp.len + l) * sp.inner + i];
  const Index idx = x.id();
  return x.tape().record(out, std::move(y), {x}, [=](Tape<S>& t, Index self) {
    const S* g = t.grad(self).data();
    S* dx = t.grad_slot(idx).data();
    for (Index o = 0; o < sp.outer; ++o)
      for (Index l = 0; l < sp.len; ++l)
        for (Index i = 0; i < sp.inner; ++i) dx[(o * sp.len + l) * sp.inner + i] += g[o * sp.inner + i];
  });
}

template <typename S>
Var<S> mean(const Var<S>& x, Index axis) {
  Index a = detail::normalize_axis(axis, x.rank());
  return scale(sum(x, a), S(1) / static_cast<S>(x.shape()[a]));
}

template <typename S>
Var<S> sum_all(const Var<S>& x) {
  return sum(reshape(x, {x.size()}), 0);
}

template <typename S>
Var<S> mean_all(const Var<S>& x) {
  return scale(sum_all(x), S(1) / static_cast<S>(x.size()));
}

// ---------------------------------------------------------------- normalisation

template <typename S>
Var<S> softmax(const Var<S>& x, Index axis) {
  axis = detail::normalize_axis(axis, x.rank());
  auto sp = detail::split_at(x.shape(), axis);
  Buffer<S> y(x.size());
  const S* px = x.value().data();
  for (Index o = 0; o < sp.outer; ++o)
    for (Index i = 0; i < sp.inner; ++i) {
      const Index base = o * sp.len * sp.inner + i;
      S mx = -std::numeric_limits<S>::infinity();
      for (Index l = 0; l < sp.len; ++l) mx = std::max(mx, px[base + l * sp.inner]);
      S total = 0;
      for (Index l = 0; l < sp.len; ++l) {
        S e = std::exp(px[base + l * sp.inner] - mx);
        y[base + l * sp.inner] = e;
        total += e;
      }
      for (Index l = 0; l < sp.len; ++l) y[base + l * sp.inner] /= total;
    }
  const Index idx = x.id();
  return x.tape().record(x.shape(), std::move(y), {x}, [=](Tape<S>& t, Index self) {
    const S* g = t.grad(self).data();
    const S* yv = t.value(self).data();
    S* dx = t.grad_slot(idx).data();
    for (Index o = 0; o < sp.outer; ++o)
      for (Index i = 0; i < sp.inner; ++i) {
        const Index base = o * sp.len * sp.inner + i;
        S dot = 0;
        for (Index l = 0; l < sp.len; ++l) dot += g[base + l * sp.inner] * yv[base + l * sp.inner];
        for (Index l = 0; l < sp.len; ++l) {
          const Index e = base + l * sp.inner;
          dx[e] += yv[e] * (g[e] - dot);
        }
      }
  });
}

inline constexpr double kLayerNormEps = 1e-5;

/// Normalises along `axis` to zero mean / unit variance, then applies the
/// per-position gain and offset (both shaped [extent of axis]).
template <typename S>
Var<S> layer_norm(const Var<S>& x, Index axis, const Var<S>& gain, const Var<S>& offset,
                  double eps = kLayerNormEps) {
  axis = detail::normalize_axis(axis, x.rank());
  auto sp = detail::split_at(x.shape(), axis);
  if (sp.len < 2)
    throw DimensionError("layer_norm: degenerate axis of extent " + std::to_string(sp.len) +
                         " in " + shape_str(x.shape()));
  if (gain.size() != sp.len || offset.size() != sp.len)
    throw DimensionError("layer_norm: gain/offset " + shape_str(gain.shape()) + "/" +
                         shape_str(offset.shape()) + " do not match axis extent " +
                         std::to_string(sp.len));
  const S* px = x.value().data();
  const S* pg = gain.value().data();
  const S* pb = offset.value().data();
  auto xhat = std::make_shared<Buffer<S>>(x.size());
  auto inv_std = std::make_shared<Buffer<S>>(sp.outer * sp.inner);
  Buffer<S> y(x.size());
  for (Index o = 0; o < sp.outer; ++o)
    for (Index i = 0; i < sp.inner; ++i) {
      const Index base = o * sp.len * sp.inner + i;
      S mu = 0;
      for (Index l = 0; l < sp.len; ++l) mu += px[base + l * sp.inner];
      mu /= static_cast<S>(sp.len);
      S var = 0;
      for (Index l = 0; l < sp.len; ++l) {
        S d = px[base + l * sp.inner] - mu;
        var += d * d;
      }
      var /= static_cast<S>(sp.len);
      const S is = S(1) / std::sqrt(var + static_cast<S>(eps));
      (*inv_std)[o * sp.inner + i] = is;
      for (Index l = 0; l < sp.len; ++l) {
        const Index e = base + l * sp.inner;
        const S h = (px[e] - mu) * is;
        (*xhat)[e] = h;
        y[e] = pg[l] * h + pb[l];
      }
    }
  const Index idx = x.id(), idg = gain.id(), ido = offset.id();
  return x.tape().record(x.shape(), std::move(y), {x, gain, offset}, [=](Tape<S>& t, Index self) {
    const S* g = t.grad(self).data();
    const S* gv = t.value(idg).data();
    const S* h = xhat->data();
    if (t.tracks(idg)) {
      S* dg = t.grad_slot(idg).data();
      for (Index o = 0; o < sp.outer; ++o)
        for (Index l = 0; l < sp.len; ++l)
          for (Index i = 0; i < sp.inner; ++i) {
            const Index e = (o * sp.len + l) * sp.inner + i;
            dg[l] += g[e] * h[e];
          }
    }
    if (t.tracks(ido)) {
      S* db = t.grad_slot(ido).data();
      for (Index o = 0; o < sp.outer; ++o)
        for (Index l = 0; l < sp.len; ++l)
          for (Index i = 0; i < sp.inner; ++i) db[l] += g[(o * sp.len + l) * sp.inner + i];
    }
    if (t.tracks(idx)) {
      S* dx = t.grad_slot(idx).data();
      const S n = static_cast<S>(sp.len);
      for (Index o = 0; o < sp.outer; ++o)
        for (Index i = 0; i < sp.inner; ++i) {
          const Index base = o * sp.len * sp.inner + i;
          S m1 = 0, m2 = 0;
          for (Index l = 0; l < sp.len; ++l) {
            const Index e = base + l * sp.inner;
            const S dh = g[e] * gv[l];
            m1 += dh;
            m2 += dh * h[e];
          }
          m1 /= n;
          m2 /= n;
          const S is = (*inv_std)[o * sp.inner + i];
          for (Index l = 0; l < sp.len; ++l) {
            const Index e = base + l * sp.inner;
            dx[e] += is * (g[e] * gv[l] - m1 - h[e] * m2);
          }
        }
    }
  });
}

/// Inverted dropout with a counter-based mask: entry i survives iff
/// uniform01(seed, i) >= rate. Identity when not training or rate == 0.
template <typename S>
Var<S> dropout(const Var<S>& x, double rate, bool training, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<Buffer<S>>(x.size());
  for (Index i = 0; i < x.size(); ++i)
    (*mask)[i] = uniform01(seed, static_cast<std::uint64_t>(i)) >= rate ? keep_scale : S(0);
  Buffer<S> y = x.value() * (*mask);
  const Index idx = x.id();
  return x.tape().record(x.shape(), std::move(y), {x}, [=](Tape<S>& t, Index self) {
    t.grad_slot(idx) += t.grad(self) * (*mask);
  });
}

// ---------------------------------------------------------------- operators

template <typename S>
Var<S> operator+(const Var<S>& a, const Var<S>& b) {
  return add(a, b);
}
template <typename S>
Var<S> operator-(const Var<S>& a, const Var<S>& b) {
  return subtract(a, b);
}
template <typename S>
Var<S> operator*(const Var<S>& a, const Var<S>& b) {
  return hadamard(a, b);
}
template <typename S>
Var<S> operator-(const Var<S>& a) {
  return scale(a, S(-1));
}
template <typename S>
Var<S> operator*(S c, const Var<S>& a) {
  return scale(a, c);
}
template <typename S>
Var<S> operator+(const Var<S>& a, S c) {
  return add_scalar(a, c);
}
template <typename S>
Var<S> operator+(S c, const Var<S>& a) {
  return add_scalar(a, c);
}

/// 1 - x, the complement used by GRU update gates and BCE terms.
template <typename S>
Var<S> one_minus(const Var<S>& x) {
  return add_scalar(scale(x, S(-1)), S(1));
}

/// Identity matrix as a constant on the tape.
template <typename S>
Var<S> identity(Tape<S>& tape, Index n) {
  Buffer<S> v = Buffer<S>::Zero(n * n);
  for (Index i = 0; i < n; ++i) v[i * n + i] = S(1);
  return tape.constant({n, n}, std::move(v));
}

/// Row-major matrix view of a rank-2 node value.
template <typename S>
RowMatrix<S> to_matrix(const Var<S>& x) {
  if (x.rank() != 2) throw DimensionError("to_matrix: expected rank 2, got " + shape_str(x.shape()));
  return Eigen::Map<const RowMatrix<S>>(x.value().data(), x.dim(0), x.dim(1));
}

}  // namespace tgcn
