#include "reckon/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace reckon::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

long norm_axis(long ax, long rank) {
  if (ax < 0) ax += rank;
  if (ax < 0 || ax >= rank) {
    throw std::runtime_error("axis " + std::to_string(ax) + " out of range for rank " +
                             std::to_string(rank));
  }
  return ax;
}

std::vector<long> contiguous_strides(const Shape& s) {
  std::vector<long> st(s.size());
  long acc = 1;
  for (long i = static_cast<long>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

// Right-aligned broadcast of two shapes; dims must match or be 1.
Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const long ra = static_cast<long>(a.size()), rb = static_cast<long>(b.size());
  const long r = std::max(ra, rb);
  Shape out(static_cast<size_t>(r));
  for (long i = 0; i < r; ++i) {
    const long da = (i < r - ra) ? 1 : a[static_cast<size_t>(i - (r - ra))];
    const long db = (i < r - rb) ? 1 : b[static_cast<size_t>(i - (r - rb))];
    if (da != db && da != 1 && db != 1) {
      throw std::runtime_error(std::string(op) + ": cannot broadcast " + shape_str(a) +
                               " with " + shape_str(b));
    }
    out[static_cast<size_t>(i)] = std::max(da, db);
  }
  return out;
}

// Strides of `s` aligned to `out`'s rank, 0 on broadcast axes.
std::vector<long> aligned_strides(const Shape& s, const Shape& out) {
  const long R = static_cast<long>(out.size()), r = static_cast<long>(s.size());
  std::vector<long> cs = contiguous_strides(s);
  std::vector<long> st(static_cast<size_t>(R), 0);
  for (long i = 0; i < r; ++i) {
    const long oi = R - r + i;
    st[static_cast<size_t>(oi)] =
        (s[static_cast<size_t>(i)] == out[static_cast<size_t>(oi)]) ? cs[static_cast<size_t>(i)] : 0;
  }
  return st;
}

template <class F>
Tensor ew_binary(const char* op, const Tensor& a, const Tensor& b, F f) {
  const Shape out = broadcast_shapes(a.shape(), b.shape(), op);
  const long n = shape_numel(out);
  std::vector<double> dst(static_cast<size_t>(n));
  const double* pa = a.raw();
  const double* pb = b.raw();
  if (a.shape() == b.shape()) {
    for (long i = 0; i < n; ++i) dst[static_cast<size_t>(i)] = f(pa[i], pb[i]);
  } else if (b.numel() == 1) {
    const double v = pb[0];
    for (long i = 0; i < n; ++i) dst[static_cast<size_t>(i)] = f(pa[i], v);
  } else if (a.numel() == 1) {
    const double v = pa[0];
    for (long i = 0; i < n; ++i) dst[static_cast<size_t>(i)] = f(v, pb[i]);
  } else {
    const std::vector<long> sa = aligned_strides(a.shape(), out);
    const std::vector<long> sb = aligned_strides(b.shape(), out);
    const long R = static_cast<long>(out.size());
    std::vector<long> idx(static_cast<size_t>(R), 0);
    long oa = 0, ob = 0;
    for (long i = 0; i < n; ++i) {
      dst[static_cast<size_t>(i)] = f(pa[oa], pb[ob]);
      for (long ax = R - 1; ax >= 0; --ax) {
        ++idx[static_cast<size_t>(ax)];
        oa += sa[static_cast<size_t>(ax)];
        ob += sb[static_cast<size_t>(ax)];
        if (idx[static_cast<size_t>(ax)] < out[static_cast<size_t>(ax)]) break;
        oa -= sa[static_cast<size_t>(ax)] * out[static_cast<size_t>(ax)];
        ob -= sb[static_cast<size_t>(ax)] * out[static_cast<size_t>(ax)];
        idx[static_cast<size_t>(ax)] = 0;
      }
    }
  }
  return Tensor::from_data(out, std::move(dst));
}

template <class F>
Tensor ew_unary(const Tensor& a, F f) {
  const long n = a.numel();
  std::vector<double> dst(static_cast<size_t>(n));
  const double* pa = a.raw();
  for (long i = 0; i < n; ++i) dst[static_cast<size_t>(i)] = f(pa[i]);
  return Tensor::from_data(a.shape(), std::move(dst));
}

void rec(Tensor& out, const char* op, std::initializer_list<const Tensor*> ins, BackwardFn fn) {
  if (!recording_enabled()) return;
  Tape* tp = Tape::active();
  std::vector<int> ids;
  ids.reserve(ins.size());
  for (const Tensor* t : ins) ids.push_back(tp->input_id(*t));
  out.set_node(tp, tp->record(op, std::move(ids), std::move(fn)));
}

// Sums g down to `target` (inverse of broadcast). Built from taped ops so it
// stays differentiable.
Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor r = g;
  const long extra = r.ndim() - static_cast<long>(target.size());
  if (extra > 0) {
    std::vector<long> ax(static_cast<size_t>(extra));
    std::iota(ax.begin(), ax.end(), 0L);
    r = sum(r, ax, false);
  }
  std::vector<long> ax2;
  for (long i = 0; i < static_cast<long>(target.size()); ++i) {
    if (target[static_cast<size_t>(i)] == 1 && r.dim(i) != 1) ax2.push_back(i);
  }
  if (!ax2.empty()) r = sum(r, ax2, true);
  if (r.shape() != target) {
    throw std::runtime_error("reduce_to: " + shape_str(g.shape()) + " does not reduce to " +
                             shape_str(target));
  }
  return r;
}

}  // namespace

// --- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = ew_binary("add", a, b, [](double x, double y) { return x + y; });
  rec(out, "add", {&a, &b}, [sa = a.shape(), sb = b.shape()](const Tensor& g) {
    return std::vector<Tensor>{reduce_to(g, sa), reduce_to(g, sb)};
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor out = ew_binary("sub", a, b, [](double x, double y) { return x - y; });
  rec(out, "sub", {&a, &b}, [sa = a.shape(), sb = b.shape()](const Tensor& g) {
    return std::vector<Tensor>{reduce_to(g, sa), reduce_to(neg(g), sb)};
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = ew_binary("mul", a, b, [](double x, double y) { return x * y; });
  rec(out, "mul", {&a, &b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{reduce_to(mul(g, b), a.shape()), reduce_to(mul(g, a), b.shape())};
  });
  return out;
}

Tensor neg(const Tensor& a) {
  Tensor out = ew_unary(a, [](double x) { return -x; });
  rec(out, "neg", {&a}, [](const Tensor& g) { return std::vector<Tensor>{neg(g)}; });
  return out;
}

Tensor exp(const Tensor& a) {
  Tensor out = ew_unary(a, [](double x) { return std::exp(x); });
  rec(out, "exp", {&a}, [out](const Tensor& g) { return std::vector<Tensor>{mul(g, out)}; });
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out = ew_unary(a, [](double x) { return std::log(x); });
  rec(out, "log", {&a}, [a](const Tensor& g) { return std::vector<Tensor>{mul(g, recip(a))}; });
  return out;
}

Tensor tanh(const Tensor& a) {
  Tensor out = ew_unary(a, [](double x) { return std::tanh(x); });
  rec(out, "tanh", {&a}, [out](const Tensor& g) {
    return std::vector<Tensor>{mul(g, add_scalar(neg(mul(out, out)), 1.0))};
  });
  return out;
}

Tensor recip(const Tensor& a) {
  Tensor out = ew_unary(a, [](double x) { return 1.0 / x; });
  rec(out, "recip", {&a}, [out](const Tensor& g) {
    return std::vector<Tensor>{neg(mul(g, mul(out, out)))};
  });
  return out;
}

Tensor add_scalar(const Tensor& a, double v) {
  Tensor out = ew_unary(a, [v](double x) { return x + v; });
  rec(out, "add_scalar", {&a}, [](const Tensor& g) { return std::vector<Tensor>{g}; });
  return out;
}

Tensor mul_scalar(const Tensor& a, double v) {
  Tensor out = ew_unary(a, [v](double x) { return x * v; });
  rec(out, "mul_scalar", {&a}, [v](const Tensor& g) {
    return std::vector<Tensor>{mul_scalar(g, v)};
  });
  return out;
}

// --- graph plumbing --------------------------------------------------------

Tensor clone(const Tensor& a) {
  Tensor out = Tensor::from_data(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
  rec(out, "clone", {&a}, [](const Tensor& g) { return std::vector<Tensor>{g}; });
  return out;
}

Tensor detach(const Tensor& a) {
  return Tensor::from_data(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
}

// --- matmul ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const long ra = a.ndim(), rb = b.ndim();
  if (ra < 2 || rb < 2) {
    throw std::runtime_error("matmul: operands must be rank >= 2, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
  }
  const long m = a.dim(-2), k = a.dim(-1);
  const long k2 = b.dim(-2), n = b.dim(-1);
  if (k != k2) {
    throw std::runtime_error("matmul: inner dims differ, " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
  }
  Shape batch;
  bool a_shared = false, b_shared = false;
  if (ra == 2 && rb == 2) {
    // no batch
  } else if (rb == 2) {
    batch.assign(a.shape().begin(), a.shape().end() - 2);
    b_shared = true;
  } else if (ra == 2) {
    batch.assign(b.shape().begin(), b.shape().end() - 2);
    a_shared = true;
  } else {
    if (ra != rb || !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
      throw std::runtime_error("matmul: batch dims differ, " + shape_str(a.shape()) + " vs " +
                               shape_str(b.shape()));
    }
    batch.assign(a.shape().begin(), a.shape().end() - 2);
  }
  const long nb = shape_numel(batch);
  Shape os = batch;
  os.push_back(m);
  os.push_back(n);
  std::vector<double> dst(static_cast<size_t>(nb * m * n));
  const double* pa = a.raw();
  const double* pb = b.raw();
  for (long i = 0; i < nb; ++i) {
    Eigen::Map<const RowMat> A(pa + (a_shared ? 0 : i * m * k), m, k);
    Eigen::Map<const RowMat> B(pb + (b_shared ? 0 : i * k * n), k, n);
    Eigen::Map<RowMat> C(dst.data() + i * m * n, m, n);
    C.noalias() = A * B;
  }
  Tensor out = Tensor::from_data(std::move(os), std::move(dst));
  rec(out, "matmul", {&a, &b}, [a, b](const Tensor& g) {
    Tensor ga = reduce_to(matmul(g, transpose(b)), a.shape());
    Tensor gb = reduce_to(matmul(transpose(a), g), b.shape());
    return std::vector<Tensor>{std::move(ga), std::move(gb)};
  });
  return out;
}

// --- axis moves ------------------------------------------------------------

Tensor swap_axes(const Tensor& a, long ax0, long ax1) {
  const long r = a.ndim();
  ax0 = norm_axis(ax0, r);
  ax1 = norm_axis(ax1, r);
  if (ax0 == ax1) return clone(a);
  Shape os = a.shape();
  std::swap(os[static_cast<size_t>(ax0)], os[static_cast<size_t>(ax1)]);
  std::vector<long> ist = contiguous_strides(a.shape());
  std::swap(ist[static_cast<size_t>(ax0)], ist[static_cast<size_t>(ax1)]);
  const long n = a.numel();
  std::vector<double> dst(static_cast<size_t>(n));
  const double* src = a.raw();
  std::vector<long> idx(static_cast<size_t>(r), 0);
  long off = 0;
  for (long i = 0; i < n; ++i) {
    dst[static_cast<size_t>(i)] = src[off];
    for (long ax = r - 1; ax >= 0; --ax) {
      ++idx[static_cast<size_t>(ax)];
      off += ist[static_cast<size_t>(ax)];
      if (idx[static_cast<size_t>(ax)] < os[static_cast<size_t>(ax)]) break;
      off -= ist[static_cast<size_t>(ax)] * os[static_cast<size_t>(ax)];
      idx[static_cast<size_t>(ax)] = 0;
    }
  }
  Tensor out = Tensor::from_data(std::move(os), std::move(dst));
  rec(out, "swap_axes", {&a}, [ax0, ax1](const Tensor& g) {
    return std::vector<Tensor>{swap_axes(g, ax0, ax1)};
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() < 2) throw std::runtime_error("transpose: rank must be >= 2");
  return swap_axes(a, a.ndim() - 2, a.ndim() - 1);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::runtime_error("reshape: cannot view " + shape_str(a.shape()) + " as " +
                             shape_str(shape));
  }
  Tensor out = Tensor::from_data(std::move(shape),
                                 std::vector<double>(a.data().begin(), a.data().end()));
  rec(out, "reshape", {&a}, [sa = a.shape()](const Tensor& g) {
    return std::vector<Tensor>{reshape(g, sa)};
  });
  return out;
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  const Shape check = broadcast_shapes(a.shape(), shape, "broadcast_to");
  if (check != shape) {
    throw std::runtime_error("broadcast_to: " + shape_str(a.shape()) + " does not broadcast to " +
                             shape_str(shape));
  }
  const long n = shape_numel(shape);
  std::vector<double> dst(static_cast<size_t>(n));
  const double* src = a.raw();
  if (a.numel() == 1) {
    std::fill(dst.begin(), dst.end(), src[0]);
  } else {
    const std::vector<long> st = aligned_strides(a.shape(), shape);
    const long R = static_cast<long>(shape.size());
    std::vector<long> idx(static_cast<size_t>(R), 0);
    long off = 0;
    for (long i = 0; i < n; ++i) {
      dst[static_cast<size_t>(i)] = src[off];
      for (long ax = R - 1; ax >= 0; --ax) {
        ++idx[static_cast<size_t>(ax)];
        off += st[static_cast<size_t>(ax)];
        if (idx[static_cast<size_t>(ax)] < shape[static_cast<size_t>(ax)]) break;
        off -= st[static_cast<size_t>(ax)] * shape[static_cast<size_t>(ax)];
        idx[static_cast<size_t>(ax)] = 0;
      }
    }
  }
  Tensor out = Tensor::from_data(shape, std::move(dst));
  rec(out, "broadcast_to", {&a}, [sa = a.shape()](const Tensor& g) {
    return std::vector<Tensor>{reduce_to(g, sa)};
  });
  return out;
}

// --- concat / slice --------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, long axis) {
  if (parts.empty()) throw std::runtime_error("concat: no parts");
  const long r = parts[0].ndim();
  const long ax = norm_axis(axis, r);
  long total = 0;
  for (const Tensor& p : parts) {
    if (p.ndim() != r) throw std::runtime_error("concat: rank mismatch");
    for (long i = 0; i < r; ++i) {
      if (i != ax && p.dim(i) != parts[0].dim(i)) {
        throw std::runtime_error("concat: shape mismatch at axis " + std::to_string(i) + ": " +
                                 shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
      }
    }
    total += p.dim(ax);
  }
  Shape os = parts[0].shape();
  os[static_cast<size_t>(ax)] = total;
  // outer = product of dims before ax, inner = product after (incl. element).
  long outer = 1, inner = 1;
  for (long i = 0; i < ax; ++i) outer *= os[static_cast<size_t>(i)];
  for (long i = ax + 1; i < r; ++i) inner *= os[static_cast<size_t>(i)];
  std::vector<double> dst(static_cast<size_t>(shape_numel(os)));
  long col = 0;
  for (const Tensor& p : parts) {
    const long w = p.dim(ax);
    const double* src = p.raw();
    for (long o = 0; o < outer; ++o) {
      std::copy_n(src + o * w * inner, w * inner, dst.data() + (o * total + col) * inner);
    }
    col += w;
  }
  Tensor out = Tensor::from_data(std::move(os), std::move(dst));
  if (recording_enabled()) {
    std::vector<long> lens;
    lens.reserve(parts.size());
    for (const Tensor& p : parts) lens.push_back(p.dim(ax));
    Tape* tp = Tape::active();
    std::vector<int> ids;
    ids.reserve(parts.size());
    for (const Tensor& p : parts) ids.push_back(tp->input_id(p));
    int id = tp->record("concat", std::move(ids), [ax, lens](const Tensor& g) {
      std::vector<Tensor> gs;
      gs.reserve(lens.size());
      long start = 0;
      for (long w : lens) {
        gs.push_back(slice(g, ax, start, w));
        start += w;
      }
      return gs;
    });
    out.set_node(tp, id);
  }
  return out;
}

Tensor slice(const Tensor& a, long axis, long start, long len) {
  const long r = a.ndim();
  const long ax = norm_axis(axis, r);
  if (start < 0 || len < 0 || start + len > a.dim(ax)) {
    throw std::runtime_error("slice: [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") out of range for axis size " +
                             std::to_string(a.dim(ax)));
  }
  Shape os = a.shape();
  os[static_cast<size_t>(ax)] = len;
  long outer = 1, inner = 1;
  for (long i = 0; i < ax; ++i) outer *= a.dim(i);
  for (long i = ax + 1; i < r; ++i) inner *= a.dim(i);
  const long w = a.dim(ax);
  std::vector<double> dst(static_cast<size_t>(shape_numel(os)));
  const double* src = a.raw();
  for (long o = 0; o < outer; ++o) {
    std::copy_n(src + (o * w + start) * inner, len * inner, dst.data() + o * len * inner);
  }
  Tensor out = Tensor::from_data(std::move(os), std::move(dst));
  rec(out, "slice", {&a}, [sa = a.shape(), ax, start, len](const Tensor& g) {
    const long after = sa[static_cast<size_t>(ax)] - start - len;
    if (start == 0 && after == 0) return std::vector<Tensor>{g};
    std::vector<Tensor> parts;
    if (start > 0) {
      Shape s = sa;
      s[static_cast<size_t>(ax)] = start;
      parts.push_back(Tensor::zeros(std::move(s)));
    }
    parts.push_back(g);
    if (after > 0) {
      Shape s = sa;
      s[static_cast<size_t>(ax)] = after;
      parts.push_back(Tensor::zeros(std::move(s)));
    }
    return std::vector<Tensor>{concat(parts, ax)};
  });
  return out;
}

// --- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a, std::span<const long> axes, bool keepdim) {
  const long r = a.ndim();
  std::vector<long> ax;
  if (axes.empty()) {
    ax.resize(static_cast<size_t>(r));
    std::iota(ax.begin(), ax.end(), 0L);
  } else {
    for (long x : axes) ax.push_back(norm_axis(x, r));
    std::sort(ax.begin(), ax.end());
    ax.erase(std::unique(ax.begin(), ax.end()), ax.end());
  }
  std::vector<char> reduced(static_cast<size_t>(r), 0);
  for (long x : ax) reduced[static_cast<size_t>(x)] = 1;
  Shape kshape = a.shape();
  for (long x : ax) kshape[static_cast<size_t>(x)] = 1;
  Shape os;
  for (long i = 0; i < r; ++i) {
    if (!reduced[static_cast<size_t>(i)]) {
      os.push_back(a.dim(i));
    } else if (keepdim) {
      os.push_back(1);
    }
  }
  std::vector<double> dst(static_cast<size_t>(shape_numel(kshape)), 0.0);
  const double* src = a.raw();
  const long n = a.numel();
  const std::vector<long> ost = aligned_strides(kshape, a.shape());
  std::vector<long> idx(static_cast<size_t>(r), 0);
  long off = 0;
  for (long i = 0; i < n; ++i) {
    dst[static_cast<size_t>(off)] += src[i];
    for (long k = r - 1; k >= 0; --k) {
      ++idx[static_cast<size_t>(k)];
      off += ost[static_cast<size_t>(k)];
      if (idx[static_cast<size_t>(k)] < a.dim(k)) break;
      off -= ost[static_cast<size_t>(k)] * a.dim(k);
      idx[static_cast<size_t>(k)] = 0;
    }
  }
  Tensor out = Tensor::from_data(std::move(os), std::move(dst));
  rec(out, "sum", {&a}, [sa = a.shape(), kshape](const Tensor& g) {
    Tensor gg = (g.shape() == kshape) ? g : reshape(g, kshape);
    return std::vector<Tensor>{broadcast_to(gg, sa)};
  });
  return out;
}

Tensor sum_all(const Tensor& a) { return sum(a, {}, false); }

Tensor mean(const Tensor& a, std::span<const long> axes, bool keepdim) {
  Tensor s = sum(a, axes, keepdim);
  const long count = a.numel() / std::max(1L, s.numel());
  return mul_scalar(s, 1.0 / static_cast<double>(count));
}

Tensor mean_all(const Tensor& a) {
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

// --- gather / scatter ------------------------------------------------------

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.ndim() != 2) throw std::runtime_error("embedding: table must be rank 2");
  const long v = table.dim(0), d = table.dim(1);
  const long n = static_cast<long>(ids.size());
  std::vector<double> dst(static_cast<size_t>(n * d));
  const double* src = table.raw();
  for (long i = 0; i < n; ++i) {
    const int id = ids[static_cast<size_t>(i)];
    if (id < 0 || id >= v) {
      throw std::runtime_error("embedding: id " + std::to_string(id) + " out of range [0, " +
                               std::to_string(v) + ")");
    }
    std::copy_n(src + static_cast<long>(id) * d, d, dst.data() + i * d);
  }
  Tensor out = Tensor::from_data({n, d}, std::move(dst));
  rec(out, "embedding", {&table},
      [v, ids_v = std::vector<int>(ids.begin(), ids.end())](const Tensor& g) {
        return std::vector<Tensor>{scatter_add(v, ids_v, g)};
      });
  return out;
}

Tensor scatter_add(long num_rows, std::span<const int> ids, const Tensor& updates) {
  if (updates.ndim() != 2) throw std::runtime_error("scatter_add: updates must be rank 2");
  const long n = updates.dim(0), d = updates.dim(1);
  if (static_cast<long>(ids.size()) != n) {
    throw std::runtime_error("scatter_add: ids length " + std::to_string(ids.size()) +
                             " != update rows " + std::to_string(n));
  }
  std::vector<double> dst(static_cast<size_t>(num_rows * d), 0.0);
  const double* src = updates.raw();
  for (long i = 0; i < n; ++i) {
    const int id = ids[static_cast<size_t>(i)];
    if (id < 0 || id >= num_rows) {
      throw std::runtime_error("scatter_add: id " + std::to_string(id) + " out of range [0, " +
                               std::to_string(num_rows) + ")");
    }
    double* row = dst.data() + static_cast<long>(id) * d;
    const double* up = src + i * d;
    for (long j = 0; j < d; ++j) row[j] += up[j];
  }
  Tensor out = Tensor::from_data({num_rows, d}, std::move(dst));
  rec(out, "scatter_add", {&updates},
      [ids_v = std::vector<int>(ids.begin(), ids.end())](const Tensor& g) {
        return std::vector<Tensor>{embedding(g, ids_v)};
      });
  return out;
}

Tensor take_last(const Tensor& a, std::span<const int> ids) {
  if (a.ndim() < 1) throw std::runtime_error("take_last: rank must be >= 1");
  const long w = a.dim(-1);
  const long rows = a.numel() / w;
  if (static_cast<long>(ids.size()) != rows) {
    throw std::runtime_error("take_last: ids length " + std::to_string(ids.size()) +
                             " != rows " + std::to_string(rows));
  }
  Shape os(a.shape().begin(), a.shape().end() - 1);
  std::vector<double> dst(static_cast<size_t>(rows));
  const double* src = a.raw();
  for (long i = 0; i < rows; ++i) {
    const int id = ids[static_cast<size_t>(i)];
    if (id < 0 || id >= w) {
      throw std::runtime_error("take_last: id " + std::to_string(id) + " out of range [0, " +
                               std::to_string(w) + ")");
    }
    dst[static_cast<size_t>(i)] = src[i * w + id];
  }
  Tensor out = Tensor::from_data(std::move(os), std::move(dst));
  rec(out, "take_last", {&a},
      [w, sa = a.shape(), ids_v = std::vector<int>(ids.begin(), ids.end())](const Tensor& g) {
        return std::vector<Tensor>{put_last(g, ids_v, w, sa)};
      });
  return out;
}

Tensor put_last(const Tensor& values, std::span<const int> ids, long width,
                const Shape& out_shape) {
  const long rows = values.numel();
  if (static_cast<long>(ids.size()) != rows) {
    throw std::runtime_error("put_last: ids length != value count");
  }
  if (out_shape.empty() || out_shape.back() != width || shape_numel(out_shape) != rows * width) {
    throw std::runtime_error("put_last: output shape " + shape_str(out_shape) +
                             " inconsistent with " + std::to_string(rows) + " rows of width " +
                             std::to_string(width));
  }
  std::vector<double> dst(static_cast<size_t>(rows * width), 0.0);
  const double* src = values.raw();
  for (long i = 0; i < rows; ++i) {
    const int id = ids[static_cast<size_t>(i)];
    if (id < 0 || id >= width) {
      throw std::runtime_error("put_last: id " + std::to_string(id) + " out of range [0, " +
                               std::to_string(width) + ")");
    }
    dst[static_cast<size_t>(i * width + id)] = src[i];
  }
  Tensor out = Tensor::from_data(out_shape, std::move(dst));
  rec(out, "put_last", {&values},
      [sv = values.shape(), ids_v = std::vector<int>(ids.begin(), ids.end())](const Tensor& g) {
        return std::vector<Tensor>{reshape(take_last(g, ids_v), sv)};
      });
  return out;
}

Tensor max_last_detached(const Tensor& a) {
  if (a.ndim() < 1) throw std::runtime_error("max_last_detached: rank must be >= 1");
  const long w = a.dim(-1);
  if (w < 1) throw std::runtime_error("max_last_detached: empty last axis");
  const long rows = a.numel() / w;
  Shape os = a.shape();
  os.back() = 1;
  std::vector<double> dst(static_cast<size_t>(rows));
  const double* src = a.raw();
  for (long i = 0; i < rows; ++i) {
    dst[static_cast<size_t>(i)] = *std::max_element(src + i * w, src + (i + 1) * w);
  }
  return Tensor::from_data(std::move(os), std::move(dst));
}

// --- composites -------------------------------------------------------------

Tensor gelu(const Tensor& a) {
  // 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
  constexpr double kRoot2OverPi = 0.7978845608028654;
  Tensor x3 = mul(mul(a, a), a);
  Tensor inner = mul_scalar(add(a, mul_scalar(x3, 0.044715)), kRoot2OverPi);
  return mul(mul_scalar(a, 0.5), add_scalar(tanh(inner), 1.0));
}

Tensor softmax_last(const Tensor& a) {
  if (!a.all_finite()) throw std::runtime_error("softmax_last: non-finite input");
  Tensor shifted = sub(a, max_last_detached(a));
  Tensor e = exp(shifted);
  const long last = a.ndim() - 1;
  Tensor denom = sum(e, std::array<long, 1>{last}, true);
  return mul(e, recip(denom));
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  const long last = a.ndim() - 1;
  const std::array<long, 1> ax{last};
  Tensor mu = mean(a, ax, true);
  Tensor xc = sub(a, mu);
  Tensor var = mean(mul(xc, xc), ax, true);
  // rsqrt via exp/log keeps the whole expression on the tape.
  Tensor inv = exp(mul_scalar(log(add_scalar(var, eps)), -0.5));
  return add(mul(mul(xc, inv), gain), bias);
}

Tensor cross_entropy_from_logits(const Tensor& logits, std::span<const int> targets,
                                 std::span<const double> row_weights) {
  if (logits.ndim() != 2) {
    throw std::runtime_error("cross_entropy_from_logits: logits must be [rows, vocab]");
  }
  if (!logits.all_finite()) throw std::runtime_error("cross_entropy_from_logits: non-finite input");
  const long rows = logits.dim(0);
  if (static_cast<long>(targets.size()) != rows) {
    throw std::runtime_error("cross_entropy_from_logits: " + std::to_string(targets.size()) +
                             " targets for " + std::to_string(rows) + " rows");
  }
  Tensor m = max_last_detached(logits);
  Tensor se = sum(exp(sub(logits, m)), std::array<long, 1>{1L}, true);
  Tensor lse = reshape(add(log(se), m), {rows});
  Tensor nll = sub(lse, take_last(logits, targets));
  if (row_weights.empty()) {
    return mul_scalar(sum_all(nll), 1.0 / static_cast<double>(rows));
  }
  if (static_cast<long>(row_weights.size()) != rows) {
    throw std::runtime_error("cross_entropy_from_logits: weight count != rows");
  }
  double total = 0.0;
  for (double w : row_weights) total += w;
  if (total <= 0.0) {
    throw std::runtime_error("cross_entropy_from_logits: total row weight must be positive");
  }
  Tensor w = Tensor::from_data({rows}, std::vector<double>(row_weights.begin(), row_weights.end()));
  return mul_scalar(sum_all(mul(nll, w)), 1.0 / total);
}

}  // namespace reckon::ad
