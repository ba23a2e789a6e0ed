#include "ovavss/numcore/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

extern "C" void openblas_set_num_threads(int);

namespace ovavss::num {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

bool grad_live(Tensor& t) { return t.has_grad(); }

void dgemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
           const double* a, int lda, const double* b, int ldb, double beta,
           double* c, int ldc) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (beta == 0.0) std::fill(c, c + static_cast<std::size_t>(m) * ldc, 0.0);
    return;
  }
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

// rows = product of all dims but the last
std::size_t row_count(const Tensor& t) {
  require(t.rank() >= 1, "expected rank >= 1 tensor");
  const int last = t.dim(t.rank() - 1);
  return last == 0 ? 0 : t.numel() / static_cast<std::size_t>(last);
}

struct AxisLanes {
  std::size_t outer, d, inner;
};

AxisLanes lanes_for_axis(const Tensor& t, int axis) {
  const int r = t.rank();
  if (axis < 0) axis += r;
  require(axis >= 0 && axis < r, "axis out of range");
  AxisLanes l{1, static_cast<std::size_t>(t.dim(axis)), 1};
  for (int i = 0; i < axis; ++i) l.outer *= static_cast<std::size_t>(t.dim(i));
  for (int i = axis + 1; i < r; ++i) l.inner *= static_cast<std::size_t>(t.dim(i));
  return l;
}

}  // namespace

void init_backend() { openblas_set_num_threads(1); }

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = out.numel();
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  check_finite(out, "add");
  if (taping({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record({a, b}, out, [ac, bc, oc]() mutable {
      if (!grad_live(oc)) return;
      const double* g = oc.grad();
      const std::size_t n2 = oc.numel();
      if (ac.requires_grad()) {
        double* ga = ac.grad();
        for (std::size_t i = 0; i < n2; ++i) ga[i] += g[i];
      }
      if (bc.requires_grad()) {
        double* gb = bc.grad();
        for (std::size_t i = 0; i < n2; ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  check_finite(out, "sub");
  if (taping({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record({a, b}, out, [ac, bc, oc]() mutable {
      if (!grad_live(oc)) return;
      const double* g = oc.grad();
      const std::size_t n2 = oc.numel();
      if (ac.requires_grad()) {
        double* ga = ac.grad();
        for (std::size_t i = 0; i < n2; ++i) ga[i] += g[i];
      }
      if (bc.requires_grad()) {
        double* gb = bc.grad();
        for (std::size_t i = 0; i < n2; ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  check_finite(out, "mul");
  if (taping({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record({a, b}, out, [ac, bc, oc]() mutable {
      if (!grad_live(oc)) return;
      const double* g = oc.grad();
      const std::size_t n2 = oc.numel();
      if (ac.requires_grad()) {
        double* ga = ac.grad();
        const double* pb = bc.data();
        for (std::size_t i = 0; i < n2; ++i) ga[i] += g[i] * pb[i];
      }
      if (bc.requires_grad()) {
        double* gb = bc.grad();
        const double* pa = ac.data();
        for (std::size_t i = 0; i < n2; ++i) gb[i] += g[i] * pa[i];
      }
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double s) {
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + s;
  check_finite(out, "add_scalar");
  if (taping({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record({a}, out, [ac, oc]() mutable {
      if (!grad_live(oc) || !ac.requires_grad()) return;
      const double* g = oc.grad();
      double* ga = ac.grad();
      for (std::size_t i = 0; i < oc.numel(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor mul_scalar(const Tensor& a, double s) {
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * s;
  check_finite(out, "mul_scalar");
  if (taping({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record({a}, out, [ac, oc, s]() mutable {
      if (!grad_live(oc) || !ac.requires_grad()) return;
      const double* g = oc.grad();
      double* ga = ac.grad();
      for (std::size_t i = 0; i < oc.numel(); ++i) ga[i] += g[i] * s;
    });
  }
  return out;
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  require(bias.rank() == 1, "add_rowwise: bias must be rank 1");
  const int c = bias.dim(0);
  require(x.rank() >= 1 && x.dim(x.rank() - 1) == c,
          "add_rowwise: trailing dim " + shape_str(x.shape()) + " vs bias " +
              shape_str(bias.shape()));
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t rows = row_count(x);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* px = x.data() + r * c;
    double* po = out.data() + r * c;
    for (int j = 0; j < c; ++j) po[j] = px[j] + bias.data()[j];
  }
  check_finite(out, "add_rowwise");
  if (taping({&x, &bias})) {
    out.set_requires_grad(true);
    Tensor xc = x, bc = bias, oc = out;
    Tape::active()->record({x, bias}, out, [xc, bc, oc, rows, c]() mutable {
      if (!grad_live(oc)) return;
      const double* g = oc.grad();
      if (xc.requires_grad()) {
        double* gx = xc.grad();
        for (std::size_t i = 0; i < oc.numel(); ++i) gx[i] += g[i];
      }
      if (bc.requires_grad()) {
        double* gb = bc.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (int j = 0; j < c; ++j) gb[j] += g[r * c + j];
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = std::max(0.0, x.data()[i]);
  check_finite(out, "relu");
  if (taping({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record({x}, out, [xc, oc]() mutable {
      if (!grad_live(oc) || !xc.requires_grad()) return;
      const double* g = oc.grad();
      const double* px = xc.data();
      double* gx = xc.grad();
      for (std::size_t i = 0; i < oc.numel(); ++i)
        if (px[i] > 0.0) gx[i] += g[i];
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t n = out.numel();
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  check_finite(out, "gelu");
  if (taping({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record({x}, out, [xc, oc]() mutable {
      if (!grad_live(oc) || !xc.requires_grad()) return;
      constexpr double is2 = 0.7071067811865475244;
      constexpr double inv_sqrt2pi = 0.3989422804014326779;
      const double* g = oc.grad();
      const double* px = xc.data();
      double* gx = xc.grad();
      for (std::size_t i = 0; i < oc.numel(); ++i) {
        const double v = px[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * is2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        gx[i] += g[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

namespace {
double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = stable_sigmoid(x.data()[i]);
  check_finite(out, "sigmoid");
  if (taping({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record({x}, out, [xc, oc]() mutable {
      if (!grad_live(oc) || !xc.requires_grad()) return;
      const double* g = oc.grad();
      const double* py = oc.data();
      double* gx = xc.grad();
      for (std::size_t i = 0; i < oc.numel(); ++i)
        gx[i] += g[i] * py[i] * (1.0 - py[i]);
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2,
          "matmul: expected rank-2 tensors, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  if (a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: inner dimensions differ, " +
                                shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  dgemm(false, false, m, n, k, 1.0, a.data(), k, b.data(), n, 0.0, out.data(), n);
  check_finite(out, "matmul");
  if (taping({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record({a, b}, out, [ac, bc, oc, m, n, k]() mutable {
      if (!grad_live(oc)) return;
      const double* g = oc.grad();
      if (ac.requires_grad())
        dgemm(false, true, m, k, n, 1.0, g, n, bc.data(), n, 1.0, ac.grad(), k);
      if (bc.requires_grad())
        dgemm(true, false, k, n, m, 1.0, ac.data(), k, g, n, 1.0, bc.grad(), n);
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose: expected rank-2 tensor");
  const int m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data()[j * m + i] = a.data()[i * n + j];
  if (taping({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record({a}, out, [ac, oc, m, n]() mutable {
      if (!grad_live(oc) || !ac.requires_grad()) return;
      const double* g = oc.grad();
      double* ga = ac.grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

Tensor reshape(const Tensor& t, std::vector<int> shape) {
  require(shape_numel(shape) == t.numel(),
          "reshape: cannot view " + shape_str(t.shape()) + " as " + shape_str(shape));
  Tensor out = Tensor::from_data(std::move(shape), t.vec());
  if (taping({&t})) {
    out.set_requires_grad(true);
    Tensor tc = t, oc = out;
    Tape::active()->record({t}, out, [tc, oc]() mutable {
      if (!grad_live(oc) || !tc.requires_grad()) return;
      const double* g = oc.grad();
      double* gt = tc.grad();
      for (std::size_t i = 0; i < oc.numel(); ++i) gt[i] += g[i];
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no parts");
  std::vector<int> tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  int rows = 0;
  for (const Tensor& p : parts) {
    std::vector<int> pt(p.shape().begin() + 1, p.shape().end());
    require(pt == tail, "concat_rows: trailing dims differ");
    rows += p.dim(0);
  }
  std::vector<int> out_shape = {rows};
  out_shape.insert(out_shape.end(), tail.begin(), tail.end());
  Tensor out = Tensor::zeros(out_shape);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    std::copy(p.vec().begin(), p.vec().end(), out.data() + offset);
    offset += p.numel();
  }
  bool any_rq = false;
  for (const Tensor& p : parts) any_rq = any_rq || p.requires_grad();
  if (Tape::active() && any_rq) {
    out.set_requires_grad(true);
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    Tape::active()->record(parts, out, [pc, oc]() mutable {
      if (!grad_live(oc)) return;
      const double* g = oc.grad();
      std::size_t off = 0;
      for (Tensor& p : pc) {
        if (p.requires_grad()) {
          double* gp = p.grad();
          for (std::size_t i = 0; i < p.numel(); ++i) gp[i] += g[off + i];
        }
        off += p.numel();
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& t, int begin, int count) {
  require(t.rank() >= 1, "slice_rows: rank >= 1 required");
  require(begin >= 0 && count >= 0 && begin + count <= t.dim(0),
          "slice_rows: range [" + std::to_string(begin) + "," +
              std::to_string(begin + count) + ") out of " + std::to_string(t.dim(0)));
  std::vector<int> out_shape = t.shape();
  out_shape[0] = count;
  const std::size_t row = t.dim(0) ? t.numel() / static_cast<std::size_t>(t.dim(0)) : 0;
  Tensor out = Tensor::zeros(out_shape);
  std::copy(t.data() + begin * row, t.data() + (begin + count) * row, out.data());
  if (taping({&t})) {
    out.set_requires_grad(true);
    Tensor tc = t, oc = out;
    Tape::active()->record({t}, out, [tc, oc, begin, row]() mutable {
      if (!grad_live(oc) || !tc.requires_grad()) return;
      const double* g = oc.grad();
      double* gt = tc.grad() + begin * row;
      for (std::size_t i = 0; i < oc.numel(); ++i) gt[i] += g[i];
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  const int rows = parts[0].dim(0);
  int cols = 0;
  for (const Tensor& p : parts) {
    require(p.rank() == 2 && p.dim(0) == rows, "concat_cols: row counts differ");
    cols += p.dim(1);
  }
  Tensor out = Tensor::zeros({rows, cols});
  int col_off = 0;
  for (const Tensor& p : parts) {
    const int pc = p.dim(1);
    for (int r = 0; r < rows; ++r)
      std::copy(p.data() + r * pc, p.data() + (r + 1) * pc,
                out.data() + r * cols + col_off);
    col_off += pc;
  }
  bool any_rq = false;
  for (const Tensor& p : parts) any_rq = any_rq || p.requires_grad();
  if (Tape::active() && any_rq) {
    out.set_requires_grad(true);
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    Tape::active()->record(parts, out, [pc, oc, rows, cols]() mutable {
      if (!grad_live(oc)) return;
      const double* g = oc.grad();
      int off = 0;
      for (Tensor& p : pc) {
        const int w = p.dim(1);
        if (p.requires_grad()) {
          double* gp = p.grad();
          for (int r = 0; r < rows; ++r)
            for (int j = 0; j < w; ++j) gp[r * w + j] += g[r * cols + off + j];
        }
        off += w;
      }
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& t, int begin, int count) {
  require(t.rank() == 2, "slice_cols: rank-2 required");
  const int rows = t.dim(0), cols = t.dim(1);
  require(begin >= 0 && count >= 0 && begin + count <= cols, "slice_cols: out of range");
  Tensor out = Tensor::zeros({rows, count});
  for (int r = 0; r < rows; ++r)
    std::copy(t.data() + r * cols + begin, t.data() + r * cols + begin + count,
              out.data() + r * count);
  if (taping({&t})) {
    out.set_requires_grad(true);
    Tensor tc = t, oc = out;
    Tape::active()->record({t}, out, [tc, oc, rows, cols, begin, count]() mutable {
      if (!grad_live(oc) || !tc.requires_grad()) return;
      const double* g = oc.grad();
      double* gt = tc.grad();
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < count; ++j)
          gt[r * cols + begin + j] += g[r * count + j];
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  const AxisLanes l = lanes_for_axis(x, axis);
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.d * l.inner + in;
      double mx = -1e308;
      for (std::size_t j = 0; j < l.d; ++j)
        mx = std::max(mx, x.data()[base + j * l.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < l.d; ++j) {
        const double e = std::exp(x.data()[base + j * l.inner] - mx);
        out.data()[base + j * l.inner] = e;
        z += e;
      }
      const double inv = 1.0 / z;
      for (std::size_t j = 0; j < l.d; ++j) out.data()[base + j * l.inner] *= inv;
    }
  }
  check_finite(out, "softmax");
  if (taping({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record({x}, out, [xc, oc, l]() mutable {
      if (!grad_live(oc) || !xc.requires_grad()) return;
      const double* g = oc.grad();
      const double* y = oc.data();
      double* gx = xc.grad();
      for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t in = 0; in < l.inner; ++in) {
          const std::size_t base = o * l.d * l.inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < l.d; ++j) {
            const std::size_t idx = base + j * l.inner;
            dot += g[idx] * y[idx];
          }
          for (std::size_t j = 0; j < l.d; ++j) {
            const std::size_t idx = base + j * l.inner;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& x, int axis) {
  const AxisLanes l = lanes_for_axis(x, axis);
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.d * l.inner + in;
      double mx = -1e308;
      for (std::size_t j = 0; j < l.d; ++j)
        mx = std::max(mx, x.data()[base + j * l.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < l.d; ++j)
        z += std::exp(x.data()[base + j * l.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t j = 0; j < l.d; ++j)
        out.data()[base + j * l.inner] = x.data()[base + j * l.inner] - lse;
    }
  }
  check_finite(out, "log_softmax");
  if (taping({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record({x}, out, [xc, oc, l]() mutable {
      if (!grad_live(oc) || !xc.requires_grad()) return;
      const double* g = oc.grad();
      const double* y = oc.data();
      double* gx = xc.grad();
      for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t in = 0; in < l.inner; ++in) {
          const std::size_t base = o * l.d * l.inner + in;
          double gsum = 0.0;
          for (std::size_t j = 0; j < l.d; ++j) gsum += g[base + j * l.inner];
          for (std::size_t j = 0; j < l.d; ++j) {
            const std::size_t idx = base + j * l.inner;
            gx[idx] += g[idx] - std::exp(y[idx]) * gsum;
          }
        }
      }
    });
  }
  return out;
}

namespace {

// Shared normalization backward: x_hat = (x - mu) / s over a lane of n
// strided elements; gamma indexed per element by channel.
struct NormLane {
  std::size_t n;
  double inv_s;
};

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require(gamma.rank() == 1 && beta.rank() == 1, "layer_norm: gamma/beta rank 1");
  const int c = gamma.dim(0);
  require(beta.dim(0) == c, "layer_norm: gamma/beta size mismatch");
  require(x.rank() >= 1 && x.dim(x.rank() - 1) == c,
          "layer_norm: last dim must equal " + std::to_string(c));
  const std::size_t rows = row_count(x);
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> inv_s(rows), mu(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* px = x.data() + r * c;
    double m = 0.0;
    for (int j = 0; j < c; ++j) m += px[j];
    m /= c;
    double v = 0.0;
    for (int j = 0; j < c; ++j) v += (px[j] - m) * (px[j] - m);
    v /= c;
    const double is = 1.0 / std::sqrt(v + eps);
    mu[r] = m;
    inv_s[r] = is;
    double* po = out.data() + r * c;
    for (int j = 0; j < c; ++j)
      po[j] = (px[j] - m) * is * gamma.data()[j] + beta.data()[j];
  }
  check_finite(out, "layer_norm");
  if (taping({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    Tensor xc = x, gc = gamma, bc = beta, oc = out;
    Tape::active()->record(
        {x, gamma, beta}, out, [xc, gc, bc, oc, rows, c, mu, inv_s]() mutable {
          if (!grad_live(oc)) return;
          const double* g = oc.grad();
          for (std::size_t r = 0; r < rows; ++r) {
            const double* px = xc.data() + r * c;
            const double* gr = g + r * c;
            const double is = inv_s[r];
            const double m = mu[r];
            if (gc.requires_grad() || bc.requires_grad()) {
              double* gg = gc.requires_grad() ? gc.grad() : nullptr;
              double* gb = bc.requires_grad() ? bc.grad() : nullptr;
              for (int j = 0; j < c; ++j) {
                const double xh = (px[j] - m) * is;
                if (gg) gg[j] += gr[j] * xh;
                if (gb) gb[j] += gr[j];
              }
            }
            if (xc.requires_grad()) {
              double* gx = xc.grad() + r * c;
              double sum_d = 0.0, sum_dx = 0.0;
              for (int j = 0; j < c; ++j) {
                const double d = gr[j] * gc.data()[j];
                const double xh = (px[j] - m) * is;
                sum_d += d;
                sum_dx += d * xh;
              }
              const double invn = 1.0 / c;
              for (int j = 0; j < c; ++j) {
                const double d = gr[j] * gc.data()[j];
                const double xh = (px[j] - m) * is;
                gx[j] += is * (d - invn * sum_d - xh * invn * sum_dx);
              }
            }
          }
        });
  }
  return out;
}

namespace {

struct GnView {
  int b, c, hw;  // batch, channels, spatial cells
};

GnView gn_view(const Tensor& x) {
  if (x.rank() == 1) return {1, x.dim(0), 1};
  require(x.rank() == 4, "group_norm: expected [B,C,H,W] or [C]");
  return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
}

}  // namespace

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma,
                  const Tensor& beta, double eps) {
  const GnView v = gn_view(x);
  require(groups >= 1 && v.c % groups == 0,
          "group_norm: channels " + std::to_string(v.c) + " not divisible by groups " +
              std::to_string(groups));
  require(gamma.rank() == 1 && gamma.dim(0) == v.c && beta.dim(0) == v.c,
          "group_norm: gamma/beta must have size C");
  const int cpg = v.c / groups;
  const std::size_t gsz = static_cast<std::size_t>(cpg) * v.hw;
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> mu(static_cast<std::size_t>(v.b) * groups),
      inv_s(static_cast<std::size_t>(v.b) * groups);
  for (int b = 0; b < v.b; ++b) {
    for (int gi = 0; gi < groups; ++gi) {
      const std::size_t base =
          (static_cast<std::size_t>(b) * v.c + static_cast<std::size_t>(gi) * cpg) * v.hw;
      double m = 0.0;
      for (std::size_t i = 0; i < gsz; ++i) m += x.data()[base + i];
      m /= static_cast<double>(gsz);
      double var = 0.0;
      for (std::size_t i = 0; i < gsz; ++i) {
        const double d = x.data()[base + i] - m;
        var += d * d;
      }
      var /= static_cast<double>(gsz);
      const double is = 1.0 / std::sqrt(var + eps);
      mu[b * groups + gi] = m;
      inv_s[b * groups + gi] = is;
      for (int cc = 0; cc < cpg; ++cc) {
        const int ch = gi * cpg + cc;
        const double ga = gamma.data()[ch];
        const double be = beta.data()[ch];
        const std::size_t cbase = base + static_cast<std::size_t>(cc) * v.hw;
        for (int i = 0; i < v.hw; ++i)
          out.data()[cbase + i] = (x.data()[cbase + i] - m) * is * ga + be;
      }
    }
  }
  check_finite(out, "group_norm");
  if (taping({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    Tensor xc = x, gc = gamma, bc = beta, oc = out;
    const int cpg2 = cpg;
    Tape::active()->record(
        {x, gamma, beta}, out,
        [xc, gc, bc, oc, v, groups, cpg2, gsz, mu, inv_s]() mutable {
          if (!grad_live(oc)) return;
          const double* g = oc.grad();
          for (int b = 0; b < v.b; ++b) {
            for (int gi = 0; gi < groups; ++gi) {
              const std::size_t base =
                  (static_cast<std::size_t>(b) * v.c +
                   static_cast<std::size_t>(gi) * cpg2) *
                  v.hw;
              const double m = mu[b * groups + gi];
              const double is = inv_s[b * groups + gi];
              if (gc.requires_grad() || bc.requires_grad()) {
                double* gg = gc.requires_grad() ? gc.grad() : nullptr;
                double* gb = bc.requires_grad() ? bc.grad() : nullptr;
                for (int cc = 0; cc < cpg2; ++cc) {
                  const int ch = gi * cpg2 + cc;
                  const std::size_t cbase = base + static_cast<std::size_t>(cc) * v.hw;
                  for (int i = 0; i < v.hw; ++i) {
                    const double xh = (xc.data()[cbase + i] - m) * is;
                    if (gg) gg[ch] += g[cbase + i] * xh;
                    if (gb) gb[ch] += g[cbase + i];
                  }
                }
              }
              if (xc.requires_grad()) {
                double sum_d = 0.0, sum_dx = 0.0;
                for (int cc = 0; cc < cpg2; ++cc) {
                  const int ch = gi * cpg2 + cc;
                  const double ga = gc.data()[ch];
                  const std::size_t cbase = base + static_cast<std::size_t>(cc) * v.hw;
                  for (int i = 0; i < v.hw; ++i) {
                    const double d = g[cbase + i] * ga;
                    const double xh = (xc.data()[cbase + i] - m) * is;
                    sum_d += d;
                    sum_dx += d * xh;
                  }
                }
                const double invn = 1.0 / static_cast<double>(gsz);
                double* gx = xc.grad();
                for (int cc = 0; cc < cpg2; ++cc) {
                  const int ch = gi * cpg2 + cc;
                  const double ga = gc.data()[ch];
                  const std::size_t cbase = base + static_cast<std::size_t>(cc) * v.hw;
                  for (int i = 0; i < v.hw; ++i) {
                    const double d = g[cbase + i] * ga;
                    const double xh = (xc.data()[cbase + i] - m) * is;
                    gx[cbase + i] += is * (d - invn * sum_d - xh * invn * sum_dx);
                  }
                }
              }
            }
          }
        });
  }
  return out;
}

namespace {

// im2col for one image: x [Cin,H,W] -> col [Cin*k*k, Ho*Wo]
void im2col(const double* x, int cin, int h, int w, int k, int stride, int pad,
            int ho, int wo, double* col) {
  for (int c = 0; c < cin; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* dst = col + ((static_cast<std::size_t>(c) * k + ki) * k + kj) *
                                (static_cast<std::size_t>(ho) * wo);
        for (int y = 0; y < ho; ++y) {
          const int sy = y * stride + ki - pad;
          if (sy < 0 || sy >= h) {
            std::fill(dst + static_cast<std::size_t>(y) * wo,
                      dst + static_cast<std::size_t>(y + 1) * wo, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * h + sy) * w;
          for (int xo = 0; xo < wo; ++xo) {
            const int sx = xo * stride + kj - pad;
            dst[static_cast<std::size_t>(y) * wo + xo] =
                (sx >= 0 && sx < w) ? src[sx] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int cin, int h, int w, int k, int stride,
                int pad, int ho, int wo, double* gx) {
  for (int c = 0; c < cin; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* src = col + ((static_cast<std::size_t>(c) * k + ki) * k + kj) *
                                      (static_cast<std::size_t>(ho) * wo);
        for (int y = 0; y < ho; ++y) {
          const int sy = y * stride + ki - pad;
          if (sy < 0 || sy >= h) continue;
          double* dst = gx + (static_cast<std::size_t>(c) * h + sy) * w;
          for (int xo = 0; xo < wo; ++xo) {
            const int sx = xo * stride + kj - pad;
            if (sx >= 0 && sx < w) dst[sx] += src[static_cast<std::size_t>(y) * wo + xo];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int padding) {
  require(x.rank() == 4, "conv2d: input must be [B,Cin,H,W], got " + shape_str(x.shape()));
  require(w.rank() == 4 && w.dim(2) == w.dim(3), "conv2d: weight must be [Cout,Cin,k,k]");
  require(w.dim(1) == x.dim(1),
          "conv2d: channel mismatch, input " + shape_str(x.shape()) + " weight " +
              shape_str(w.shape()));
  require(b.rank() == 1 && b.dim(0) == w.dim(0), "conv2d: bias must be [Cout]");
  require(stride >= 1, "conv2d: stride must be >= 1");
  const int bs = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), k = w.dim(2);
  const int ho = (h + 2 * padding - k) / stride + 1;
  const int wo = (wd + 2 * padding - k) / stride + 1;
  require(ho >= 1 && wo >= 1, "conv2d: output would be empty");
  Tensor out = Tensor::zeros({bs, cout, ho, wo});
  const std::size_t col_rows = static_cast<std::size_t>(cin) * k * k;
  const std::size_t col_cols = static_cast<std::size_t>(ho) * wo;
  std::vector<double> col(col_rows * col_cols);
  const std::size_t in_img = static_cast<std::size_t>(cin) * h * wd;
  const std::size_t out_img = static_cast<std::size_t>(cout) * ho * wo;
  for (int bi = 0; bi < bs; ++bi) {
    im2col(x.data() + bi * in_img, cin, h, wd, k, stride, padding, ho, wo, col.data());
    double* po = out.data() + bi * out_img;
    dgemm(false, false, cout, static_cast<int>(col_cols), static_cast<int>(col_rows),
          1.0, w.data(), static_cast<int>(col_rows), col.data(),
          static_cast<int>(col_cols), 0.0, po, static_cast<int>(col_cols));
    for (int c = 0; c < cout; ++c) {
      const double bv = b.data()[c];
      double* row = po + static_cast<std::size_t>(c) * col_cols;
      for (std::size_t i = 0; i < col_cols; ++i) row[i] += bv;
    }
  }
  check_finite(out, "conv2d");
  if (taping({&x, &w, &b})) {
    out.set_requires_grad(true);
    Tensor xc = x, wc = w, bc = b, oc = out;
    Tape::active()->record(
        {x, w, b}, out,
        [xc, wc, bc, oc, bs, cin, h, wd, cout, k, stride, padding, ho, wo,
         col_rows, col_cols, in_img, out_img]() mutable {
          if (!grad_live(oc)) return;
          const double* g = oc.grad();
          std::vector<double> col(col_rows * col_cols);
          std::vector<double> dcol;
          if (xc.requires_grad()) dcol.resize(col_rows * col_cols);
          for (int bi = 0; bi < bs; ++bi) {
            const double* gb = g + bi * out_img;
            if (wc.requires_grad() || xc.requires_grad()) {
              im2col(xc.data() + bi * in_img, cin, h, wd, k, stride, padding, ho,
                     wo, col.data());
            }
            if (wc.requires_grad()) {
              dgemm(false, true, cout, static_cast<int>(col_rows),
                    static_cast<int>(col_cols), 1.0, gb, static_cast<int>(col_cols),
                    col.data(), static_cast<int>(col_cols), 1.0, wc.grad(),
                    static_cast<int>(col_rows));
            }
            if (bc.requires_grad()) {
              double* gbias = bc.grad();
              for (int c = 0; c < cout; ++c) {
                double s = 0.0;
                const double* row = gb + static_cast<std::size_t>(c) * col_cols;
                for (std::size_t i = 0; i < col_cols; ++i) s += row[i];
                gbias[c] += s;
              }
            }
            if (xc.requires_grad()) {
              dgemm(true, false, static_cast<int>(col_rows),
                    static_cast<int>(col_cols), cout, 1.0, wc.data(),
                    static_cast<int>(col_rows), gb, static_cast<int>(col_cols), 0.0,
                    dcol.data(), static_cast<int>(col_cols));
              col2im_add(dcol.data(), cin, h, wd, k, stride, padding, ho, wo,
                         xc.grad() + bi * in_img);
            }
          }
        });
  }
  return out;
}

Tensor bilinear_upsample(const Tensor& x, int scale) {
  require(x.rank() == 4, "bilinear_upsample: input must be [B,C,H,W]");
  require(scale >= 1, "bilinear_upsample: scale must be >= 1");
  const int bs = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h * scale, ow = w * scale;
  Tensor out = Tensor::zeros({bs, c, oh, ow});
  // Precompute 1-D interpolation taps (shared by rows/cols).
  struct Tap {
    int i0, i1;
    double w0, w1;
  };
  auto make_taps = [](int osz, int isz, int s) {
    std::vector<Tap> taps(osz);
    for (int o = 0; o < osz; ++o) {
      double src = (o + 0.5) / s - 0.5;
      src = std::max(0.0, std::min(src, static_cast<double>(isz - 1)));
      const int i0 = static_cast<int>(src);
      const int i1 = std::min(i0 + 1, isz - 1);
      const double f = src - i0;
      taps[o] = {i0, i1, 1.0 - f, f};
    }
    return taps;
  };
  const auto ty = make_taps(oh, h, scale);
  const auto tx = make_taps(ow, w, scale);
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  for (int bc = 0; bc < bs * c; ++bc) {
    const double* src = x.data() + bc * in_plane;
    double* dst = out.data() + bc * out_plane;
    for (int y = 0; y < oh; ++y) {
      const Tap& a = ty[y];
      for (int xo = 0; xo < ow; ++xo) {
        const Tap& bt = tx[xo];
        dst[static_cast<std::size_t>(y) * ow + xo] =
            a.w0 * (bt.w0 * src[a.i0 * w + bt.i0] + bt.w1 * src[a.i0 * w + bt.i1]) +
            a.w1 * (bt.w0 * src[a.i1 * w + bt.i0] + bt.w1 * src[a.i1 * w + bt.i1]);
      }
    }
  }
  check_finite(out, "bilinear_upsample");
  if (taping({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record({x}, out,
                           [xc, oc, bs, c, h, w, oh, ow, ty, tx, in_plane,
                            out_plane]() mutable {
                             if (!grad_live(oc) || !xc.requires_grad()) return;
                             const double* g = oc.grad();
                             double* gx = xc.grad();
                             for (int bc = 0; bc < bs * c; ++bc) {
                               const double* gsrc = g + bc * out_plane;
                               double* gdst = gx + bc * in_plane;
                               for (int y = 0; y < oh; ++y) {
                                 const auto& a = ty[y];
                                 for (int xo = 0; xo < ow; ++xo) {
                                   const auto& bt = tx[xo];
                                   const double gv =
                                       gsrc[static_cast<std::size_t>(y) * ow + xo];
                                   gdst[a.i0 * w + bt.i0] += a.w0 * bt.w0 * gv;
                                   gdst[a.i0 * w + bt.i1] += a.w0 * bt.w1 * gv;
                                   gdst[a.i1 * w + bt.i0] += a.w1 * bt.w0 * gv;
                                   gdst[a.i1 * w + bt.i1] += a.w1 * bt.w1 * gv;
                                 }
                               }
                             }
                           });
  }
  return out;
}

Tensor sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.vec()) s += v;
  Tensor out = Tensor::scalar(s);
  check_finite(out, "sum");
  if (taping({&t})) {
    out.set_requires_grad(true);
    Tensor tc = t, oc = out;
    Tape::active()->record({t}, out, [tc, oc]() mutable {
      if (!grad_live(oc) || !tc.requires_grad()) return;
      const double g = oc.grad()[0];
      double* gt = tc.grad();
      for (std::size_t i = 0; i < tc.numel(); ++i) gt[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& t) {
  require(t.numel() > 0, "mean: empty tensor");
  double s = 0.0;
  for (double v : t.vec()) s += v;
  const double inv = 1.0 / static_cast<double>(t.numel());
  Tensor out = Tensor::scalar(s * inv);
  check_finite(out, "mean");
  if (taping({&t})) {
    out.set_requires_grad(true);
    Tensor tc = t, oc = out;
    Tape::active()->record({t}, out, [tc, oc, inv]() mutable {
      if (!grad_live(oc) || !tc.requires_grad()) return;
      const double g = oc.grad()[0] * inv;
      double* gt = tc.grad();
      for (std::size_t i = 0; i < tc.numel(); ++i) gt[i] += g;
    });
  }
  return out;
}

Tensor spatial_mean(const Tensor& x) {
  require(x.rank() == 4, "spatial_mean: input must be [B,C,H,W]");
  const int bs = x.dim(0), c = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  require(hw > 0, "spatial_mean: empty spatial extent");
  Tensor out = Tensor::zeros({bs, c});
  const double inv = 1.0 / static_cast<double>(hw);
  for (int i = 0; i < bs * c; ++i) {
    const double* src = x.data() + i * hw;
    double s = 0.0;
    for (std::size_t j = 0; j < hw; ++j) s += src[j];
    out.data()[i] = s * inv;
  }
  check_finite(out, "spatial_mean");
  if (taping({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::active()->record({x}, out, [xc, oc, bs, c, hw, inv]() mutable {
      if (!grad_live(oc) || !xc.requires_grad()) return;
      const double* g = oc.grad();
      double* gx = xc.grad();
      for (int i = 0; i < bs * c; ++i) {
        const double gv = g[i] * inv;
        double* dst = gx + i * hw;
        for (std::size_t j = 0; j < hw; ++j) dst[j] += gv;
      }
    });
  }
  return out;
}

}  // namespace ovavss::num
