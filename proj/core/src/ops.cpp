#include "adr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace adr {
namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// The single tape shared by all tracked inputs, or nullptr if everything is
/// constant. Mixing tapes is a usage bug.
Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->on_tape()) continue;
    if (tape && tape != t->tape()) {
      throw ShapeError("op: inputs live on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

Tensor emit(Tape* tape, Shape shape, std::vector<double> data,
            Tape::BackwardFn backward) {
  if (!tape) return Tensor(std::move(shape), std::move(data));
  return tape->track(std::move(shape), std::move(data), std::move(backward));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.shape()) +
                     " does not match shape " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + " tensor, got shape " +
                     shape_str(t.shape()));
  }
}

using Bwd = Tape::BackwardFn;

/// Elementwise binary op with per-element partials fa, fb.
template <typename F, typename Fa, typename Fb>
Tensor elementwise2(const char* name, const Tensor& a, const Tensor& b, F f,
                    Fa fa, Fb fb) {
  require_same_shape(name, a, b);
  Tape* tape = common_tape({&a, &b});
  const std::size_t n = a.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(a.data()[i], b.data()[i]);
  Bwd bwd;
  if (tape) {
    bwd = [a, b, fa, fb](const std::vector<double>& g, Tape& t) {
      if (a.node() >= 0) {
        auto& ga = t.grad_buffer(a.node());
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * fa(a.data()[i], b.data()[i]);
      }
      if (b.node() >= 0) {
        auto& gb = t.grad_buffer(b.node());
        for (std::size_t i = 0; i < g.size(); ++i)
          gb[i] += g[i] * fb(a.data()[i], b.data()[i]);
      }
    };
  }
  return emit(tape, a.shape(), std::move(out), std::move(bwd));
}

template <typename F, typename Dfdx>
Tensor elementwise1(const Tensor& x, F f, Dfdx dfdx) {
  Tape* tape = common_tape({&x});
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(x.data()[i]);
  Bwd bwd;
  if (tape) {
    bwd = [x, dfdx](const std::vector<double>& g, Tape& t) {
      auto& gx = t.grad_buffer(x.node());
      for (std::size_t i = 0; i < g.size(); ++i)
        gx[i] += g[i] * dfdx(x.data()[i]);
    };
  }
  return emit(tape, x.shape(), std::move(out), std::move(bwd));
}

}  // namespace

PNorm pnorm_from_int(int p) {
  if (p == 1) return PNorm::one;
  if (p == 2) return PNorm::two;
  throw ConfigError("p-norm: p must be 1, 2, or inf; got " + std::to_string(p));
}

int pnorm_to_int(PNorm p) {
  switch (p) {
    case PNorm::one: return 1;
    case PNorm::two: return 2;
    default: return 0;
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise2(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise2(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise2(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double c) {
  return elementwise1(
      a, [c](double x) { return c * x; }, [c](double) { return c; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& x) {
  return elementwise1(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor elem_log(const Tensor& x) {
  return elementwise1(
      x, [](double v) { return std::log(v); },
      [](double v) { return 1.0 / v; });
}

Tensor elem_exp(const Tensor& x) {
  return elementwise1(
      x, [](double v) { return std::exp(v); },
      [](double v) { return std::exp(v); });
}

Tensor safe_log(const Tensor& x, double floor) {
  return elementwise1(
      x, [floor](double v) { return std::log(v < floor ? floor : v); },
      [floor](double v) { return v < floor ? 0.0 : 1.0 / v; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const int m = a.shape()[0], k = a.shape()[1];
  const int k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul: lhs " + shape_str(a.shape()) +
                     " incompatible with rhs " + shape_str(b.shape()));
  }
  Tape* tape = common_tape({&a, &b});
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto& A = a.data();
  const auto& B = b.data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = A[static_cast<std::size_t>(i) * k + p];
      if (av == 0.0) continue;
      const std::size_t arow = static_cast<std::size_t>(i) * n;
      const std::size_t brow = static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) out[arow + j] += av * B[brow + j];
    }
  Bwd bwd;
  if (tape) {
    bwd = [a, b, m, k, n](const std::vector<double>& g, Tape& t) {
      if (a.node() >= 0) {
        auto& ga = t.grad_buffer(a.node());  // g . B^T
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j)
              acc += g[static_cast<std::size_t>(i) * n + j] *
                     b.data()[static_cast<std::size_t>(p) * n + j];
            ga[static_cast<std::size_t>(i) * k + p] += acc;
          }
      }
      if (b.node() >= 0) {
        auto& gb = t.grad_buffer(b.node());  // A^T . g
        for (int p = 0; p < k; ++p)
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i)
              acc += a.data()[static_cast<std::size_t>(i) * k + p] *
                     g[static_cast<std::size_t>(i) * n + j];
            gb[static_cast<std::size_t>(p) * n + j] += acc;
          }
      }
    };
  }
  return emit(tape, {m, n}, std::move(out), std::move(bwd));
}

Tensor bias_row(const Tensor& x, const Tensor& b) {
  require_rank("bias_row", x, 2);
  require_rank("bias_row", b, 1);
  const int rows = x.shape()[0], cols = x.shape()[1];
  if (b.shape()[0] != cols) {
    throw ShapeError("bias_row: input " + shape_str(x.shape()) +
                     " incompatible with bias " + shape_str(b.shape()));
  }
  Tape* tape = common_tape({&x, &b});
  std::vector<double> out(x.size());
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * cols + j;
      out[idx] = x.data()[idx] + b.data()[static_cast<std::size_t>(j)];
    }
  Bwd bwd;
  if (tape) {
    bwd = [x, b, rows, cols](const std::vector<double>& g, Tape& t) {
      if (x.node() >= 0) {
        auto& gx = t.grad_buffer(x.node());
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (b.node() >= 0) {
        auto& gb = t.grad_buffer(b.node());
        for (int j = 0; j < cols; ++j) {
          double acc = 0.0;
          for (int i = 0; i < rows; ++i)
            acc += g[static_cast<std::size_t>(i) * cols + j];
          gb[static_cast<std::size_t>(j)] += acc;
        }
      }
    };
  }
  return emit(tape, x.shape(), std::move(out), std::move(bwd));
}

Tensor conv2d(const Tensor& x, const Tensor& w) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", w, 4);
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int F = w.shape()[0], Cw = w.shape()[1], KH = w.shape()[2], KW = w.shape()[3];
  if (C != Cw || KH > H || KW > W) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) +
                     " incompatible with kernel " + shape_str(w.shape()));
  }
  const int OH = H - KH + 1, OW = W - KW + 1;
  Tape* tape = common_tape({&x, &w});
  std::vector<double> out(static_cast<std::size_t>(N) * F * OH * OW, 0.0);
  const auto& X = x.data();
  const auto& K = w.data();
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f)
      for (int c = 0; c < C; ++c) {
        const std::size_t xbase = (static_cast<std::size_t>(n) * C + c) * H * W;
        const std::size_t kbase = (static_cast<std::size_t>(f) * C + c) * KH * KW;
        const std::size_t obase = (static_cast<std::size_t>(n) * F + f) * OH * OW;
        for (int ky = 0; ky < KH; ++ky)
          for (int kx = 0; kx < KW; ++kx) {
            const double kv = K[kbase + static_cast<std::size_t>(ky) * KW + kx];
            if (kv == 0.0) continue;
            for (int oy = 0; oy < OH; ++oy) {
              const std::size_t xrow = xbase + static_cast<std::size_t>(oy + ky) * W + kx;
              const std::size_t orow = obase + static_cast<std::size_t>(oy) * OW;
              for (int ox = 0; ox < OW; ++ox) out[orow + ox] += kv * X[xrow + ox];
            }
          }
      }
  Bwd bwd;
  if (tape) {
    bwd = [x, w, N, C, H, W, F, KH, KW, OH, OW](const std::vector<double>& g, Tape& t) {
      const auto& X = x.data();
      const auto& K = w.data();
      const bool need_x = x.node() >= 0;
      const bool need_w = w.node() >= 0;
      std::vector<double>* gx = need_x ? &t.grad_buffer(x.node()) : nullptr;
      std::vector<double>* gw = need_w ? &t.grad_buffer(w.node()) : nullptr;
      for (int n = 0; n < N; ++n)
        for (int f = 0; f < F; ++f)
          for (int c = 0; c < C; ++c) {
            const std::size_t xbase = (static_cast<std::size_t>(n) * C + c) * H * W;
            const std::size_t kbase = (static_cast<std::size_t>(f) * C + c) * KH * KW;
            const std::size_t obase = (static_cast<std::size_t>(n) * F + f) * OH * OW;
            for (int ky = 0; ky < KH; ++ky)
              for (int kx = 0; kx < KW; ++kx) {
                const std::size_t kidx = kbase + static_cast<std::size_t>(ky) * KW + kx;
                const double kv = K[kidx];
                double kacc = 0.0;
                for (int oy = 0; oy < OH; ++oy) {
                  const std::size_t xrow = xbase + static_cast<std::size_t>(oy + ky) * W + kx;
                  const std::size_t orow = obase + static_cast<std::size_t>(oy) * OW;
                  for (int ox = 0; ox < OW; ++ox) {
                    const double gv = g[orow + ox];
                    if (need_x) (*gx)[xrow + ox] += gv * kv;
                    kacc += gv * X[xrow + ox];
                  }
                }
                if (need_w) (*gw)[kidx] += kacc;
              }
          }
    };
  }
  return emit(tape, {N, F, OH, OW}, std::move(out), std::move(bwd));
}

Tensor bias_channel(const Tensor& x, const Tensor& b) {
  require_rank("bias_channel", x, 4);
  require_rank("bias_channel", b, 1);
  const int N = x.shape()[0], F = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (b.shape()[0] != F) {
    throw ShapeError("bias_channel: input " + shape_str(x.shape()) +
                     " incompatible with bias " + shape_str(b.shape()));
  }
  Tape* tape = common_tape({&x, &b});
  std::vector<double> out(x.size());
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f) {
      const std::size_t base = (static_cast<std::size_t>(n) * F + f) * plane;
      const double bv = b.data()[static_cast<std::size_t>(f)];
      for (std::size_t i = 0; i < plane; ++i) out[base + i] = x.data()[base + i] + bv;
    }
  Bwd bwd;
  if (tape) {
    bwd = [x, b, N, F, plane](const std::vector<double>& g, Tape& t) {
      if (x.node() >= 0) {
        auto& gx = t.grad_buffer(x.node());
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (b.node() >= 0) {
        auto& gb = t.grad_buffer(b.node());
        for (int f = 0; f < F; ++f) {
          double acc = 0.0;
          for (int n = 0; n < N; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * F + f) * plane;
            for (std::size_t i = 0; i < plane; ++i) acc += g[base + i];
          }
          gb[static_cast<std::size_t>(f)] += acc;
        }
      }
    };
  }
  return emit(tape, x.shape(), std::move(out), std::move(bwd));
}

Tensor maxpool2(const Tensor& x) {
  require_rank("maxpool2", x, 4);
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (H % 2 != 0 || W % 2 != 0) {
    throw ShapeError("maxpool2: spatial dims must be even, got " +
                     shape_str(x.shape()));
  }
  const int OH = H / 2, OW = W / 2;
  Tape* tape = common_tape({&x});
  std::vector<double> out(static_cast<std::size_t>(N) * C * OH * OW);
  // Ties route the gradient to the first maximal element in scan order.
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto& X = x.data();
  std::size_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * C + c) * H * W;
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox, ++o) {
          std::size_t best = base + static_cast<std::size_t>(2 * oy) * W + 2 * ox;
          double bv = X[best];
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx =
                  base + static_cast<std::size_t>(2 * oy + dy) * W + (2 * ox + dx);
              if (X[idx] > bv) {
                bv = X[idx];
                best = idx;
              }
            }
          out[o] = bv;
          (*argmax)[o] = best;
        }
    }
  Bwd bwd;
  if (tape) {
    bwd = [x, argmax](const std::vector<double>& g, Tape& t) {
      auto& gx = t.grad_buffer(x.node());
      for (std::size_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
    };
  }
  return emit(tape, {N, C, OH, OW}, std::move(out), std::move(bwd));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  }
  Tape* tape = common_tape({&x});
  std::vector<double> out = x.data();
  Bwd bwd;
  if (tape) {
    bwd = [x](const std::vector<double>& g, Tape& t) {
      auto& gx = t.grad_buffer(x.node());
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
  }
  return emit(tape, std::move(shape), std::move(out), std::move(bwd));
}

Tensor flatten(const Tensor& x) {
  if (x.shape().empty()) {
    throw ShapeError("flatten: expected batched input, got shape " +
                     shape_str(x.shape()));
  }
  const int n = x.shape()[0];
  const int rest = static_cast<int>(x.size()) / (n > 0 ? n : 1);
  return reshape(x, {n, rest});
}

Tensor softmax_last(const Tensor& x) {
  if (x.shape().empty()) {
    throw ShapeError("softmax: expected at least rank 1, got shape " +
                     shape_str(x.shape()));
  }
  const int M = x.shape().back();
  const std::size_t rows = x.size() / static_cast<std::size_t>(M);
  Tape* tape = common_tape({&x});
  std::vector<double> out(x.size());
  const auto& X = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * static_cast<std::size_t>(M);
    double mx = X[base];
    for (int j = 1; j < M; ++j) mx = std::max(mx, X[base + j]);
    double sum = 0.0;
    for (int j = 0; j < M; ++j) {
      out[base + j] = std::exp(X[base + j] - mx);
      sum += out[base + j];
    }
    for (int j = 0; j < M; ++j) {
      double p = out[base + j] / sum;
      // Clamp so downstream logs stay finite even at saturation.
      p = std::min(std::max(p, kProbFloor), 1.0 - kProbFloor);
      out[base + j] = p;
    }
  }
  auto y = std::make_shared<std::vector<double>>(out);
  Bwd bwd;
  if (tape) {
    bwd = [x, y, M, rows](const std::vector<double>& g, Tape& t) {
      auto& gx = t.grad_buffer(x.node());
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * static_cast<std::size_t>(M);
        double dot = 0.0;
        for (int j = 0; j < M; ++j) dot += g[base + j] * (*y)[base + j];
        for (int j = 0; j < M; ++j)
          gx[base + j] += (*y)[base + j] * (g[base + j] - dot);
      }
    };
  }
  return emit(tape, x.shape(), std::move(out), std::move(bwd));
}

Tensor sum_all(const Tensor& x) {
  Tape* tape = common_tape({&x});
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Bwd bwd;
  if (tape) {
    bwd = [x](const std::vector<double>& g, Tape& t) {
      auto& gx = t.grad_buffer(x.node());
      for (auto& v : gx) v += g[0];
    };
  }
  return emit(tape, Shape{}, {acc}, std::move(bwd));
}

Tensor mean_all(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean: empty tensor");
  Tape* tape = common_tape({&x});
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  Bwd bwd;
  if (tape) {
    bwd = [x, inv](const std::vector<double>& g, Tape& t) {
      auto& gx = t.grad_buffer(x.node());
      for (auto& v : gx) v += g[0] * inv;
    };
  }
  return emit(tape, Shape{}, {acc * inv}, std::move(bwd));
}

namespace {

struct AxisSplit {
  std::size_t outer, extent, inner;
  Shape out_shape;
};

AxisSplit split_axis(const char* op, const Tensor& x, int axis) {
  const auto& s = x.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(s));
  }
  AxisSplit a;
  a.outer = a.extent = a.inner = 1;
  for (int i = 0; i < axis; ++i) a.outer *= static_cast<std::size_t>(s[i]);
  a.extent = static_cast<std::size_t>(s[axis]);
  for (std::size_t i = axis + 1; i < s.size(); ++i)
    a.inner *= static_cast<std::size_t>(s[i]);
  for (int i = 0; i < static_cast<int>(s.size()); ++i)
    if (i != axis) a.out_shape.push_back(s[i]);
  return a;
}

}  // namespace

Tensor sum_axis(const Tensor& x, int axis) {
  const AxisSplit a = split_axis("sum_axis", x, axis);
  Tape* tape = common_tape({&x});
  std::vector<double> out(a.outer * a.inner, 0.0);
  for (std::size_t o = 0; o < a.outer; ++o)
    for (std::size_t e = 0; e < a.extent; ++e)
      for (std::size_t i = 0; i < a.inner; ++i)
        out[o * a.inner + i] += x.data()[(o * a.extent + e) * a.inner + i];
  Bwd bwd;
  if (tape) {
    bwd = [x, a](const std::vector<double>& g, Tape& t) {
      auto& gx = t.grad_buffer(x.node());
      for (std::size_t o = 0; o < a.outer; ++o)
        for (std::size_t e = 0; e < a.extent; ++e)
          for (std::size_t i = 0; i < a.inner; ++i)
            gx[(o * a.extent + e) * a.inner + i] += g[o * a.inner + i];
    };
  }
  return emit(tape, a.out_shape, std::move(out), std::move(bwd));
}

Tensor max_axis(const Tensor& x, int axis) {
  const AxisSplit a = split_axis("max_axis", x, axis);
  Tape* tape = common_tape({&x});
  std::vector<double> out(a.outer * a.inner);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t o = 0; o < a.outer; ++o)
    for (std::size_t i = 0; i < a.inner; ++i) {
      std::size_t best = (o * a.extent) * a.inner + i;
      double bv = x.data()[best];
      for (std::size_t e = 1; e < a.extent; ++e) {
        const std::size_t idx = (o * a.extent + e) * a.inner + i;
        if (x.data()[idx] > bv) {
          bv = x.data()[idx];
          best = idx;
        }
      }
      out[o * a.inner + i] = bv;
      (*argmax)[o * a.inner + i] = best;
    }
  Bwd bwd;
  if (tape) {
    bwd = [x, argmax](const std::vector<double>& g, Tape& t) {
      auto& gx = t.grad_buffer(x.node());
      for (std::size_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
    };
  }
  return emit(tape, a.out_shape, std::move(out), std::move(bwd));
}

namespace {

double span_pnorm(const double* v, std::size_t n, PNorm p) {
  double acc = 0.0;
  switch (p) {
    case PNorm::one:
      for (std::size_t i = 0; i < n; ++i) acc += std::fabs(v[i]);
      return acc;
    case PNorm::two:
      for (std::size_t i = 0; i < n; ++i) acc += v[i] * v[i];
      return std::sqrt(acc);
    default:
      for (std::size_t i = 0; i < n; ++i) acc = std::max(acc, std::fabs(v[i]));
      return acc;
  }
}

/// d||v||_p / dv scaled by `coef`, accumulated into `out`.
void accumulate_pnorm_grad(const double* v, std::size_t n, PNorm p, double norm,
                           double coef, double* out) {
  switch (p) {
    case PNorm::one:
      for (std::size_t i = 0; i < n; ++i) out[i] += coef * sign0(v[i]);
      return;
    case PNorm::two:
      if (norm == 0.0) return;
      for (std::size_t i = 0; i < n; ++i) out[i] += coef * v[i] / norm;
      return;
    default: {
      // First maximal coordinate takes the whole subgradient.
      std::size_t k = 0;
      double best = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double m = std::fabs(v[i]);
        if (m > best) {
          best = m;
          k = i;
        }
      }
      out[k] += coef * sign0(v[k]);
      return;
    }
  }
}

}  // namespace

Tensor pnorm(const Tensor& x, PNorm p) {
  Tape* tape = common_tape({&x});
  const double norm = span_pnorm(x.data().data(), x.size(), p);
  Bwd bwd;
  if (tape) {
    bwd = [x, p, norm](const std::vector<double>& g, Tape& t) {
      auto& gx = t.grad_buffer(x.node());
      accumulate_pnorm_grad(x.data().data(), x.size(), p, norm, g[0], gx.data());
    };
  }
  return emit(tape, Shape{}, {norm}, std::move(bwd));
}

Tensor rowwise_pnorm(const Tensor& x, PNorm p) {
  require_rank("rowwise_pnorm", x, 2);
  const int B = x.shape()[0], D = x.shape()[1];
  Tape* tape = common_tape({&x});
  std::vector<double> out(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i)
    out[static_cast<std::size_t>(i)] =
        span_pnorm(x.data().data() + static_cast<std::size_t>(i) * D,
                   static_cast<std::size_t>(D), p);
  auto norms = std::make_shared<std::vector<double>>(out);
  Bwd bwd;
  if (tape) {
    bwd = [x, p, norms, B, D](const std::vector<double>& g, Tape& t) {
      auto& gx = t.grad_buffer(x.node());
      for (int i = 0; i < B; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * D;
        accumulate_pnorm_grad(x.data().data() + off, static_cast<std::size_t>(D),
                              p, (*norms)[static_cast<std::size_t>(i)],
                              g[static_cast<std::size_t>(i)], gx.data() + off);
      }
    };
  }
  return emit(tape, {B}, std::move(out), std::move(bwd));
}

Tensor select_class(const Tensor& probs, const std::vector<int>& labels) {
  require_rank("select_class", probs, 2);
  const int B = probs.shape()[0], M = probs.shape()[1];
  if (static_cast<int>(labels.size()) != B) {
    throw ShapeError("select_class: " + std::to_string(labels.size()) +
                     " labels for batch shape " + shape_str(probs.shape()));
  }
  for (int i = 0; i < B; ++i) {
    if (labels[static_cast<std::size_t>(i)] < 0 ||
        labels[static_cast<std::size_t>(i)] >= M) {
      throw ConfigError("select_class: label " +
                        std::to_string(labels[static_cast<std::size_t>(i)]) +
                        " outside [0," + std::to_string(M) + ")");
    }
  }
  Tape* tape = common_tape({&probs});
  std::vector<double> out(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i)
    out[static_cast<std::size_t>(i)] =
        probs.data()[static_cast<std::size_t>(i) * M +
                     labels[static_cast<std::size_t>(i)]];
  Bwd bwd;
  if (tape) {
    bwd = [probs, labels, M](const std::vector<double>& g, Tape& t) {
      auto& gp = t.grad_buffer(probs.node());
      for (std::size_t i = 0; i < g.size(); ++i)
        gp[i * static_cast<std::size_t>(M) +
           static_cast<std::size_t>(labels[i])] += g[i];
    };
  }
  return emit(tape, {B}, std::move(out), std::move(bwd));
}

Tensor pairwise_weighted_pnorm_mean(const Tensor& reps,
                                    const std::vector<double>& pair_weights,
                                    PNorm p) {
  require_rank("pairwise_weighted_pnorm_mean", reps, 2);
  const int B = reps.shape()[0], D = reps.shape()[1];
  const std::size_t npairs = static_cast<std::size_t>(B) * (B - 1) / 2;
  if (pair_weights.size() != npairs) {
    throw ShapeError("pairwise_weighted_pnorm_mean: " +
                     std::to_string(pair_weights.size()) + " weights for " +
                     std::to_string(npairs) + " pairs");
  }
  if (npairs == 0) {
    throw ShapeError("pairwise_weighted_pnorm_mean: batch size must be >= 2");
  }
  Tape* tape = common_tape({&reps});
  std::vector<double> diff(static_cast<std::size_t>(D));
  double acc = 0.0;
  std::size_t pair = 0;
  for (int i = 0; i < B; ++i)
    for (int j = i + 1; j < B; ++j, ++pair) {
      const double* ri = reps.data().data() + static_cast<std::size_t>(i) * D;
      const double* rj = reps.data().data() + static_cast<std::size_t>(j) * D;
      for (int d = 0; d < D; ++d) diff[static_cast<std::size_t>(d)] = ri[d] - rj[d];
      acc += pair_weights[pair] * span_pnorm(diff.data(), diff.size(), p);
    }
  const double inv = 1.0 / static_cast<double>(npairs);
  Bwd bwd;
  if (tape) {
    bwd = [reps, pair_weights, p, B, D, inv](const std::vector<double>& g, Tape& t) {
      auto& gr = t.grad_buffer(reps.node());
      std::vector<double> diff(static_cast<std::size_t>(D));
      std::vector<double> dlocal(static_cast<std::size_t>(D));
      std::size_t pair = 0;
      for (int i = 0; i < B; ++i)
        for (int j = i + 1; j < B; ++j, ++pair) {
          const double* ri = reps.data().data() + static_cast<std::size_t>(i) * D;
          const double* rj = reps.data().data() + static_cast<std::size_t>(j) * D;
          for (int d = 0; d < D; ++d)
            diff[static_cast<std::size_t>(d)] = ri[d] - rj[d];
          const double norm = span_pnorm(diff.data(), diff.size(), p);
          std::fill(dlocal.begin(), dlocal.end(), 0.0);
          accumulate_pnorm_grad(diff.data(), diff.size(), p, norm,
                                g[0] * inv * pair_weights[pair], dlocal.data());
          double* gi = gr.data() + static_cast<std::size_t>(i) * D;
          double* gj = gr.data() + static_cast<std::size_t>(j) * D;
          for (int d = 0; d < D; ++d) {
            gi[d] += dlocal[static_cast<std::size_t>(d)];
            gj[d] -= dlocal[static_cast<std::size_t>(d)];
          }
        }
    };
  }
  return emit(tape, Shape{}, {acc * inv}, std::move(bwd));
}

}  // namespace adr
