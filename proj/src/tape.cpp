#include "arft/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace arft {

namespace {

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const std::size_t n = std::max(a.size(), b.size());
  Shape out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t da = (i < n - a.size()) ? 1 : a[i - (n - a.size())];
    const std::size_t db = (i < n - b.size()) ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `s` seen through output shape `o` (right-aligned); 0 marks a
// broadcast dim so repeated visits land on the same element.
std::vector<std::size_t> bcast_strides(const Shape& s, const Shape& o) {
  std::vector<std::size_t> nat(s.size());
  std::size_t acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    nat[i] = acc;
    acc *= s[i];
  }
  std::vector<std::size_t> out(o.size(), 0);
  const std::size_t off = o.size() - s.size();
  for (std::size_t i = 0; i < s.size(); ++i)
    out[off + i] = (s[i] == 1 && o[off + i] != 1) ? 0 : nat[i];
  return out;
}

// Visits every position of `out`, handing the linear output index plus the
// (possibly broadcast) offsets into the two inputs.
template <typename F>
void for_each_bcast(const Shape& out, const std::vector<std::size_t>& sa,
                    const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t n = shape_numel(out);
  const std::size_t rank = out.size();
  if (rank == 0) {
    if (n) f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, oa, ob);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) break;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

void check_same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || a.tape != b.tape)
    throw ContractError(std::string(op) + ": operands must live on the same tape");
}

// Grad buffer of a parent, or nullptr when that parent tracks no gradient.
double* gbuf(Tape& t, int id) {
  Tape::Node& n = t.node(id);
  return n.requires_grad ? n.grad.data.data() : nullptr;
}

}  // namespace

// --- Tape core ---------------------------------------------------------------

int Tape::emit(Tensor value, bool requires_grad, std::vector<int> parents,
               std::function<void(Tape&, int)> backprop) {
  Node n;
  n.requires_grad = requires_grad;
  if (requires_grad) n.grad = Tensor::zeros(value.shape);
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::constant(Tensor value) { return Var{this, emit(std::move(value), false, {}, nullptr)}; }

Var Tape::param(Tensor value) { return Var{this, emit(std::move(value), true, {}, nullptr)}; }

const Tensor& Tape::value(Var v) const { return node(v.id).value; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v.id);
  if (!n.requires_grad) throw ContractError("grad: node does not track gradients");
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.tape != this) throw ContractError("backward: loss not on this tape");
  if (node(loss.id).value.numel() != 1)
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(node(loss.id).value.shape));
  if (backward_ran_ && nodes_.size() == nodes_at_last_backward_)
    throw ContractError("backward: called twice without recording a new forward pass");
  backward_ran_ = true;
  nodes_at_last_backward_ = nodes_.size();

  Node& ln = node(loss.id);
  if (!ln.requires_grad) return;  // nothing reachable tracks gradients
  ln.grad.data[0] = 1.0;

  // Creation order is topological, so ancestors of the loss all have smaller
  // ids; mark them and sweep once in reverse.
  std::vector<char> visited(static_cast<std::size_t>(loss.id) + 1, 0);
  std::vector<int> stack{loss.id};
  visited[static_cast<std::size_t>(loss.id)] = 1;
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    for (int p : node(id).parents) {
      if (!visited[static_cast<std::size_t>(p)]) {
        visited[static_cast<std::size_t>(p)] = 1;
        stack.push_back(p);
      }
    }
  }
  for (int id = loss.id; id >= 0; --id) {
    Node& n = node(id);
    if (visited[static_cast<std::size_t>(id)] && n.requires_grad && n.backprop)
      n.backprop(*this, id);
  }
}

// --- elementwise binaries -----------------------------------------------------

namespace {

enum class BinOp { Add, Sub, Mul };

Var binary_op(Var a, Var b, BinOp op, const char* name) {
  check_same_tape(a, b, name);
  Tape& t = *a.tape;
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  const Shape out_shape = broadcast_shapes(A.shape, B.shape, name);
  const auto sa = bcast_strides(A.shape, out_shape);
  const auto sb = bcast_strides(B.shape, out_shape);

  Tensor out = Tensor::zeros(out_shape);
  const double* pa = A.data.data();
  const double* pb = B.data.data();
  double* po = out.data.data();
  switch (op) {
    case BinOp::Add:
      for_each_bcast(out_shape, sa, sb,
                     [&](std::size_t i, std::size_t ia, std::size_t ib) { po[i] = pa[ia] + pb[ib]; });
      break;
    case BinOp::Sub:
      for_each_bcast(out_shape, sa, sb,
                     [&](std::size_t i, std::size_t ia, std::size_t ib) { po[i] = pa[ia] - pb[ib]; });
      break;
    case BinOp::Mul:
      for_each_bcast(out_shape, sa, sb,
                     [&](std::size_t i, std::size_t ia, std::size_t ib) { po[i] = pa[ia] * pb[ib]; });
      break;
  }

  const bool rg = t.node(a.id).requires_grad || t.node(b.id).requires_grad;
  std::function<void(Tape&, int)> bp;
  if (rg) {
    bp = [op, out_shape, sa, sb](Tape& tp, int self) {
      Tape::Node& n = tp.node(self);
      const double* gy = n.grad.data.data();
      double* ga = gbuf(tp, n.parents[0]);
      double* gb = gbuf(tp, n.parents[1]);
      const double* va = tp.node(n.parents[0]).value.data.data();
      const double* vb = tp.node(n.parents[1]).value.data.data();
      switch (op) {
        case BinOp::Add:
          for_each_bcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            if (ga) ga[ia] += gy[i];
            if (gb) gb[ib] += gy[i];
          });
          break;
        case BinOp::Sub:
          for_each_bcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            if (ga) ga[ia] += gy[i];
            if (gb) gb[ib] -= gy[i];
          });
          break;
        case BinOp::Mul:
          for_each_bcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            if (ga) ga[ia] += gy[i] * vb[ib];
            if (gb) gb[ib] += gy[i] * va[ia];
          });
          break;
      }
    };
  }
  return Var{&t, t.emit(std::move(out), rg, {a.id, b.id}, std::move(bp))};
}

}  // namespace

Var add(Var a, Var b) { return binary_op(a, b, BinOp::Add, "add"); }
Var sub(Var a, Var b) { return binary_op(a, b, BinOp::Sub, "sub"); }
Var mul(Var a, Var b) { return binary_op(a, b, BinOp::Mul, "mul"); }

// --- scalar and unary ops -----------------------------------------------------

namespace {

// Elementwise unary: out[i] = fwd(x[i]); dx[i] += dfdx(x[i], out[i]) * gy[i].
template <typename Fwd, typename Dfdx>
Var unary_op(Var a, Fwd fwd, Dfdx dfdx) {
  Tape& t = *a.tape;
  const Tensor& A = t.value(a);
  Tensor out = Tensor::zeros(A.shape);
  for (std::size_t i = 0; i < A.numel(); ++i) out.data[i] = fwd(A.data[i]);

  const bool rg = t.node(a.id).requires_grad;
  std::function<void(Tape&, int)> bp;
  if (rg) {
    bp = [dfdx](Tape& tp, int self) {
      Tape::Node& n = tp.node(self);
      double* ga = gbuf(tp, n.parents[0]);
      if (!ga) return;
      const double* gy = n.grad.data.data();
      const double* vx = tp.node(n.parents[0]).value.data.data();
      const double* vy = n.value.data.data();
      for (std::size_t i = 0; i < n.value.numel(); ++i) ga[i] += dfdx(vx[i], vy[i]) * gy[i];
    };
  }
  return Var{&t, t.emit(std::move(out), rg, {a.id}, std::move(bp))};
}

}  // namespace

Var add_scalar(Var a, double s) {
  return unary_op(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(Var a, double s) {
  return unary_op(
      a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var pow_scalar(Var a, double e) {
  if (e == 0.0)
    return unary_op(
        a, [](double) { return 1.0; }, [](double, double) { return 0.0; });
  return unary_op(
      a, [e](double x) { return std::pow(x, e); },
      [e](double x, double) { return e * std::pow(x, e - 1.0); });
}

Var exp(Var a) {
  return unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary_op(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var clamp_min(Var a, double lo) {
  return unary_op(
      a, [lo](double x) { return x < lo ? lo : x; },
      [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

// --- matmul --------------------------------------------------------------------

Var matmul(Var a, Var b) {
  check_same_tape(a, b, "matmul");
  Tape& t = *a.tape;
  const Tensor& A = t.value(a);
  const Tensor& B = t.value(b);
  if (A.ndim() < 2 || B.ndim() < 2)
    throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(A.shape) + " x " +
                     shape_str(B.shape));
  const std::size_t I = A.shape[A.ndim() - 2];
  const std::size_t K = A.shape[A.ndim() - 1];
  const std::size_t K2 = B.shape[B.ndim() - 2];
  const std::size_t J = B.shape[B.ndim() - 1];
  if (K != K2)
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(A.shape) + " x " +
                     shape_str(B.shape));

  const Shape batch_a(A.shape.begin(), A.shape.end() - 2);
  const Shape batch_b(B.shape.begin(), B.shape.end() - 2);
  const Shape batch = broadcast_shapes(batch_a, batch_b, "matmul");
  Shape out_shape = batch;
  out_shape.push_back(I);
  out_shape.push_back(J);

  // Batch strides in whole-tensor element units.
  auto block_strides = [](const Shape& full, const Shape& bshape, const Shape& batch_out) {
    std::vector<std::size_t> nat(full.size());
    std::size_t acc = 1;
    for (std::size_t i = full.size(); i-- > 0;) {
      nat[i] = acc;
      acc *= full[i];
    }
    std::vector<std::size_t> out(batch_out.size(), 0);
    const std::size_t off = batch_out.size() - bshape.size();
    for (std::size_t i = 0; i < bshape.size(); ++i)
      out[off + i] = (bshape[i] == 1 && batch_out[off + i] != 1) ? 0 : nat[i];
    return out;
  };
  const auto sa = block_strides(A.shape, batch_a, batch);
  const auto sb = block_strides(B.shape, batch_b, batch);

  const std::size_t cells = shape_numel(batch);
  Tensor out = Tensor::zeros(out_shape);
  {
    const double* pa = A.data.data();
    const double* pb = B.data.data();
    double* po = out.data.data();
    for_each_bcast(batch, sa, sb, [&](std::size_t cell, std::size_t oa, std::size_t ob) {
      const double* Ab = pa + oa;
      const double* Bb = pb + ob;
      double* Ob = po + cell * I * J;
      for (std::size_t i = 0; i < I; ++i) {
        double* orow = Ob + i * J;
        for (std::size_t k = 0; k < K; ++k) {
          const double av = Ab[i * K + k];
          const double* brow = Bb + k * J;
          for (std::size_t j = 0; j < J; ++j) orow[j] += av * brow[j];
        }
      }
    });
  }
  (void)cells;

  const bool rg = t.node(a.id).requires_grad || t.node(b.id).requires_grad;
  std::function<void(Tape&, int)> bp;
  if (rg) {
    bp = [batch, sa, sb, I, K, J](Tape& tp, int self) {
      Tape::Node& n = tp.node(self);
      const double* gy = n.grad.data.data();
      double* ga = gbuf(tp, n.parents[0]);
      double* gb = gbuf(tp, n.parents[1]);
      const double* va = tp.node(n.parents[0]).value.data.data();
      const double* vb = tp.node(n.parents[1]).value.data.data();
      for_each_bcast(batch, sa, sb, [&](std::size_t cell, std::size_t oa, std::size_t ob) {
        const double* Gb = gy + cell * I * J;
        if (ga) {
          // dA[i,k] += sum_j gy[i,j] * B[k,j]
          for (std::size_t i = 0; i < I; ++i) {
            const double* grow = Gb + i * J;
            for (std::size_t k = 0; k < K; ++k) {
              const double* brow = vb + ob + k * J;
              double s = 0.0;
              for (std::size_t j = 0; j < J; ++j) s += grow[j] * brow[j];
              ga[oa + i * K + k] += s;
            }
          }
        }
        if (gb) {
          // dB[k,j] += sum_i A[i,k] * gy[i,j]
          for (std::size_t i = 0; i < I; ++i) {
            const double* grow = Gb + i * J;
            const double* arow = va + oa + i * K;
            for (std::size_t k = 0; k < K; ++k) {
              const double av = arow[k];
              double* gbrow = gb + ob + k * J;
              for (std::size_t j = 0; j < J; ++j) gbrow[j] += av * grow[j];
            }
          }
        }
      });
    };
  }
  return Var{&t, t.emit(std::move(out), rg, {a.id, b.id}, std::move(bp))};
}

// --- softmax -------------------------------------------------------------------

namespace {

struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& shape, int axis, const char* op) {
  const int rank = static_cast<int>(shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank)
    throw ShapeError(std::string(op) + ": axis out of range for shape " + shape_str(shape));
  AxisSplit s{1, shape[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) s.inner *= shape[static_cast<std::size_t>(i)];
  return s;
}

}  // namespace

Var softmax(Var a, int axis) {
  Tape& t = *a.tape;
  const Tensor& A = t.value(a);
  const AxisSplit ax = split_axis(A.shape, axis, "softmax");

  Tensor out = Tensor::zeros(A.shape);
  for (std::size_t o = 0; o < ax.outer; ++o) {
    for (std::size_t in = 0; in < ax.inner; ++in) {
      const std::size_t base = o * ax.len * ax.inner + in;
      double mx = A.data[base];
      for (std::size_t k = 1; k < ax.len; ++k) mx = std::max(mx, A.data[base + k * ax.inner]);
      double sum = 0.0;
      for (std::size_t k = 0; k < ax.len; ++k) {
        const double e = std::exp(A.data[base + k * ax.inner] - mx);
        out.data[base + k * ax.inner] = e;
        sum += e;
      }
      for (std::size_t k = 0; k < ax.len; ++k) out.data[base + k * ax.inner] /= sum;
    }
  }

  const bool rg = t.node(a.id).requires_grad;
  std::function<void(Tape&, int)> bp;
  if (rg) {
    bp = [ax](Tape& tp, int self) {
      Tape::Node& n = tp.node(self);
      double* ga = gbuf(tp, n.parents[0]);
      if (!ga) return;
      const double* gy = n.grad.data.data();
      const double* y = n.value.data.data();
      for (std::size_t o = 0; o < ax.outer; ++o) {
        for (std::size_t in = 0; in < ax.inner; ++in) {
          const std::size_t base = o * ax.len * ax.inner + in;
          double dot = 0.0;
          for (std::size_t k = 0; k < ax.len; ++k) {
            const std::size_t idx = base + k * ax.inner;
            dot += gy[idx] * y[idx];
          }
          for (std::size_t k = 0; k < ax.len; ++k) {
            const std::size_t idx = base + k * ax.inner;
            ga[idx] += y[idx] * (gy[idx] - dot);
          }
        }
      }
    };
  }
  return Var{&t, t.emit(std::move(out), rg, {a.id}, std::move(bp))};
}

// --- layer norm ------------------------------------------------------------------

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  check_same_tape(x, gain, "layer_norm");
  check_same_tape(x, bias, "layer_norm");
  if (eps <= 0.0) throw ConfigError("layer_norm: eps must be > 0");
  Tape& t = *x.tape;
  const Tensor& X = t.value(x);
  if (X.ndim() < 1) throw ShapeError("layer_norm: input must have rank >= 1");
  const std::size_t D = X.shape.back();
  const Tensor& G = t.value(gain);
  const Tensor& B = t.value(bias);
  if (G.shape != Shape{D} || B.shape != Shape{D})
    throw ShapeError("layer_norm: gain/bias must have shape [" + std::to_string(D) + "], got " +
                     shape_str(G.shape) + " and " + shape_str(B.shape));

  const std::size_t rows = X.numel() / D;
  Tensor out = Tensor::zeros(X.shape);
  auto xhat = std::make_shared<std::vector<double>>(X.numel());
  auto inv_s = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X.data.data() + r * D;
    double m = 0.0;
    for (std::size_t i = 0; i < D; ++i) m += xr[i];
    m /= static_cast<double>(D);
    double v = 0.0;
    for (std::size_t i = 0; i < D; ++i) v += (xr[i] - m) * (xr[i] - m);
    v /= static_cast<double>(D);
    const double is = 1.0 / std::sqrt(v + eps);
    (*inv_s)[r] = is;
    for (std::size_t i = 0; i < D; ++i) {
      const double xh = (xr[i] - m) * is;
      (*xhat)[r * D + i] = xh;
      out.data[r * D + i] = xh * G.data[i] + B.data[i];
    }
  }

  const bool rg = t.node(x.id).requires_grad || t.node(gain.id).requires_grad ||
                  t.node(bias.id).requires_grad;
  std::function<void(Tape&, int)> bp;
  if (rg) {
    bp = [xhat, inv_s, rows, D](Tape& tp, int self) {
      Tape::Node& n = tp.node(self);
      const double* gy = n.grad.data.data();
      double* gx = gbuf(tp, n.parents[0]);
      double* gg = gbuf(tp, n.parents[1]);
      double* gb = gbuf(tp, n.parents[2]);
      const double* gainv = tp.node(n.parents[1]).value.data.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gyr = gy + r * D;
        const double* xhr = xhat->data() + r * D;
        if (gx) {
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (std::size_t i = 0; i < D; ++i) {
            const double dxh = gyr[i] * gainv[i];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xhr[i];
          }
          mean_dxh /= static_cast<double>(D);
          mean_dxh_xh /= static_cast<double>(D);
          const double is = (*inv_s)[r];
          for (std::size_t i = 0; i < D; ++i) {
            const double dxh = gyr[i] * gainv[i];
            gx[r * D + i] += is * (dxh - mean_dxh - xhr[i] * mean_dxh_xh);
          }
        }
        if (gg)
          for (std::size_t i = 0; i < D; ++i) gg[i] += gyr[i] * xhr[i];
        if (gb)
          for (std::size_t i = 0; i < D; ++i) gb[i] += gyr[i];
      }
    };
  }
  return Var{&t, t.emit(std::move(out), rg, {x.id, gain.id, bias.id}, std::move(bp))};
}

// --- reglu ------------------------------------------------------------------------

Var reglu(Var x) {
  Tape& t = *x.tape;
  const Tensor& X = t.value(x);
  if (X.ndim() < 1 || X.shape.back() % 2 != 0)
    throw ShapeError("reglu: last axis must be even, got shape " + shape_str(X.shape));
  const std::size_t last = X.shape.back();
  const std::size_t h = last / 2;
  const std::size_t rows = X.numel() / last;
  Shape out_shape = X.shape;
  out_shape.back() = h;

  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X.data.data() + r * last;
    for (std::size_t i = 0; i < h; ++i) {
      const double g = xr[h + i];
      out.data[r * h + i] = g > 0.0 ? xr[i] * g : 0.0;
    }
  }

  const bool rg = t.node(x.id).requires_grad;
  std::function<void(Tape&, int)> bp;
  if (rg) {
    bp = [rows, h, last](Tape& tp, int self) {
      Tape::Node& n = tp.node(self);
      double* gx = gbuf(tp, n.parents[0]);
      if (!gx) return;
      const double* gy = n.grad.data.data();
      const double* vx = tp.node(n.parents[0]).value.data.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = vx + r * last;
        for (std::size_t i = 0; i < h; ++i) {
          const double g = xr[h + i];
          if (g > 0.0) {
            gx[r * last + i] += gy[r * h + i] * g;
            gx[r * last + h + i] += gy[r * h + i] * xr[i];
          }
        }
      }
    };
  }
  return Var{&t, t.emit(std::move(out), rg, {x.id}, std::move(bp))};
}

// --- dropout ------------------------------------------------------------------------

Var dropout(Var x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;  // identity, no rng draws

  Tape& t = *x.tape;
  const Tensor& X = t.value(x);
  const double scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<char>>(X.numel());
  Tensor out = Tensor::zeros(X.shape);
  for (std::size_t i = 0; i < X.numel(); ++i) {
    const bool keep = rng.uniform() >= rate;
    (*mask)[i] = keep;
    out.data[i] = keep ? X.data[i] * scale : 0.0;
  }

  const bool rg = t.node(x.id).requires_grad;
  std::function<void(Tape&, int)> bp;
  if (rg) {
    bp = [mask, scale](Tape& tp, int self) {
      Tape::Node& n = tp.node(self);
      double* gx = gbuf(tp, n.parents[0]);
      if (!gx) return;
      const double* gy = n.grad.data.data();
      for (std::size_t i = 0; i < n.value.numel(); ++i)
        if ((*mask)[i]) gx[i] += gy[i] * scale;
    };
  }
  return Var{&t, t.emit(std::move(out), rg, {x.id}, std::move(bp))};
}

// --- reductions ------------------------------------------------------------------------

Var sum_all(Var a) {
  Tape& t = *a.tape;
  const Tensor& A = t.value(a);
  double s = 0.0;
  for (double v : A.data) s += v;

  const bool rg = t.node(a.id).requires_grad;
  std::function<void(Tape&, int)> bp;
  if (rg) {
    bp = [](Tape& tp, int self) {
      Tape::Node& n = tp.node(self);
      double* ga = gbuf(tp, n.parents[0]);
      if (!ga) return;
      const double g = n.grad.data[0];
      const std::size_t m = tp.node(n.parents[0]).value.numel();
      for (std::size_t i = 0; i < m; ++i) ga[i] += g;
    };
  }
  return Var{&t, t.emit(Tensor::scalar(s), rg, {a.id}, std::move(bp))};
}

Var mean_all(Var a) {
  Tape& t = *a.tape;
  const Tensor& A = t.value(a);
  if (A.numel() == 0) throw ContractError("mean_all: empty tensor");
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(A.numel()));
}

Var sum_last(Var a, bool keepdim) {
  Tape& t = *a.tape;
  const Tensor& A = t.value(a);
  if (A.ndim() < 1) throw ShapeError("sum_last: input must have rank >= 1");
  const std::size_t D = A.shape.back();
  const std::size_t rows = A.numel() / D;
  Shape out_shape(A.shape.begin(), A.shape.end() - 1);
  if (keepdim) out_shape.push_back(1);

  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    const double* xr = A.data.data() + r * D;
    for (std::size_t i = 0; i < D; ++i) s += xr[i];
    out.data[r] = s;
  }

  const bool rg = t.node(a.id).requires_grad;
  std::function<void(Tape&, int)> bp;
  if (rg) {
    bp = [rows, D](Tape& tp, int self) {
      Tape::Node& n = tp.node(self);
      double* ga = gbuf(tp, n.parents[0]);
      if (!ga) return;
      const double* gy = n.grad.data.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < D; ++i) ga[r * D + i] += gy[r];
    };
  }
  return Var{&t, t.emit(std::move(out), rg, {a.id}, std::move(bp))};
}

// --- layout ops ------------------------------------------------------------------------

Var concat(const std::vector<Var>& xs, int axis) {
  if (xs.empty()) throw ContractError("concat: empty input list");
  Tape& t = *xs[0].tape;
  for (const Var& v : xs) check_same_tape(xs[0], v, "concat");

  const Tensor& first = t.value(xs[0]);
  const int rank = static_cast<int>(first.ndim());
  int ax = axis < 0 ? axis + rank : axis;
  if (ax < 0 || ax >= rank)
    throw ShapeError("concat: axis out of range for shape " + shape_str(first.shape));

  std::size_t total = 0;
  std::vector<std::size_t> lens(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Tensor& X = t.value(xs[i]);
    if (X.ndim() != first.ndim())
      throw ShapeError("concat: rank mismatch between inputs");
    for (int d = 0; d < rank; ++d)
      if (d != ax && X.shape[static_cast<std::size_t>(d)] != first.shape[static_cast<std::size_t>(d)])
        throw ShapeError("concat: shapes " + shape_str(first.shape) + " and " + shape_str(X.shape) +
                         " differ off-axis");
    lens[i] = X.shape[static_cast<std::size_t>(ax)];
    total += lens[i];
  }

  Shape out_shape = first.shape;
  out_shape[static_cast<std::size_t>(ax)] = total;
  const AxisSplit sp = split_axis(out_shape, ax, "concat");

  Tensor out = Tensor::zeros(out_shape);
  bool rg = false;
  std::vector<int> parents(xs.size());
  {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      parents[i] = xs[i].id;
      rg = rg || t.node(xs[i].id).requires_grad;
      const Tensor& X = t.value(xs[i]);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        const double* src = X.data.data() + o * lens[i] * sp.inner;
        double* dst = out.data.data() + (o * total + pos) * sp.inner;
        std::copy(src, src + lens[i] * sp.inner, dst);
      }
      pos += lens[i];
    }
  }

  std::function<void(Tape&, int)> bp;
  if (rg) {
    bp = [lens, total, sp](Tape& tp, int self) {
      Tape::Node& n = tp.node(self);
      const double* gy = n.grad.data.data();
      std::size_t pos = 0;
      for (std::size_t i = 0; i < n.parents.size(); ++i) {
        double* gp = gbuf(tp, n.parents[i]);
        if (gp) {
          for (std::size_t o = 0; o < sp.outer; ++o) {
            const double* src = gy + (o * total + pos) * sp.inner;
            double* dst = gp + o * lens[i] * sp.inner;
            for (std::size_t k = 0; k < lens[i] * sp.inner; ++k) dst[k] += src[k];
          }
        }
        pos += lens[i];
      }
    };
  }
  return Var{&t, t.emit(std::move(out), rg, std::move(parents), std::move(bp))};
}

Var slice(Var x, int axis, std::size_t start, std::size_t len) {
  Tape& t = *x.tape;
  const Tensor& X = t.value(x);
  const int rank = static_cast<int>(X.ndim());
  int ax = axis < 0 ? axis + rank : axis;
  if (ax < 0 || ax >= rank)
    throw ShapeError("slice: axis out of range for shape " + shape_str(X.shape));
  const std::size_t dim = X.shape[static_cast<std::size_t>(ax)];
  if (start + len > dim || len == 0)
    throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") invalid for axis of size " + std::to_string(dim));

  Shape out_shape = X.shape;
  out_shape[static_cast<std::size_t>(ax)] = len;
  const AxisSplit sp = split_axis(X.shape, ax, "slice");

  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    const double* src = X.data.data() + (o * dim + start) * sp.inner;
    std::copy(src, src + len * sp.inner, out.data.data() + o * len * sp.inner);
  }

  const bool rg = t.node(x.id).requires_grad;
  std::function<void(Tape&, int)> bp;
  if (rg) {
    bp = [sp, dim, start, len](Tape& tp, int self) {
      Tape::Node& n = tp.node(self);
      double* gx = gbuf(tp, n.parents[0]);
      if (!gx) return;
      const double* gy = n.grad.data.data();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        const double* src = gy + o * len * sp.inner;
        double* dst = gx + (o * dim + start) * sp.inner;
        for (std::size_t k = 0; k < len * sp.inner; ++k) dst[k] += src[k];
      }
    };
  }
  return Var{&t, t.emit(std::move(out), rg, {x.id}, std::move(bp))};
}

Var transpose_last2(Var x) {
  Tape& t = *x.tape;
  const Tensor& X = t.value(x);
  if (X.ndim() < 2) throw ShapeError("transpose_last2: input must have rank >= 2");
  const std::size_t R = X.shape[X.ndim() - 2];
  const std::size_t C = X.shape[X.ndim() - 1];
  const std::size_t cells = X.numel() / (R * C);
  Shape out_shape = X.shape;
  std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);

  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t c = 0; c < cells; ++c) {
    const double* src = X.data.data() + c * R * C;
    double* dst = out.data.data() + c * R * C;
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j) dst[j * R + i] = src[i * C + j];
  }

  const bool rg = t.node(x.id).requires_grad;
  std::function<void(Tape&, int)> bp;
  if (rg) {
    bp = [cells, R, C](Tape& tp, int self) {
      Tape::Node& n = tp.node(self);
      double* gx = gbuf(tp, n.parents[0]);
      if (!gx) return;
      const double* gy = n.grad.data.data();
      for (std::size_t c = 0; c < cells; ++c) {
        const double* src = gy + c * R * C;
        double* dst = gx + c * R * C;
        for (std::size_t j = 0; j < C; ++j)
          for (std::size_t i = 0; i < R; ++i) dst[i * C + j] += src[j * R + i];
      }
    };
  }
  return Var{&t, t.emit(std::move(out), rg, {x.id}, std::move(bp))};
}

Var reshape(Var x, Shape new_shape) {
  Tape& t = *x.tape;
  const Tensor& X = t.value(x);
  if (shape_numel(new_shape) != X.numel())
    throw ShapeError("reshape: cannot view " + shape_str(X.shape) + " as " + shape_str(new_shape));

  Tensor out(new_shape, X.data);
  const bool rg = t.node(x.id).requires_grad;
  std::function<void(Tape&, int)> bp;
  if (rg) {
    bp = [](Tape& tp, int self) {
      Tape::Node& n = tp.node(self);
      double* gx = gbuf(tp, n.parents[0]);
      if (!gx) return;
      const double* gy = n.grad.data.data();
      for (std::size_t i = 0; i < n.value.numel(); ++i) gx[i] += gy[i];
    };
  }
  return Var{&t, t.emit(std::move(out), rg, {x.id}, std::move(bp))};
}

}  // namespace arft
