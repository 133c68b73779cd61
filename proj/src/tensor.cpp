#include "iepg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace iepg {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// ---------------------------------------------------------------------------
// Rng
// ---------------------------------------------------------------------------

double Rng::normal() {
  // Box-Muller; u clamped away from 0 so log stays finite
  double u1 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::int64_t Rng::randint(std::int64_t n) {
  if (n <= 0) throw std::invalid_argument("Rng::randint: n must be positive");
  return static_cast<std::int64_t>(gen_() % static_cast<std::uint64_t>(n));
}

static std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::child(std::uint64_t salt) const { return Rng(splitmix64(seed_ ^ splitmix64(salt))); }

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<std::size_t>(numel(impl_->shape)), fill);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (numel(shape) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::randu(Rng& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape), 0.0);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::randn(Rng& rng, Shape shape) {
  Tensor t(std::move(shape), 0.0);
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

double Tensor::value() const {
  if (size() != 1)
    throw std::invalid_argument("Tensor::value: expected scalar, got " + shape_str(shape()));
  return impl_->data[0];
}

std::vector<double> Tensor::grad_vector() const {
  if (impl_->grad.empty()) return std::vector<double>(impl_->data.size(), 0.0);
  return impl_->grad;
}

std::vector<double>& Tensor::grad_or_alloc() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

NoTape::NoTape() {
  saved_ = g_active_tape;
  g_active_tape = nullptr;
}

NoTape::~NoTape() { g_active_tape = saved_; }

void Tape::record(const char* op, std::vector<Tensor> inputs, const Tensor& output,
                  std::function<void(TapeNode&)> backward) {
  output.impl()->node_id = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back(TapeNode{op, std::move(inputs), output, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("Tape::backward: loss must be scalar, got " +
                                shape_str(loss.shape()));
  const std::int64_t root = loss.impl()->node_id;
  if (root < 0)
    throw std::invalid_argument("Tape::backward: loss is not an output recorded on this tape");
  loss.impl()->grad.assign(1, 1.0);
  for (std::int64_t i = root; i >= 0; --i) {
    TapeNode& n = nodes_[static_cast<std::size_t>(i)];
    if (n.output.impl()->grad.empty()) continue;  // not on a path to the loss
    n.backward(n);
  }
}

const char* Tape::first_nonfinite() const {
  for (const auto& n : nodes_)
    for (double v : n.output.data())
      if (!std::isfinite(v)) return n.op;
  return nullptr;
}

// ---------------------------------------------------------------------------
// op helpers
// ---------------------------------------------------------------------------

namespace {

bool tracking(std::initializer_list<const Tensor*> ts) {
  if (!Tape::active()) return false;
  for (const Tensor* t : ts)
    if (t->requires_grad()) return true;
  return false;
}

void finish(const char* op, std::initializer_list<const Tensor*> ins, Tensor& out,
            std::function<void(TapeNode&)> bw) {
  if (!tracking(ins)) return;
  out.set_requires_grad(true);
  std::vector<Tensor> inputs;
  inputs.reserve(ins.size());
  for (const Tensor* t : ins) inputs.push_back(*t);
  Tape::active()->record(op, std::move(inputs), out, std::move(bw));
}

void accum(Tensor& t, const double* g, std::int64_t n, double scale = 1.0) {
  if (!t.requires_grad()) return;
  auto& dst = t.grad_or_alloc();
  for (std::int64_t i = 0; i < n; ++i) dst[static_cast<std::size_t>(i)] += scale * g[i];
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

// raw matmul kernels, saxpy inner loops so -O3 vectorizes them
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = a[static_cast<std::size_t>(i) * k + p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void mm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  // c(m,n) += a(m,k) * b(n,k)^T
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

void mm_tn(const double* a, const double* b, double* c, int k, int m, int n) {
  // c(m,n) += a(k,m)^T * b(k,n)
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<std::size_t>(p) * m;
    const double* bp = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

Tensor unary(const char* op, const Tensor& a, const std::function<double(double)>& f,
             const std::function<double(double, double)>& df /* (x, y) -> dy/dx */) {
  Tensor out(a.shape(), 0.0);
  const auto& x = a.data();
  auto& y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  finish(op, {&a}, out, [f, df](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    Tensor& in = n.inputs[0];
    if (!in.requires_grad()) return;
    auto& dst = in.grad_or_alloc();
    const auto& x = in.data();
    const auto& y = n.output.data();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] += g[i] * df(x[i], y[i]);
  });
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape(), 0.0);
  for (std::int64_t i = 0; i < a.size(); ++i) out.mut(i) = a[i] + b[i];
  finish("add", {&a, &b}, out, [](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    accum(n.inputs[0], g.data(), n.output.size());
    accum(n.inputs[1], g.data(), n.output.size());
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape(), 0.0);
  for (std::int64_t i = 0; i < a.size(); ++i) out.mut(i) = a[i] - b[i];
  finish("sub", {&a, &b}, out, [](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    accum(n.inputs[0], g.data(), n.output.size());
    accum(n.inputs[1], g.data(), n.output.size(), -1.0);
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape(), 0.0);
  for (std::int64_t i = 0; i < a.size(); ++i) out.mut(i) = a[i] * b[i];
  finish("mul", {&a, &b}, out, [](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    Tensor &a = n.inputs[0], &b = n.inputs[1];
    if (a.requires_grad()) {
      auto& da = a.grad_or_alloc();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[static_cast<std::int64_t>(i)];
    }
    if (b.requires_grad()) {
      auto& db = b.grad_or_alloc();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[static_cast<std::int64_t>(i)];
    }
  });
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out(a.shape(), 0.0);
  for (std::int64_t i = 0; i < a.size(); ++i) out.mut(i) = a[i] + c;
  finish("add_scalar", {&a}, out, [](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    accum(n.inputs[0], g.data(), n.output.size());
  });
  return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
  Tensor out(a.shape(), 0.0);
  for (std::int64_t i = 0; i < a.size(); ++i) out.mut(i) = a[i] * c;
  finish("mul_scalar", {&a}, out, [c](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    accum(n.inputs[0], g.data(), n.output.size(), c);
  });
  return out;
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

// ---------------------------------------------------------------------------
// unary
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      "leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_t(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_t(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log_t(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor abs_t(const Tensor& a) {
  return unary(
      "abs", a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor sqrt_t(const Tensor& a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor softplus(const Tensor& a) {
  return unary(
      "softplus", a,
      [](double x) { return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x))); },
      [](double x, double) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

// ---------------------------------------------------------------------------
// matmul family
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: dimension mismatch " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out(Shape{m, n}, 0.0);
  mm_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  finish("matmul", {&a, &b}, out, [m, k, n](TapeNode& nd) {
    const auto& g = nd.output.impl()->grad;
    Tensor &a = nd.inputs[0], &b = nd.inputs[1];
    if (a.requires_grad())  // dA += dC * B^T
      mm_nt(g.data(), b.data().data(), a.grad_or_alloc().data(), m, n, k);
    if (b.requires_grad())  // dB += A^T * dC
      mm_tn(a.data().data(), g.data(), b.grad_or_alloc().data(), m, k, n);
  });
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw std::invalid_argument("matmul_nt: dimension mismatch " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()) + "^T");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor out(Shape{m, n}, 0.0);
  mm_nt(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  finish("matmul_nt", {&a, &b}, out, [m, k, n](TapeNode& nd) {
    const auto& g = nd.output.impl()->grad;
    Tensor &a = nd.inputs[0], &b = nd.inputs[1];
    if (a.requires_grad())  // dA += dC * B
      mm_nn(g.data(), b.data().data(), a.grad_or_alloc().data(), m, n, k);
    if (b.requires_grad())  // dB += dC^T * A
      mm_tn(g.data(), a.data().data(), b.grad_or_alloc().data(), m, n, k);
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: expected rank 2");
  const int r = a.dim(0), c = a.dim(1);
  Tensor out(Shape{c, r}, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.mut(static_cast<std::int64_t>(j) * r + i) = a[static_cast<std::int64_t>(i) * c + j];
  finish("transpose", {&a}, out, [r, c](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    Tensor& a = n.inputs[0];
    if (!a.requires_grad()) return;
    auto& da = a.grad_or_alloc();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        da[static_cast<std::size_t>(i) * c + j] += g[static_cast<std::size_t>(j) * r + i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// softmax over the last axis of a matrix (or a flat vector treated as one row)
// ---------------------------------------------------------------------------

Tensor softmax_rows(const Tensor& a) {
  const int rank = a.rank();
  const int n = a.dim(rank - 1);
  const std::int64_t rows = a.size() / n;
  Tensor out(a.shape(), 0.0);
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* x = a.data().data() + r * n;
    double* y = out.data().data() + r * n;
    double mx = x[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      y[i] = std::exp(x[i] - mx);
      s += y[i];
    }
    for (int i = 0; i < n; ++i) y[i] /= s;
  }
  finish("softmax", {&a}, out, [n, rows](TapeNode& nd) {
    const auto& g = nd.output.impl()->grad;
    Tensor& a = nd.inputs[0];
    if (!a.requires_grad()) return;
    auto& da = a.grad_or_alloc();
    const auto& y = nd.output.data();
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* yr = y.data() + r * n;
      const double* gr = g.data() + r * n;
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += yr[i] * gr[i];
      double* dr = da.data() + r * n;
      for (int i = 0; i < n; ++i) dr[i] += yr[i] * (gr[i] - dot);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a[i];
  Tensor out(Shape{1}, {s});
  finish("sum_all", {&a}, out, [](TapeNode& n) {
    const double g = n.output.impl()->grad[0];
    Tensor& a = n.inputs[0];
    if (!a.requires_grad()) return;
    auto& da = a.grad_or_alloc();
    for (auto& v : da) v += g;
  });
  return out;
}

Tensor mean_all(const Tensor& a) { return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.size())); }

static void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected rank 2, got " + shape_str(a.shape()));
}

Tensor row_sum(const Tensor& a) {
  require_matrix("row_sum", a);
  const int r = a.dim(0), c = a.dim(1);
  Tensor out(Shape{r, 1}, 0.0);
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += a[static_cast<std::int64_t>(i) * c + j];
    out.mut(i) = s;
  }
  finish("row_sum", {&a}, out, [r, c](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    Tensor& a = n.inputs[0];
    if (!a.requires_grad()) return;
    auto& da = a.grad_or_alloc();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) da[static_cast<std::size_t>(i) * c + j] += g[static_cast<std::size_t>(i)];
  });
  return out;
}

Tensor col_sum(const Tensor& a) {
  require_matrix("col_sum", a);
  const int r = a.dim(0), c = a.dim(1);
  Tensor out(Shape{1, c}, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.mut(j) += a[static_cast<std::int64_t>(i) * c + j];
  finish("col_sum", {&a}, out, [r, c](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    Tensor& a = n.inputs[0];
    if (!a.requires_grad()) return;
    auto& da = a.grad_or_alloc();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) da[static_cast<std::size_t>(i) * c + j] += g[static_cast<std::size_t>(j)];
  });
  return out;
}

Tensor row_mean(const Tensor& a) { return mul_scalar(row_sum(a), 1.0 / a.dim(1)); }
Tensor col_mean(const Tensor& a) { return mul_scalar(col_sum(a), 1.0 / a.dim(0)); }

// ---------------------------------------------------------------------------
// broadcasts
// ---------------------------------------------------------------------------

namespace {

enum class BcOp { Add, Sub, Mul, Div };

Tensor bc_row(const char* name, BcOp op, const Tensor& x, const Tensor& v) {
  require_matrix(name, x);
  if (v.rank() != 2 || v.dim(0) != 1 || v.dim(1) != x.dim(1))
    throw std::invalid_argument(std::string(name) + ": broadcast shape mismatch " +
                                shape_str(x.shape()) + " vs " + shape_str(v.shape()));
  const int r = x.dim(0), c = x.dim(1);
  Tensor out(x.shape(), 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      const double a = x[static_cast<std::int64_t>(i) * c + j], b = v[j];
      double y = 0.0;
      switch (op) {
        case BcOp::Add: y = a + b; break;
        case BcOp::Sub: y = a - b; break;
        case BcOp::Mul: y = a * b; break;
        case BcOp::Div: y = a / b; break;
      }
      out.mut(static_cast<std::int64_t>(i) * c + j) = y;
    }
  finish(name, {&x, &v}, out, [op, r, c](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    Tensor &x = n.inputs[0], &v = n.inputs[1];
    if (x.requires_grad()) {
      auto& dx = x.grad_or_alloc();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * c + j;
          switch (op) {
            case BcOp::Add:
            case BcOp::Sub: dx[idx] += g[idx]; break;
            case BcOp::Mul: dx[idx] += g[idx] * v[j]; break;
            case BcOp::Div: dx[idx] += g[idx] / v[j]; break;
          }
        }
    }
    if (v.requires_grad()) {
      auto& dv = v.grad_or_alloc();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * c + j;
          switch (op) {
            case BcOp::Add: dv[static_cast<std::size_t>(j)] += g[idx]; break;
            case BcOp::Sub: dv[static_cast<std::size_t>(j)] -= g[idx]; break;
            case BcOp::Mul: dv[static_cast<std::size_t>(j)] += g[idx] * x[static_cast<std::int64_t>(i) * c + j]; break;
            case BcOp::Div:
              dv[static_cast<std::size_t>(j)] -=
                  g[idx] * x[static_cast<std::int64_t>(i) * c + j] / (v[j] * v[j]);
              break;
          }
        }
    }
  });
  return out;
}

Tensor bc_col(const char* name, BcOp op, const Tensor& x, const Tensor& v) {
  require_matrix(name, x);
  if (v.rank() != 2 || v.dim(1) != 1 || v.dim(0) != x.dim(0))
    throw std::invalid_argument(std::string(name) + ": broadcast shape mismatch " +
                                shape_str(x.shape()) + " vs " + shape_str(v.shape()));
  const int r = x.dim(0), c = x.dim(1);
  Tensor out(x.shape(), 0.0);
  for (int i = 0; i < r; ++i) {
    const double b = v[i];
    for (int j = 0; j < c; ++j) {
      const double a = x[static_cast<std::int64_t>(i) * c + j];
      double y = 0.0;
      switch (op) {
        case BcOp::Add: y = a + b; break;
        case BcOp::Sub: y = a - b; break;
        case BcOp::Mul: y = a * b; break;
        case BcOp::Div: y = a / b; break;
      }
      out.mut(static_cast<std::int64_t>(i) * c + j) = y;
    }
  }
  finish(name, {&x, &v}, out, [op, r, c](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    Tensor &x = n.inputs[0], &v = n.inputs[1];
    if (x.requires_grad()) {
      auto& dx = x.grad_or_alloc();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * c + j;
          switch (op) {
            case BcOp::Add:
            case BcOp::Sub: dx[idx] += g[idx]; break;
            case BcOp::Mul: dx[idx] += g[idx] * v[i]; break;
            case BcOp::Div: dx[idx] += g[idx] / v[i]; break;
          }
        }
    }
    if (v.requires_grad()) {
      auto& dv = v.grad_or_alloc();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * c + j;
          switch (op) {
            case BcOp::Add: dv[static_cast<std::size_t>(i)] += g[idx]; break;
            case BcOp::Sub: dv[static_cast<std::size_t>(i)] -= g[idx]; break;
            case BcOp::Mul: dv[static_cast<std::size_t>(i)] += g[idx] * x[static_cast<std::int64_t>(i) * c + j]; break;
            case BcOp::Div:
              dv[static_cast<std::size_t>(i)] -=
                  g[idx] * x[static_cast<std::int64_t>(i) * c + j] / (v[i] * v[i]);
              break;
          }
        }
    }
  });
  return out;
}

}  // namespace

Tensor bc_row_add(const Tensor& x, const Tensor& v) { return bc_row("bc_row_add", BcOp::Add, x, v); }
Tensor bc_row_sub(const Tensor& x, const Tensor& v) { return bc_row("bc_row_sub", BcOp::Sub, x, v); }
Tensor bc_row_mul(const Tensor& x, const Tensor& v) { return bc_row("bc_row_mul", BcOp::Mul, x, v); }
Tensor bc_row_div(const Tensor& x, const Tensor& v) { return bc_row("bc_row_div", BcOp::Div, x, v); }
Tensor bc_col_add(const Tensor& x, const Tensor& v) { return bc_col("bc_col_add", BcOp::Add, x, v); }
Tensor bc_col_sub(const Tensor& x, const Tensor& v) { return bc_col("bc_col_sub", BcOp::Sub, x, v); }
Tensor bc_col_mul(const Tensor& x, const Tensor& v) { return bc_col("bc_col_mul", BcOp::Mul, x, v); }
Tensor bc_col_div(const Tensor& x, const Tensor& v) { return bc_col("bc_col_div", BcOp::Div, x, v); }

// ---------------------------------------------------------------------------
// concat / slice / reshape
// ---------------------------------------------------------------------------

Tensor concat0(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat0: empty list");
  Shape tail(xs[0].shape().begin() + 1, xs[0].shape().end());
  int total = 0;
  for (const auto& x : xs) {
    Shape t(x.shape().begin() + 1, x.shape().end());
    if (t != tail)
      throw std::invalid_argument("concat0: trailing shape mismatch " + shape_str(xs[0].shape()) +
                                  " vs " + shape_str(x.shape()));
    total += x.dim(0);
  }
  Shape os = xs[0].shape();
  os[0] = total;
  Tensor out(os, 0.0);
  std::int64_t off = 0;
  for (const auto& x : xs) {
    std::copy(x.data().begin(), x.data().end(), out.data().begin() + off);
    off += x.size();
  }
  bool track = false;
  for (const auto& x : xs) track = track || x.requires_grad();
  if (Tape::active() && track) {
    out.set_requires_grad(true);
    Tape::active()->record("concat0", xs, out, [](TapeNode& n) {
      const auto& g = n.output.impl()->grad;
      std::int64_t off = 0;
      for (auto& in : n.inputs) {
        accum(in, g.data() + off, in.size());
        off += in.size();
      }
    });
  }
  return out;
}

Tensor slice0(const Tensor& x, int start, int len) {
  if (start < 0 || len <= 0 || start + len > x.dim(0))
    throw std::invalid_argument("slice0: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of bounds for " +
                                shape_str(x.shape()));
  const std::int64_t inner = x.size() / x.dim(0);
  Shape os = x.shape();
  os[0] = len;
  Tensor out(os, 0.0);
  std::copy(x.data().begin() + start * inner, x.data().begin() + (start + len) * inner,
            out.data().begin());
  finish("slice0", {&x}, out, [start, inner](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    Tensor& x = n.inputs[0];
    if (!x.requires_grad()) return;
    auto& dx = x.grad_or_alloc();
    for (std::size_t i = 0; i < g.size(); ++i) dx[static_cast<std::size_t>(start * inner) + i] += g[i];
  });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty list");
  const int r = xs[0].dim(0);
  int total = 0;
  for (const auto& x : xs) {
    require_matrix("concat_cols", x);
    if (x.dim(0) != r) throw std::invalid_argument("concat_cols: row count mismatch");
    total += x.dim(1);
  }
  Tensor out(Shape{r, total}, 0.0);
  int off = 0;
  for (const auto& x : xs) {
    const int c = x.dim(1);
    for (int i = 0; i < r; ++i)
      std::copy(x.data().begin() + static_cast<std::int64_t>(i) * c,
                x.data().begin() + static_cast<std::int64_t>(i + 1) * c,
                out.data().begin() + static_cast<std::int64_t>(i) * total + off);
    off += c;
  }
  bool track = false;
  for (const auto& x : xs) track = track || x.requires_grad();
  if (Tape::active() && track) {
    out.set_requires_grad(true);
    Tape::active()->record("concat_cols", xs, out, [r, total](TapeNode& n) {
      const auto& g = n.output.impl()->grad;
      int off = 0;
      for (auto& in : n.inputs) {
        const int c = in.dim(1);
        if (in.requires_grad()) {
          auto& d = in.grad_or_alloc();
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
              d[static_cast<std::size_t>(i) * c + j] += g[static_cast<std::size_t>(i) * total + off + j];
        }
        off += c;
      }
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int start, int len) {
  require_matrix("slice_cols", x);
  if (start < 0 || len <= 0 || start + len > x.dim(1))
    throw std::invalid_argument("slice_cols: range out of bounds for " + shape_str(x.shape()));
  const int r = x.dim(0), c = x.dim(1);
  Tensor out(Shape{r, len}, 0.0);
  for (int i = 0; i < r; ++i)
    std::copy(x.data().begin() + static_cast<std::int64_t>(i) * c + start,
              x.data().begin() + static_cast<std::int64_t>(i) * c + start + len,
              out.data().begin() + static_cast<std::int64_t>(i) * len);
  finish("slice_cols", {&x}, out, [start, len, r, c](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    Tensor& x = n.inputs[0];
    if (!x.requires_grad()) return;
    auto& dx = x.grad_or_alloc();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < len; ++j)
        dx[static_cast<std::size_t>(i) * c + start + j] += g[static_cast<std::size_t>(i) * len + j];
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(shape));
  Tensor out(std::move(shape), x.data());
  finish("reshape", {&x}, out, [](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    accum(n.inputs[0], g.data(), n.output.size());
  });
  return out;
}

Tensor detach(const Tensor& x) { return Tensor(x.shape(), x.data()); }

// ---------------------------------------------------------------------------
// conv2d (im2col), conv1d, pooling, upsampling
// ---------------------------------------------------------------------------

namespace {

void im2col(const double* x, int ci, int h, int w, int ks, int stride, int pad, int ho, int wo,
            double* col) {
  // col layout: (ci*ks*ks, ho*wo)
  const int cols = ho * wo;
  for (int c = 0; c < ci; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int kh = 0; kh < ks; ++kh)
      for (int kw = 0; kw < ks; ++kw) {
        double* row = col + (static_cast<std::size_t>(c) * ks * ks + kh * ks + kw) * cols;
        for (int oh = 0; oh < ho; ++oh) {
          const int ih = oh * stride - pad + kh;
          double* r = row + static_cast<std::size_t>(oh) * wo;
          if (ih < 0 || ih >= h) {
            std::fill(r, r + wo, 0.0);
            continue;
          }
          const double* xrow = xc + static_cast<std::size_t>(ih) * w;
          for (int ow = 0; ow < wo; ++ow) {
            const int iw = ow * stride - pad + kw;
            r[ow] = (iw >= 0 && iw < w) ? xrow[iw] : 0.0;
          }
        }
      }
  }
}

void col2im(const double* col, int ci, int h, int w, int ks, int stride, int pad, int ho, int wo,
            double* x /* accumulated */) {
  const int cols = ho * wo;
  for (int c = 0; c < ci; ++c) {
    double* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int kh = 0; kh < ks; ++kh)
      for (int kw = 0; kw < ks; ++kw) {
        const double* row = col + (static_cast<std::size_t>(c) * ks * ks + kh * ks + kw) * cols;
        for (int oh = 0; oh < ho; ++oh) {
          const int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= h) continue;
          double* xrow = xc + static_cast<std::size_t>(ih) * w;
          const double* r = row + static_cast<std::size_t>(oh) * wo;
          for (int ow = 0; ow < wo; ++ow) {
            const int iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < w) xrow[iw] += r[ow];
          }
        }
      }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int pad) {
  if (x.rank() != 3 || k.rank() != 4)
    throw std::invalid_argument("conv2d: expected input (C,H,W) and kernel (Co,Ci,s,s), got " +
                                shape_str(x.shape()) + " and " + shape_str(k.shape()));
  const int ci = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int co = k.dim(0), kci = k.dim(1), ks = k.dim(2);
  if (k.dim(3) != ks || (ks != 1 && ks != 3 && ks != 5 && ks != 7))
    throw std::invalid_argument("conv2d: kernel must be square with size in {1,3,5,7}, got " +
                                shape_str(k.shape()));
  if (kci != ci)
    throw std::invalid_argument("conv2d: channel mismatch, input " + shape_str(x.shape()) +
                                " kernel " + shape_str(k.shape()));
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
  if (h + 2 * pad < ks || w + 2 * pad < ks ||
      (h + 2 * pad - ks) % stride != 0 || (w + 2 * pad - ks) % stride != 0)
    throw std::invalid_argument("conv2d: non-integral output size for input " +
                                shape_str(x.shape()) + " kernel " + std::to_string(ks) +
                                " stride " + std::to_string(stride) + " pad " + std::to_string(pad));
  const int ho = (h + 2 * pad - ks) / stride + 1;
  const int wo = (w + 2 * pad - ks) / stride + 1;

  std::vector<double> col(static_cast<std::size_t>(ci) * ks * ks * ho * wo);
  im2col(x.data().data(), ci, h, w, ks, stride, pad, ho, wo, col.data());
  Tensor out(Shape{co, ho, wo}, 0.0);
  mm_nn(k.data().data(), col.data(), out.data().data(), co, ci * ks * ks, ho * wo);

  finish("conv2d", {&x, &k}, out, [ci, h, w, co, ks, stride, pad, ho, wo](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    Tensor &x = n.inputs[0], &k = n.inputs[1];
    const int patch = ci * ks * ks, cols = ho * wo;
    std::vector<double> col(static_cast<std::size_t>(patch) * cols);
    im2col(x.data().data(), ci, h, w, ks, stride, pad, ho, wo, col.data());
    if (k.requires_grad())  // dK += dY * col^T
      mm_nt(g.data(), col.data(), k.grad_or_alloc().data(), co, cols, patch);
    if (x.requires_grad()) {
      std::vector<double> dcol(static_cast<std::size_t>(patch) * cols, 0.0);
      mm_tn(k.data().data(), g.data(), dcol.data(), co, patch, cols);
      col2im(dcol.data(), ci, h, w, ks, stride, pad, ho, wo, x.grad_or_alloc().data());
    }
  });
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& k, int pad) {
  if (x.rank() != 2 || k.rank() != 3)
    throw std::invalid_argument("conv1d: expected input (C,T) and kernel (Co,Ci,s)");
  const int ci = x.dim(0), t = x.dim(1);
  const int co = k.dim(0), kci = k.dim(1), ks = k.dim(2);
  if (kci != ci) throw std::invalid_argument("conv1d: channel mismatch");
  const int to = t + 2 * pad - ks + 1;
  if (to <= 0) throw std::invalid_argument("conv1d: sequence too short");
  Tensor out(Shape{co, to}, 0.0);
  for (int o = 0; o < co; ++o)
    for (int c = 0; c < ci; ++c)
      for (int j = 0; j < ks; ++j) {
        const double kv = k[(static_cast<std::int64_t>(o) * ci + c) * ks + j];
        for (int p = 0; p < to; ++p) {
          const int ip = p - pad + j;
          if (ip >= 0 && ip < t) out.mut(static_cast<std::int64_t>(o) * to + p) += kv * x[static_cast<std::int64_t>(c) * t + ip];
        }
      }
  finish("conv1d", {&x, &k}, out, [ci, t, co, ks, pad, to](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    Tensor &x = n.inputs[0], &k = n.inputs[1];
    for (int o = 0; o < co; ++o)
      for (int c = 0; c < ci; ++c)
        for (int j = 0; j < ks; ++j) {
          const std::size_t kidx = (static_cast<std::size_t>(o) * ci + c) * ks + j;
          for (int p = 0; p < to; ++p) {
            const int ip = p - pad + j;
            if (ip < 0 || ip >= t) continue;
            const double gv = g[static_cast<std::size_t>(o) * to + p];
            if (k.requires_grad()) k.grad_or_alloc()[kidx] += gv * x[static_cast<std::int64_t>(c) * t + ip];
            if (x.requires_grad()) x.grad_or_alloc()[static_cast<std::size_t>(c) * t + ip] += gv * k[static_cast<std::int64_t>(kidx)];
          }
        }
  });
  return out;
}

Tensor avg_pool2(const Tensor& x) {
  if (x.rank() != 3) throw std::invalid_argument("avg_pool2: expected (C,H,W)");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 || w % 2)
    throw std::invalid_argument("avg_pool2: spatial dims must be even, got " + shape_str(x.shape()));
  const int ho = h / 2, wo = w / 2;
  Tensor out(Shape{c, ho, wo}, 0.0);
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j) {
        const std::int64_t base = (static_cast<std::int64_t>(ch) * h + 2 * i) * w + 2 * j;
        out.mut((static_cast<std::int64_t>(ch) * ho + i) * wo + j) =
            0.25 * (x[base] + x[base + 1] + x[base + w] + x[base + w + 1]);
      }
  finish("avg_pool2", {&x}, out, [c, h, w, ho, wo](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    Tensor& x = n.inputs[0];
    if (!x.requires_grad()) return;
    auto& dx = x.grad_or_alloc();
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          const double gv = 0.25 * g[(static_cast<std::size_t>(ch) * ho + i) * wo + j];
          const std::size_t base = (static_cast<std::size_t>(ch) * h + 2 * i) * w + 2 * j;
          dx[base] += gv;
          dx[base + 1] += gv;
          dx[base + w] += gv;
          dx[base + w + 1] += gv;
        }
  });
  return out;
}

Tensor upsample2(const Tensor& x) {
  if (x.rank() != 3) throw std::invalid_argument("upsample2: expected (C,H,W)");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out(Shape{c, 2 * h, 2 * w}, 0.0);
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double v = x[(static_cast<std::int64_t>(ch) * h + i) * w + j];
        const std::int64_t base = (static_cast<std::int64_t>(ch) * 2 * h + 2 * i) * 2 * w + 2 * j;
        out.mut(base) = v;
        out.mut(base + 1) = v;
        out.mut(base + 2 * w) = v;
        out.mut(base + 2 * w + 1) = v;
      }
  finish("upsample2", {&x}, out, [c, h, w](TapeNode& n) {
    const auto& g = n.output.impl()->grad;
    Tensor& x = n.inputs[0];
    if (!x.requires_grad()) return;
    auto& dx = x.grad_or_alloc();
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const std::size_t base = (static_cast<std::size_t>(ch) * 2 * h + 2 * i) * 2 * w + 2 * j;
          dx[(static_cast<std::size_t>(ch) * h + i) * w + j] +=
              g[base] + g[base + 1] + g[base + 2 * w] + g[base + 2 * w + 1];
        }
  });
  return out;
}

// ---------------------------------------------------------------------------
// normalization composites
// ---------------------------------------------------------------------------

Tensor instance_norm(const Tensor& x, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("instance_norm: eps must be positive");
  if (x.rank() < 2) throw std::invalid_argument("instance_norm: expected (C,...)");
  const int c = x.dim(0);
  const int inner = static_cast<int>(x.size() / c);
  Tensor flat = reshape(x, Shape{c, inner});
  Tensor mu = row_mean(flat);                       // (c,1)
  Tensor centered = bc_col_sub(flat, mu);           // x - mu
  Tensor var = row_mean(square(centered));          // population variance
  Tensor s = sqrt_t(add_scalar(var, eps));
  return reshape(bc_col_div(centered, s), x.shape());
}

Tensor instance_norm_cols(const Tensor& x, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("instance_norm_cols: eps must be positive");
  require_matrix("instance_norm_cols", x);
  Tensor mu = col_mean(x);             // (1,d)
  Tensor centered = bc_row_sub(x, mu);
  Tensor var = col_mean(square(centered));
  Tensor s = sqrt_t(add_scalar(var, eps));
  return bc_row_div(centered, s);
}

Tensor adain(const Tensor& content, const Tensor& style, double eps) {
  require_same_shape("adain", content, style);
  Tensor mu_c = col_mean(content);
  Tensor cen = bc_row_sub(content, mu_c);
  Tensor s_c = sqrt_t(add_scalar(col_mean(square(cen)), eps));
  Tensor mu_s = col_mean(style);
  Tensor cen_s = bc_row_sub(style, mu_s);
  Tensor s_s = sqrt_t(add_scalar(col_mean(square(cen_s)), eps));
  return bc_row_add(bc_row_mul(bc_row_div(cen, s_c), s_s), mu_s);
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

std::vector<Tensor> attention_weights(const Tensor& q, const Tensor& k, int n_heads) {
  require_matrix("attention", q);
  require_matrix("attention", k);
  const int d = q.dim(1);
  if (k.dim(1) != d)
    throw std::invalid_argument("attention: width mismatch " + shape_str(q.shape()) + " vs " +
                                shape_str(k.shape()));
  if (n_heads < 1 || d % n_heads != 0)
    throw std::invalid_argument("attention: token width " + std::to_string(d) +
                                " not divisible by " + std::to_string(n_heads) + " heads");
  const int dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> weights;
  weights.reserve(static_cast<std::size_t>(n_heads));
  for (int hd = 0; hd < n_heads; ++hd) {
    Tensor qh = slice_cols(q, hd * dh, dh);
    Tensor kh = slice_cols(k, hd * dh, dh);
    Tensor w = softmax_rows(mul_scalar(matmul_nt(qh, kh), scale));
    weights.push_back(w);
  }
  return weights;
}

AttnProbe& attn_probe() {
  static thread_local AttnProbe probe;
  return probe;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads) {
  require_matrix("attention", v);
  if (v.dim(0) != k.dim(0))
    throw std::invalid_argument("attention: K/V token count mismatch " + shape_str(k.shape()) +
                                " vs " + shape_str(v.shape()));
  if (v.dim(1) % n_heads != 0)
    throw std::invalid_argument("attention: value width not divisible by heads");
  const int dv = v.dim(1) / n_heads;
  std::vector<Tensor> weights = attention_weights(q, k, n_heads);
  if (attn_probe().enabled) {
    for (const auto& w : weights) {
      const int rows = w.dim(0), cols = w.dim(1);
      for (int i = 0; i < rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < cols; ++j) s += w[static_cast<std::int64_t>(i) * cols + j];
        attn_probe().max_row_sum_err = std::max(attn_probe().max_row_sum_err, std::fabs(s - 1.0));
      }
      attn_probe().rows_seen += rows;
    }
  }
  std::vector<Tensor> heads;
  heads.reserve(weights.size());
  for (int hd = 0; hd < n_heads; ++hd) {
    Tensor vh = slice_cols(v, hd * dv, dv);
    heads.push_back(matmul(weights[static_cast<std::size_t>(hd)], vh));
  }
  return concat_cols(heads);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].data().size(), 0.0);
      state.v[i].assign(params[i].data().size(), 0.0);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    if (grads[i].size() != params[i].data().size())
      throw std::invalid_argument("adam_step: gradient size mismatch for parameter " +
                                  std::to_string(i) + ": " + std::to_string(grads[i].size()) +
                                  " vs " + std::to_string(params[i].data().size()));
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      const double mh = m[j] / bc1;
      const double vh = v[j] / bc2;
      p[j] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

void AdamOptimizer::step() {
  std::vector<std::vector<double>> grads;
  grads.reserve(params_.size());
  for (auto& p : params_) grads.push_back(p.grad_vector());
  adam_step(params_, grads, state_, lr_, beta1_, beta2_, eps_);
  zero_grad();
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

// ---------------------------------------------------------------------------
// grad_check
// ---------------------------------------------------------------------------

double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                  std::vector<Tensor> inputs, double eps) {
  if (eps < 1e-7 || eps > 1e-3)
    throw std::invalid_argument("grad_check: eps must be in [1e-7, 1e-3]");
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = f(inputs);
    if (!std::isfinite(loss.value())) {
      const char* op = tape.first_nonfinite();
      throw std::runtime_error(std::string("grad_check: non-finite value in op '") +
                               (op ? op : "<input>") + "'");
    }
    tape.backward(loss);
    for (auto& t : inputs) analytic.push_back(t.grad_vector());
  }
  double max_err = 0.0;
  NoTape off;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& data = inputs[ti].data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double saved = data[j];
      data[j] = saved + eps;
      const double up = f(inputs).value();
      data[j] = saved - eps;
      const double dn = f(inputs).value();
      data[j] = saved;
      if (!std::isfinite(up) || !std::isfinite(dn))
        throw std::runtime_error("grad_check: non-finite value in finite-difference evaluation");
      const double num = (up - dn) / (2.0 * eps);
      const double ana = analytic[ti][j];
      const double err = std::fabs(ana - num) / std::max({1.0, std::fabs(ana), std::fabs(num)});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace iepg
