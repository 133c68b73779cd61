#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace iepg {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// ---------------------------------------------------------------------------
// Rng: mt19937_64 plus hand-rolled distribution transforms. std:: distributions
// are implementation-defined, so all draws go through these to keep streams
// identical across standard libraries.
// ---------------------------------------------------------------------------
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller, no cached spare
  double normal();

  // uniform integer in [0, n)
  std::int64_t randint(std::int64_t n);

  // independent deterministic sub-stream
  Rng child(std::uint64_t salt) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// Tensor: dense row-major double tensor, shared-node semantics so the tape can
// hold stable references. grad is lazily allocated; empty means zero.
// ---------------------------------------------------------------------------
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;
  std::int64_t node_id = -1;  // index on the recording tape, -1 for leaves
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, double fill, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, {v}); }
  static Tensor randu(Rng& rng, Shape shape, double lo, double hi);
  static Tensor randn(Rng& rng, Shape shape);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  double operator[](std::int64_t i) const { return impl_->data[static_cast<std::size_t>(i)]; }
  double& mut(std::int64_t i) { return impl_->data[static_cast<std::size_t>(i)]; }

  // scalar access, throws unless size()==1
  double value() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    impl_->requires_grad = b;
    return *this;
  }

  // gradient as a dense array; zeros if backward never reached this tensor
  std::vector<double> grad_vector() const;
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad() { impl_->grad.clear(); }
  std::vector<double>& grad_or_alloc();

  TensorImpl* impl() const { return impl_.get(); }
  bool same_as(const Tensor& o) const { return impl_ == o.impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Tape: ordered op records. Creation order is topological by construction;
// backward replays in reverse and touches each node at most once.
// ---------------------------------------------------------------------------
struct TapeNode {
  const char* op;
  std::vector<Tensor> inputs;
  Tensor output;
  std::function<void(TapeNode&)> backward;
};

class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(const char* op, std::vector<Tensor> inputs, const Tensor& output,
              std::function<void(TapeNode&)> backward);

  // reverse-mode sweep from a scalar loss; accumulates into leaf grads
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  const TapeNode& node(std::size_t i) const { return nodes_[i]; }

  // name of the first op with a non-finite output, or nullptr
  const char* first_nonfinite() const;

 private:
  std::vector<TapeNode> nodes_;
  Tape* prev_ = nullptr;
};

// RAII pause for oracle evaluations that must not record
class NoTape {
 public:
  NoTape();
  ~NoTape();

 private:
  Tape* saved_;
};

// ---------------------------------------------------------------------------
// Ops. All pure; gradients recorded when a tape is active and any input
// requires grad.
// ---------------------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor sigmoid(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor abs_t(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor square(const Tensor& a);
Tensor softplus(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);     // (m,k)x(k,n)
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // (m,k)x(n,k)^T -> (m,n)
Tensor transpose(const Tensor& a);

Tensor softmax_rows(const Tensor& a);  // last axis of a matrix, stabilized

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor row_sum(const Tensor& a);  // (r,c) -> (r,1)
Tensor col_sum(const Tensor& a);  // (r,c) -> (1,c)
Tensor row_mean(const Tensor& a);
Tensor col_mean(const Tensor& a);

// broadcast a (1,c) row across all rows / a (r,1) column across all columns
Tensor bc_row_add(const Tensor& x, const Tensor& v);
Tensor bc_row_sub(const Tensor& x, const Tensor& v);
Tensor bc_row_mul(const Tensor& x, const Tensor& v);
Tensor bc_row_div(const Tensor& x, const Tensor& v);
Tensor bc_col_add(const Tensor& x, const Tensor& v);
Tensor bc_col_sub(const Tensor& x, const Tensor& v);
Tensor bc_col_mul(const Tensor& x, const Tensor& v);
Tensor bc_col_div(const Tensor& x, const Tensor& v);

Tensor concat0(const std::vector<Tensor>& xs);
Tensor slice0(const Tensor& x, int start, int len);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor slice_cols(const Tensor& x, int start, int len);
Tensor reshape(const Tensor& x, Shape shape);
Tensor detach(const Tensor& x);

// conv2d: cross-correlation, zero padding, square odd kernels {1,3,5,7};
// output size (H + 2 pad - s) / stride + 1 must be integral
Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int pad);
Tensor conv1d(const Tensor& x, const Tensor& k, int pad);  // (C,T) kernels (Co,Ci,s)
Tensor avg_pool2(const Tensor& x);   // (C,H,W) -> (C,H/2,W/2), H,W even
Tensor upsample2(const Tensor& x);   // nearest neighbour x2

Tensor instance_norm(const Tensor& x, double eps = 1e-5);        // (C,...) per channel
Tensor instance_norm_cols(const Tensor& x, double eps = 1e-5);   // (n,d) per column

// multi-head scaled-dot attention on pre-projected token matrices.
// Q:(nq,d) K:(nk,d) V:(nk,d); heads concatenated, no output projection.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads);
std::vector<Tensor> attention_weights(const Tensor& q, const Tensor& k, int n_heads);

// adaptive instance normalization: renormalize content's per-channel token
// statistics to style's. Token matrices (n,d), channels are columns.
Tensor adain(const Tensor& content, const Tensor& style, double eps = 1e-12);

// probe for attention row-normalization checks across whole-model forwards
struct AttnProbe {
  bool enabled = false;
  double max_row_sum_err = 0.0;
  std::int64_t rows_seen = 0;
  void reset() { max_row_sum_err = 0.0; rows_seen = 0; }
};
AttnProbe& attn_probe();

// ---------------------------------------------------------------------------
// Adam with bias correction; update uses m_hat / (sqrt(v_hat) + eps).
// ---------------------------------------------------------------------------
struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, double lr, double beta1 = 0.5, double beta2 = 0.999,
               double eps = 1e-5);

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, double lr, double beta1 = 0.5,
                double beta2 = 0.999, double eps = 1e-5)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step();       // applies param.grad, then clears grads
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
  double lr_, beta1_, beta2_, eps_;
};

// ---------------------------------------------------------------------------
// grad_check: max over coordinates of |analytic - numeric| /
// max(1, |analytic|, |numeric|) against central differences.
// ---------------------------------------------------------------------------
double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                  std::vector<Tensor> inputs, double eps = 1e-5);

}  // namespace iepg
